"""Small deterministic numerical kernels: quadrature, root finding, 1D search.

All quadrature in the library is composite trapezoid on explicit grids, and
scalar equations are solved by plain bisection so results are bit-stable
across platforms.
"""
import numpy as np

from .errors import ConvergenceError

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0  # golden ratio conjugate


def trapezoid(y, x):
    """Composite trapezoid of samples ``y`` over grid ``x`` (last axis)."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.trapezoid(y, x, axis=-1)


def cumtrapz(y, x):
    """Cumulative trapezoid along the last axis, anchored at 0 on the first node."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    dx = np.diff(x)
    seg = 0.5 * (y[..., 1:] + y[..., :-1]) * dx
    out = np.zeros(y.shape, dtype=float)
    out[..., 1:] = np.cumsum(seg, axis=-1)
    return out


def bisect(f, lo, hi, xtol=1e-14, max_iter=200):
    """Root of a scalar function by bisection on a sign-changing bracket."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ConvergenceError(
            f"no sign change on [{lo:.6g}, {hi:.6g}] (f={flo:.3g}, {fhi:.3g})"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0 or (hi - lo) < xtol:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def golden_max(f, lo, hi, xtol=1e-10, max_iter=200):
    """Maximize a scalar function on [lo, hi] by golden-section search.

    Returns (x, f(x)). Exact only for unimodal f; callers bracket the
    maximizer with a grid scan first.
    """
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < xtol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def grid_then_golden_max(f, lo, hi, grid_size, xtol=1e-10):
    """Global 1D maximization: dense scan, then golden-section refinement.

    Returns (x_star, value, grid_xs, grid_vals) so callers can audit for
    competing local maxima.
    """
    xs = np.linspace(lo, hi, grid_size)
    vals = np.array([f(x) for x in xs])
    i = int(np.argmax(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, grid_size - 1)]
    x_star, v_star = golden_max(f, a, b, xtol=xtol)
    if vals[i] > v_star:
        x_star, v_star = xs[i], vals[i]
    return x_star, v_star, xs, vals


def expand_bracket_increasing(f, target, hi0=1.0, max_doublings=300):
    """Find hi with f(hi) >= target for an increasing f starting from hi0."""
    hi = float(hi0)
    for _ in range(max_doublings):
        if f(hi) >= target:
            return hi
        hi *= 2.0
    raise ConvergenceError(f"could not bracket target {target:.6g} by doubling")


def interp_linear(x, xp, fp):
    """np.interp with flat extrapolation, kept as one call site."""
    return np.interp(x, xp, fp)
