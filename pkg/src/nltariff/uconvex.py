"""Generalized conjugation with respect to the consumer utility kernel.

The transform of a price schedule is the indirect utility surface and vice
versa. Both directions are computed as exact maxima over finite grids, so
this module is a verifier: closed forms live in the solver modules, and the
grid transforms certify them up to O(grid step) under Lipschitz continuity.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams

CONVEXITY_REL_TOL = 1e-9   # slack on second differences, scaled by local slope size


@dataclass(frozen=True, eq=False)
class SampledFunctionOfType:
    """Values q(t_i, x_j) on a strictly increasing x-grid in [0,1]."""

    x_grid: np.ndarray
    values: np.ndarray  # shape (n_times, n_x)

    def __post_init__(self):
        x = np.asarray(self.x_grid, dtype=float)
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(np.diff(x) <= 0):
            raise InvalidParams("x_grid", "grid must be strictly increasing")
        if x[0] < -1e-12 or x[-1] > 1.0 + 1e-12:
            raise InvalidParams("x_grid", "grid must lie in [0,1]")
        if v.shape[1] != x.size or not np.all(np.isfinite(v)):
            raise InvalidParams("values", "need finite values, one row per time node")
        object.__setattr__(self, "x_grid", x)
        object.__setattr__(self, "values", v)

    def forward_slopes(self):
        """Per-time forward differences, the derivative proxy on the grid."""
        return np.diff(self.values, axis=1) / np.diff(self.x_grid)


@dataclass(frozen=True, eq=False)
class SampledFunctionOfConsumption:
    """Values q(t_i, c_j) on a strictly increasing consumption grid."""

    c_grid: np.ndarray
    values: np.ndarray  # shape (n_times, n_c)

    def __post_init__(self):
        c = np.asarray(self.c_grid, dtype=float)
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(np.diff(c) <= 0):
            raise InvalidParams("c_grid", "grid must be strictly increasing")
        if v.shape[1] != c.size or not np.all(np.isfinite(v)):
            raise InvalidParams("values", "need finite values, one row per time node")
        object.__setattr__(self, "c_grid", c)
        object.__setattr__(self, "values", v)


def default_c_grid(params, c_min=1e-4, c_max=1e3, size=513):
    """Consumption grid suited to the utility branch.

    gamma < 0 needs geometric spacing (utility singular at 0); gamma in (0,1)
    gets a linear grid that includes zero consumption.
    """
    if params.gamma < 0:
        return np.geomspace(c_min, c_max, size)
    return np.linspace(0.0, c_max, size)


def _utility_surface(params, x_grid, c_grid):
    """u(t_i, x_j, c_k) for all grid combinations, shape (n_t, n_x, n_c).

    Rows follow params.time_grid; sampled prices and indirect utilities are
    always stored with that alignment.
    """
    gamma = params.gamma
    if gamma < 0 and np.any(c_grid <= 0):
        raise InvalidParams("c_grid", "consumption grid must be positive when gamma < 0")
    gx = params.g(x_grid)
    cpow = c_grid ** gamma
    return params.phi[:, None, None] * gx[None, :, None] * cpow[None, None, :] / gamma


def u_transform_price_to_indirect(p, params, x_grid=None):
    """Indirect utility p*(t,x) = max over the c-grid of u(t,x,c) - p(t,c).

    Returns (SampledFunctionOfType, argmax_indices). The maximum is exact on
    the grid; continuous optima are recovered only up to grid resolution.
    """
    if x_grid is None:
        x_grid = np.linspace(0.0, 1.0, 401)
    x_grid = np.asarray(x_grid, dtype=float)
    surf = _utility_surface(params, x_grid, p.c_grid) - p.values[:, None, :]
    arg = np.argmax(surf, axis=2)
    vals = np.take_along_axis(surf, arg[:, :, None], axis=2)[:, :, 0]
    return SampledFunctionOfType(x_grid=x_grid, values=vals), arg


def u_transform_indirect_to_price(p_star, params, c_grid=None):
    """Price schedule p(t,c) = max over the x-grid of u(t,x,c) - p*(t,x)."""
    if c_grid is None:
        c_grid = default_c_grid(params)
    c_grid = np.asarray(c_grid, dtype=float)
    surf = _utility_surface(params, p_star.x_grid, c_grid) - p_star.values[:, :, None]
    arg = np.argmax(surf, axis=1)
    vals = np.take_along_axis(surf, arg[:, None, :], axis=1)[:, 0, :]
    return SampledFunctionOfConsumption(c_grid=c_grid, values=vals), arg


def grid_argmax_set(surface_1d, rel_tol=1e-12):
    """All indices attaining the grid maximum within a relative tolerance.

    The transform may be non-unique at kinks; no canonical selection is made.
    """
    m = np.max(surface_1d)
    return np.flatnonzero(surface_1d >= m - rel_tol * max(1.0, abs(m)))


@dataclass(frozen=True, eq=False)
class UConvexityReport:
    is_u_convex: bool
    max_biconjugation_gap: float
    convexity_violations: list
    route: str


def check_u_convexity(p_star, params, c_grid=None, gap_tol=None):
    """Diagnose u-convexity of a sampled indirect utility.

    Canonical taste maps admit the equivalence "u-convex iff convex
    nondecreasing", tested through slopes of the samples. For any taste map
    the biconjugation gap max |(p*)** - p*| is also computed; the function is
    declared u-convex when the relevant criterion passes within tolerance.
    """
    slopes = p_star.forward_slopes()
    scale = np.maximum(1.0, np.max(np.abs(slopes), axis=1, keepdims=True))
    violations = []
    if p_star.x_grid.size >= 3:
        curv = np.diff(slopes, axis=1)
        bad_t, bad_i = np.nonzero(curv < -CONVEXITY_REL_TOL * scale)
        for ti, ii in zip(bad_t.tolist(), bad_i.tolist()):
            violations.append((ti, float(p_star.x_grid[ii + 1]), float(curv[ti, ii])))
    monotone_ok = bool(np.all(slopes >= -CONVEXITY_REL_TOL * scale))

    price, _ = u_transform_indirect_to_price(p_star, params, c_grid=c_grid)
    back, _ = u_transform_price_to_indirect(price, params, x_grid=p_star.x_grid)
    gap = float(np.max(np.abs(back.values - p_star.values)))

    if gap_tol is None:
        # biconjugation through grids loses up to one local increment of p*
        incr = np.max(np.abs(np.diff(p_star.values, axis=1))) if p_star.x_grid.size > 1 else 0.0
        gap_tol = 2.0 * incr + 1e-9

    if params.g.form == "canonical":
        ok = (len(violations) == 0) and monotone_ok
        route = "canonical-convexity"
    else:
        ok = gap <= gap_tol
        route = "biconjugation"
    return UConvexityReport(
        is_u_convex=ok,
        max_biconjugation_gap=gap,
        convexity_violations=violations,
        route=route,
    )
