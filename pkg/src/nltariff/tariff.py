"""Piecewise tariff schedules p(t,c) = p1(t) c^gamma + p2(t) c + p3(t).

A tariff is a per-time sequence of consumption segments with polynomial
coefficients, plus (for type-dependent reservations) one tabulated bridge
segment covering the consumption range that no participating agent selects.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidParams
from .uconvex import SampledFunctionOfConsumption


@dataclass(frozen=True, eq=False)
class TariffSegment:
    """Polynomial segment valid on [c_lo(t), c_hi(t)] per time node."""

    c_lo: np.ndarray
    c_hi: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    p3: np.ndarray
    label: str = ""

    def price(self, t_index, c, gamma):
        c = np.asarray(c, dtype=float)
        p1 = self.p1[t_index]
        out = self.p2[t_index] * c + self.p3[t_index]
        if p1 != 0.0:
            out = out + p1 * c ** gamma
        return out


@dataclass(frozen=True, eq=False)
class TabulatedSegment:
    """Bridge segment: linear interpolation through per-time knots."""

    c_lo: np.ndarray
    c_hi: np.ndarray
    c_knots: np.ndarray  # (n_t, m)
    p_knots: np.ndarray  # (n_t, m)
    label: str = "bridge"

    def price(self, t_index, c, gamma):
        return np.interp(np.asarray(c, dtype=float), self.c_knots[t_index], self.p_knots[t_index])


@dataclass(eq=False)
class Tariff:
    """Ordered consumption segments per time node.

    ``selected_range`` marks the consumptions actually chosen by participating
    agents; the tariff must be concave and nondecreasing there. ``simplified``
    tariffs replace the never-selected top region by extending the main
    segment, which leaves every equilibrium quantity unchanged.
    """

    gamma: float
    time_grid: np.ndarray
    segments: list
    simplified: bool = True
    selected_range: list | None = None  # list of (n_t, 2) arrays: [c_lo, c_hi] bands
    breakpoints: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.segments:
            raise InvalidParams("segments", "a tariff needs at least one segment")
        nt = self.time_grid.size
        for seg in self.segments:
            if seg.c_lo.shape != (nt,) or seg.c_hi.shape != (nt,):
                raise InvalidParams("segments", "segment ranges must match the time grid")
        if self.selected_range is not None and not isinstance(self.selected_range, list):
            self.selected_range = [self.selected_range]

    # -- evaluation ----------------------------------------------------------
    def price(self, t_index, c):
        """Price at time node ``t_index`` for consumptions ``c`` (vectorized)."""
        c = np.asarray(c, dtype=float)
        if self.gamma < 0 and np.any(c < 0):
            raise DomainError("consumption must be positive when gamma < 0")
        out = np.full(c.shape, np.nan)
        filled = np.zeros(c.shape, dtype=bool)
        for seg in self.segments:
            lo, hi = seg.c_lo[t_index], seg.c_hi[t_index]
            mask = (~filled) & (c >= lo - 1e-15) & (c <= hi)
            if np.any(mask):
                out[mask] = seg.price(t_index, c[mask], self.gamma)
                filled |= mask
        if not np.all(filled):
            # extend the outermost segments rather than fail on roundoff gaps
            below = (~filled) & (c < self.segments[0].c_lo[t_index])
            out[below] = self.segments[0].price(t_index, c[below], self.gamma)
            above = (~filled) & ~below
            out[above] = self.segments[-1].price(t_index, c[above], self.gamma)
        return out

    def sample(self, c_grid):
        """Evaluate on a consumption grid at every time node."""
        vals = np.vstack([self.price(i, c_grid) for i in range(self.time_grid.size)])
        return SampledFunctionOfConsumption(c_grid=np.asarray(c_grid, dtype=float), values=vals)

    # -- diagnostics ----------------------------------------------------------
    def continuity_gaps(self):
        """Largest junction mismatch across adjacent segments, per time node.

        Collapsed segments (c_hi <= c_lo) are skipped; the remaining segments
        must agree at shared breakpoints within 1e-9.
        """
        nt = self.time_grid.size
        gaps = np.zeros(nt)
        for i in range(nt):
            live = [s for s in self.segments if s.c_hi[i] > s.c_lo[i] + 1e-15]
            for a, b in zip(live[:-1], live[1:]):
                cj = a.c_hi[i]
                if not np.isfinite(cj) or (self.gamma < 0 and cj <= 0):
                    continue
                ca = np.asarray([cj])
                gap = float(abs(a.price(i, ca, self.gamma)[0] - b.price(i, ca, self.gamma)[0]))
                gaps[i] = max(gaps[i], gap)
        return gaps

    def shape_report(self, samples=256):
        """Monotonicity and concavity of p(t,.) on every selected band."""
        if self.selected_range is None:
            raise InvalidParams("selected_range", "tariff carries no selected range")
        worst_slope, worst_curv = np.inf, -np.inf
        for band in self.selected_range:
            for i in range(self.time_grid.size):
                lo, hi = band[i]
                if not np.isfinite(hi) or hi <= lo:
                    continue
                lo = max(lo, 1e-9 * hi) if self.gamma < 0 else lo
                cs = np.linspace(lo, hi, samples)
                ps = self.price(i, cs)
                sl = np.diff(ps) / np.diff(cs)
                worst_slope = min(worst_slope, float(np.min(sl)))
                worst_curv = max(worst_curv, float(np.max(np.diff(sl))))
        scale = max(1.0, abs(worst_slope))
        return {
            "min_slope": worst_slope,
            "max_convex_kink": worst_curv,
            "nondecreasing": worst_slope >= -1e-9 * scale,
            "concave": worst_curv <= 1e-9 * scale,
        }

    def coefficients_at(self, t_index, label="selected"):
        """(p1, p2, p3) of the polynomial segment with the given label."""
        fallback = None
        for s in self.segments:
            if not isinstance(s, TariffSegment):
                continue
            if s.label == label:
                return float(s.p1[t_index]), float(s.p2[t_index]), float(s.p3[t_index])
            fallback = fallback or s
        if fallback is None:
            raise InvalidParams("segments", "tariff has no polynomial segment")
        return float(fallback.p1[t_index]), float(fallback.p2[t_index]), float(fallback.p3[t_index])
