"""Facet detection and the quantitative facet checks.

Forces passed to the balance and stagnation checks are read in the steady
convention ``d/dx L(u_x) = F``: a minimum facet carries ``int F = +2`` and a
maximum facet ``int F = -2`` (jump interval of width 2).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import ForceField, ForceSlice, ModelError, Profile

JUMP_WIDTH = 2.0


class FacetKind(str, enum.Enum):
    MIN = "min"
    MAX = "max"
    INFLECTION_FLAT = "inflection_flat"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class Facet:
    left: float
    right: float
    level: float
    kind: FacetKind
    first_node: int = -1
    last_node: int = -1

    @property
    def length(self) -> float:
        return self.right - self.left

    @property
    def is_extremum(self) -> bool:
        return self.kind in (FacetKind.MIN, FacetKind.MAX)

    def to_dict(self) -> dict:
        return {"left": self.left, "right": self.right, "level": self.level, "kind": self.kind.value}


@dataclass(frozen=True)
class FacetSet:
    facets: tuple
    slope_tol: float
    min_length: float

    def __len__(self) -> int:
        return len(self.facets)

    def __iter__(self):
        return iter(self.facets)

    def __getitem__(self, k):
        return self.facets[k]

    def of_kind(self, *kinds) -> list:
        return [f for f in self.facets if f.kind in kinds]

    def count_in(self, a: float, b: float, *, extrema_only: bool = True) -> int:
        """Facets contained in ``[a, b]``."""
        return sum(1 for f in self.facets if f.left >= a and f.right <= b and (f.is_extremum or not extrema_only))

    def to_dict(self) -> dict:
        return {"slope_tol": self.slope_tol, "min_length": self.min_length, "facets": [f.to_dict() for f in self.facets]}


def default_slope_tol(u: Profile, analytic: bool = False) -> float:
    if analytic:
        return 10.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(u.slopes))))
    return u.grid.h


def _flat_runs(flat: np.ndarray):
    """``(first_edge, last_edge)`` of every maximal run of True."""
    padded = np.concatenate(([False], flat, [False]))
    d = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def _classify(slopes, e0, e1, n) -> FacetKind:
    if e0 == 0 or e1 == n - 1:
        return FacetKind.BOUNDARY
    sl, sr = slopes[e0 - 1], slopes[e1 + 1]
    if sl < 0 < sr:
        return FacetKind.MIN
    if sl > 0 > sr:
        return FacetKind.MAX
    return FacetKind.INFLECTION_FLAT


def detect_facets(u: Profile, slope_tol: float | None = None, min_length: float | None = None) -> FacetSet:
    """Maximal runs of edges with ``|Du| <= slope_tol`` spanning at least ``min_length``.

    Defaults suit evolved profiles: ``slope_tol = h`` and ``min_length = 4h``.
    A run's kind follows the slopes on either side of it.
    """
    h = u.grid.h
    slope_tol = default_slope_tol(u) if slope_tol is None else float(slope_tol)
    min_length = 4.0 * h if min_length is None else float(min_length)
    if not slope_tol > 0:
        raise ModelError("slope_tol must be > 0")
    if min_length < 2.0 * h * (1 - 1e-12):
        raise ModelError("min_length must be at least 2h")
    slopes = u.slopes
    n = slopes.size
    x = u.x
    out = []
    for e0, e1 in _flat_runs(np.abs(slopes) <= slope_tol):
        left, right = float(x[e0]), float(x[e1 + 1])
        if right - left < min_length * (1 - 1e-12):
            continue
        level = float(np.mean(u.values[e0 : e1 + 2]))
        out.append(Facet(left, right, level, _classify(slopes, e0, e1, n), e0, e1 + 1))
    return FacetSet(tuple(out), slope_tol, min_length)


def uncovered_extrema(u: Profile, facets: FacetSet, slope_tol: float | None = None) -> list[float]:
    """Positions of interior local extrema that do not lie on a MIN/MAX facet.

    Extrema are runs of flat edges (possibly a single node) whose neighbours
    slope in opposite directions.
    """
    slope_tol = facets.slope_tol if slope_tol is None else slope_tol
    s = u.slopes
    n = s.size
    sign = np.where(s > slope_tol, 1, np.where(s < -slope_tol, -1, 0))
    nz = np.flatnonzero(sign)
    x = u.x
    covered = [(f.first_node, f.last_node) for f in facets if f.is_extremum]
    out = []
    for a, b in zip(nz[:-1], nz[1:]):
        if sign[a] == sign[b]:
            continue
        # extremum spans nodes a+1 .. b
        lo, hi = a + 1, b
        if lo == 0 or hi == n:
            continue
        if not any(p <= lo and hi <= q for p, q in covered):
            out.append(float(0.5 * (x[lo] + x[hi])))
    return out


# ---------------------------------------------------------------------------
# creation bound


@dataclass(frozen=True)
class CreationCheck:
    passed: bool
    length: float
    bound: float
    bound_l2: float | None
    slack: float

    @property
    def margin(self) -> float:
        return self.length - (self.bound - self.slack)


def creation_bound_check(facet: Facet, f_inf: float, ut_inf: float, *, h: float = 0.0, ut_l2: float | None = None) -> CreationCheck:
    """Lower bound ``2 / (|f|_inf + |u_t|_inf)`` on the length of an extremal facet.

    Passes when the length is at least the bound minus ``2h``.  The weaker
    bound with ``|u_t|_2`` squared is reported alongside when ``ut_l2`` is given.
    """
    if not facet.is_extremum:
        raise ModelError(f"creation bound applies to MIN/MAX facets, not {facet.kind.value}")
    denom = float(f_inf) + float(ut_inf)
    if not denom > 0:
        raise ModelError("f_inf + ut_inf must be > 0")
    bound = JUMP_WIDTH / denom
    bound_l2 = None
    if ut_l2 is not None:
        bound_l2 = (JUMP_WIDTH / (float(f_inf) + float(ut_l2))) ** 2
    slack = 2.0 * h
    return CreationCheck(facet.length >= bound - slack, facet.length, bound, bound_l2, slack)


# ---------------------------------------------------------------------------
# flux balance and stagnation conditions


def expected_jump(kind: FacetKind) -> float:
    if kind is FacetKind.MIN:
        return JUMP_WIDTH
    if kind is FacetKind.MAX:
        return -JUMP_WIDTH
    raise ModelError(f"no expected flux jump for {kind.value} facets")


def facet_flux_balance(facet, force: ForceSlice, expected: float | None = None) -> float:
    """``|int_facet F - expected|`` from the exact primitive of ``F``.

    ``facet`` is a :class:`Facet` or a ``(left, right)`` pair; ``expected``
    defaults to +2 for MIN and -2 for MAX facets.
    """
    if isinstance(facet, Facet):
        left, right = facet.left, facet.right
        if expected is None:
            expected = expected_jump(facet.kind)
    else:
        left, right = (float(v) for v in facet)
    if expected is None:
        raise ModelError("expected jump required for bare intervals")
    if not 0.0 <= left <= right <= 1.0:
        raise ModelError("facet interval must lie in [0, 1]")
    return abs(force.integral(left, right) - float(expected))


@dataclass(frozen=True)
class StagnationCheck:
    times: tuple
    support: tuple
    mean: tuple
    subinterval: tuple
    worst_subinterval: tuple
    band_width: tuple
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.support) and all(self.mean) and all(self.subinterval)

    @property
    def band_passed(self) -> bool:
        return all(w <= JUMP_WIDTH + 1e-12 for w in self.band_width)


def band_width(force: ForceSlice) -> float:
    """Width of the range of ``x -> int_0^x F`` over ``[0, 1]``."""
    lo, hi = force.primitive_range(0.0, 1.0)
    return hi - lo


def stagnation_conditions_check(force: ForceField, xi_minus: float, xi_plus: float, t_samples, *, mean_tol: float = 1e-12) -> StagnationCheck:
    """Evaluate the three facet-stagnation conditions at each sampled time.

    1. ``F(t) - F(0)`` vanishes outside ``[xi_minus, xi_plus]``.
    2. ``int_{xi_minus}^{xi_plus} F(t) = 2`` (to ``mean_tol``).
    3. ``|int_a^b F(t)| < 2`` for all breakpoints ``xi_minus <= a < b <= xi_plus``
       other than the full pair; the primitive is piecewise linear so
       breakpoints carry its extrema.

    The zero-solution band width (range of the primitive on ``[0, 1]``) is
    recorded as well.
    """
    xm, xp = float(xi_minus), float(xi_plus)
    if not 0.0 < xm < xp < 1.0:
        raise ModelError("need 0 < xi_minus < xi_plus < 1")
    f0 = force.slice(0.0)
    sup, mean, sub, worst, width = [], [], [], [], []
    times = tuple(float(t) for t in t_samples)
    for t in times:
        ft = force.slice(t)
        diff = ft.values - f0.values
        outside = (ft.breaks[1:] <= xm) | (ft.breaks[:-1] >= xp)
        straddle = (ft.breaks[:-1] < xm) & (ft.breaks[1:] > xm) | (ft.breaks[:-1] < xp) & (ft.breaks[1:] > xp)
        sup.append(bool(np.all(diff[outside | straddle] == 0.0)))
        mean.append(abs(ft.integral(xm, xp) - JUMP_WIDTH) <= mean_tol)
        pts = np.unique(np.concatenate(([xm, xp], ft.breaks[(ft.breaks > xm) & (ft.breaks < xp)])))
        prim = np.asarray(ft.primitive(pts))
        best = 0.0
        for i in range(pts.size):
            for j in range(i + 1, pts.size):
                if i == 0 and j == pts.size - 1:
                    continue
                best = max(best, abs(prim[j] - prim[i]))
        sub.append(best < JUMP_WIDTH)
        worst.append(best)
        width.append(band_width(ft))
    return StagnationCheck(times, tuple(sup), tuple(mean), tuple(sub), tuple(worst), tuple(width))
