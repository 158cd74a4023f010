"""Operator graphs, forces, grids and profiles shared by every solver.

The equation being discretised is ``u_t - d/dx L(u_x) = f`` on (0, 1) with
homogeneous Dirichlet data, where ``L(p) = sgn(p) + L_r(p)`` is a monotone
graph with a single jump of height 2 at ``p = 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P


class OperatorKind(str, enum.Enum):
    TV_ONLY = "tv_only"
    TV_PLUS_LINEAR = "tv_plus_linear"
    TV_PLUS_REGULAR = "tv_plus_regular"


class ModelError(ValueError):
    """Invalid model data (operator, force, grid or profile)."""


# ---------------------------------------------------------------------------
# regular part


class PiecewisePolynomial:
    """Continuous piecewise polynomial in the slope variable ``p``.

    ``breaks`` has ``m`` increasing entries splitting the real line into
    ``m + 1`` pieces; ``coeffs[k]`` are power-basis coefficients (lowest
    degree first, global variable ``p``) on piece ``k``.  The outer pieces
    extend to -inf and +inf.
    """

    def __init__(self, breaks: Sequence[float], coeffs: Sequence[Sequence[float]]):
        breaks = np.asarray(breaks, dtype=float).reshape(-1)
        if len(coeffs) != len(breaks) + 1:
            raise ModelError("piecewise polynomial needs len(breaks) + 1 coefficient rows")
        if np.any(~np.isfinite(breaks)) or np.any(np.diff(breaks) <= 0):
            raise ModelError("breakpoints must be finite and strictly increasing")
        rows = [np.atleast_1d(np.asarray(c, dtype=float)) for c in coeffs]
        if any(r.size == 0 or not np.all(np.isfinite(r)) for r in rows):
            raise ModelError("coefficient rows must be non-empty and finite")
        width = max(r.size for r in rows)
        self.breaks = breaks
        self.coeffs = np.zeros((len(rows), width))
        for k, r in enumerate(rows):
            self.coeffs[k, : r.size] = r
        self._check_continuity()

    @classmethod
    def zero(cls) -> "PiecewisePolynomial":
        return cls([], [[0.0]])

    @classmethod
    def identity(cls) -> "PiecewisePolynomial":
        return cls([], [[0.0, 1.0]])

    def _check_continuity(self) -> None:
        for k, b in enumerate(self.breaks):
            left = P.polyval(b, self.coeffs[k])
            right = P.polyval(b, self.coeffs[k + 1])
            if abs(left - right) > 1e-12 * max(1.0, abs(left)):
                raise ModelError(f"regular part is discontinuous at p = {b!r}")

    def _pieces(self, p: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.breaks, p, side="right")

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        k = self._pieces(p)
        out = np.zeros_like(p)
        for j in range(len(self.coeffs)):
            mask = k == j
            if np.any(mask):
                out[mask] = P.polyval(p[mask], self.coeffs[j])
        return out if out.ndim else float(out)

    def derivative(self) -> "PiecewisePolynomial":
        rows = [P.polyder(c) if c.size > 1 else np.zeros(1) for c in self.coeffs]
        out = PiecewisePolynomial.__new__(PiecewisePolynomial)
        out.breaks = self.breaks.copy()
        width = max(r.size for r in rows)
        out.coeffs = np.zeros((len(rows), width))
        for k, r in enumerate(rows):
            out.coeffs[k, : r.size] = r
        return out

    def primitive(self) -> "PiecewisePolynomial":
        """Continuous antiderivative vanishing at ``p = 0``."""
        rows = [P.polyint(c) for c in self.coeffs]
        # glue pieces left to right, then shift so the value at 0 is 0
        for k, b in enumerate(self.breaks):
            rows[k + 1][0] += P.polyval(b, rows[k]) - P.polyval(b, rows[k + 1])
        k0 = int(np.searchsorted(self.breaks, 0.0, side="right"))
        shift = P.polyval(0.0, rows[k0])
        for r in rows:
            r[0] -= shift
        return PiecewisePolynomial(self.breaks, rows)

    def is_nondecreasing(self) -> bool:
        """Exact check of ``L_r' >= 0`` piece by piece (endpoints and critical points)."""
        d = self.derivative()
        edges = np.concatenate(([-np.inf], self.breaks, [np.inf]))
        for k, c in enumerate(d.coeffs):
            c = np.trim_zeros(c, "b")
            if c.size == 0:
                continue
            lo, hi = edges[k], edges[k + 1]
            deg = c.size - 1
            lead = c[-1]
            if np.isinf(hi) and lead < 0 and deg > 0:
                return False
            if np.isinf(lo) and deg > 0 and lead * (-1) ** deg < 0:
                return False
            if deg == 0 and c[0] < 0:
                return False
            pts = [x for x in (lo, hi) if np.isfinite(x)]
            if deg >= 2:
                crit = P.polyroots(P.polyder(c))
                pts += [r.real for r in crit if abs(r.imag) < 1e-12 and lo < r.real < hi]
            if not np.isfinite(lo) and not np.isfinite(hi) and not pts:
                pts = [0.0]
            if pts and min(P.polyval(np.array(pts), c)) < -1e-12:
                return False
        return True

    @property
    def is_affine(self) -> bool:
        return self.breaks.size == 0 and not np.any(self.coeffs[0, 2:])

    def to_dict(self) -> dict:
        return {"breaks": self.breaks.tolist(), "coeffs": [np.trim_zeros(c, "b").tolist() or [0.0] for c in self.coeffs]}


# ---------------------------------------------------------------------------
# operator


@dataclass(frozen=True)
class OperatorSpec:
    """The monotone graph ``L(p) = sgn(p) + L_r(p)``.

    ``sgn(0)`` is the whole interval [-1, 1], so ``L(0)`` is the closed
    interval ``[L_r(0) - 1, L_r(0) + 1]``.
    """

    kind: OperatorKind
    regular_part: PiecewisePolynomial = field(default_factory=PiecewisePolynomial.zero)

    def __post_init__(self):
        kind = OperatorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is OperatorKind.TV_ONLY:
            object.__setattr__(self, "regular_part", PiecewisePolynomial.zero())
        elif kind is OperatorKind.TV_PLUS_LINEAR:
            object.__setattr__(self, "regular_part", PiecewisePolynomial.identity())
        elif not self.regular_part.is_nondecreasing():
            raise ModelError("regular part of the operator must be nondecreasing")

    @classmethod
    def tv(cls) -> "OperatorSpec":
        return cls(OperatorKind.TV_ONLY)

    @classmethod
    def linear(cls) -> "OperatorSpec":
        return cls(OperatorKind.TV_PLUS_LINEAR)

    @classmethod
    def regular(cls, breaks, coeffs) -> "OperatorSpec":
        return cls(OperatorKind.TV_PLUS_REGULAR, PiecewisePolynomial(breaks, coeffs))

    @property
    def jump_center(self) -> float:
        return float(self.regular_part(0.0))

    @property
    def jump_interval_at_zero(self) -> tuple[float, float]:
        c = self.jump_center
        return (c - 1.0, c + 1.0)

    def interval(self, p):
        """Lower and upper ends of ``L(p)``; they coincide for ``p != 0``."""
        p = np.asarray(p, dtype=float)
        r = self.regular_part(p)
        s = np.sign(p)
        lo = np.where(p == 0, r - 1.0, r + s)
        hi = np.where(p == 0, r + 1.0, r + s)
        if lo.ndim == 0:
            return float(lo), float(hi)
        return lo, hi

    def potential(self, p):
        """Convex primitive ``W(p) = |p| + int_0^p L_r``."""
        p = np.asarray(p, dtype=float)
        return np.abs(p) + self._potential_regular(p)

    def _potential_regular(self, p):
        if self.kind is OperatorKind.TV_ONLY:
            return np.zeros_like(p)
        if self.kind is OperatorKind.TV_PLUS_LINEAR:
            return 0.5 * p * p
        return self.regular_part.primitive()(p)

    def kernel_arrays(self):
        """Arrays consumed by the compiled step solver."""
        lr = self.regular_part
        d = lr.derivative()
        w = lr.primitive()
        width = max(lr.coeffs.shape[1], d.coeffs.shape[1], w.coeffs.shape[1])

        def pad(a):
            out = np.zeros((a.shape[0], width))
            out[:, : a.shape[1]] = a
            return out

        return (
            np.ascontiguousarray(lr.breaks, dtype=float),
            pad(lr.coeffs),
            pad(d.coeffs),
            pad(w.coeffs),
            self.jump_center,
            bool(lr.is_affine),
        )


def eval_operator(op: OperatorSpec, p: float) -> tuple[float, float]:
    """Closed interval of admissible flux values ``L(p)`` as ``(lo, hi)``."""
    if not np.isfinite(p):
        raise ModelError("slope must be finite")
    return op.interval(float(p))


# ---------------------------------------------------------------------------
# forces


class TimeLaw(str, enum.Enum):
    CONSTANT = "constant"
    CLIPPED_RAMP = "clipped_ramp"


Term = tuple[float, float, float]


def _check_terms(terms: Iterable[Sequence[float]], what: str) -> tuple[Term, ...]:
    out = []
    for k, term in enumerate(terms):
        if len(term) != 3:
            raise ModelError(f"{what}[{k}]: expected (a, b, amplitude)")
        a, b, amp = (float(v) for v in term)
        if not all(np.isfinite((a, b, amp))):
            raise ModelError(f"{what}[{k}]: non-finite entry")
        if not 0.0 <= a < b <= 1.0:
            raise ModelError(f"{what}[{k}]: interval [{a}, {b}] must satisfy 0 <= a < b <= 1")
        out.append((a, b, amp))
    return tuple(out)


def _indicator(a: float, b: float, x: np.ndarray) -> np.ndarray:
    # right-continuous, closed at x = 1
    return ((x >= a) & (x < b)) | ((b == 1.0) & (x == 1.0))


@dataclass(frozen=True)
class ForceSlice:
    """A piecewise-constant force at a fixed time.

    ``breaks`` runs from 0 to 1; ``values[k]`` is the value on
    ``[breaks[k], breaks[k+1])`` (the last piece is closed at 1).
    """

    breaks: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breaks, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.size != v.size + 1 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise ModelError("malformed force slice")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, value: float) -> "ForceSlice":
        return cls(np.array([0.0, 1.0]), np.array([float(value)]))

    @classmethod
    def from_terms(cls, terms: Iterable[Sequence[float]]) -> "ForceSlice":
        terms = _check_terms(terms, "terms")
        breaks = np.unique(np.concatenate(([0.0, 1.0], [t[0] for t in terms], [t[1] for t in terms])))
        mids = 0.5 * (breaks[:-1] + breaks[1:])
        values = np.zeros(mids.size)
        for a, b, amp in terms:
            values += amp * ((mids >= a) & (mids < b))
        return cls(breaks, values)

    def __neg__(self) -> "ForceSlice":
        return ForceSlice(self.breaks, -self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, self.values.size - 1)
        out = self.values[k]
        return out if out.ndim else float(out)

    def primitive(self, x):
        """Exact ``int_0^x F``."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        cum = np.concatenate(([0.0], np.cumsum(self.values * np.diff(self.breaks))))
        k = np.clip(np.searchsorted(self.breaks, x, side="right") - 1, 0, self.values.size - 1)
        out = cum[k] + self.values[k] * (x - self.breaks[k])
        return out if out.ndim else float(out)

    def integral(self, a: float, b: float) -> float:
        return float(self.primitive(b) - self.primitive(a))

    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def primitive_range(self, a: float = 0.0, b: float = 1.0) -> tuple[float, float]:
        """Min and max of the primitive over [a, b] (attained at breakpoints)."""
        pts = np.concatenate(([a, b], self.breaks[(self.breaks > a) & (self.breaks < b)]))
        vals = self.primitive(pts)
        return float(vals.min()), float(vals.max())

    def sample(self, grid: "Grid", mode: str = "average") -> np.ndarray:
        """Per-node values: the value at the node (the centre of its control
        volume) or the exact average over ``[x_i - h/2, x_i + h/2]``."""
        if mode == "midpoint":
            return np.asarray(self(grid.x), dtype=float)
        if mode == "average":
            lo = np.clip(grid.x - 0.5 * grid.h, 0.0, 1.0)
            hi = np.clip(grid.x + 0.5 * grid.h, 0.0, 1.0)
            return (self.primitive(hi) - self.primitive(lo)) / (hi - lo)
        raise ModelError(f"unknown sampling mode {mode!r}")


@dataclass(frozen=True)
class ForceField:
    """``sign * (sum base + law(t) * sum ramp)`` with indicator-function terms."""

    base_terms: tuple = ()
    ramp_terms: tuple = ()
    time_law: TimeLaw = TimeLaw.CONSTANT
    cap: float = 0.0
    global_sign: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "base_terms", _check_terms(self.base_terms, "force.base"))
        object.__setattr__(self, "ramp_terms", _check_terms(self.ramp_terms, "force.ramp"))
        object.__setattr__(self, "time_law", TimeLaw(self.time_law))
        if self.global_sign not in (1, -1, 1.0, -1.0):
            raise ModelError("force.sign must be +1 or -1")
        object.__setattr__(self, "global_sign", float(self.global_sign))
        cap = float(self.cap)
        if self.time_law is TimeLaw.CLIPPED_RAMP and not (np.isfinite(cap) and cap >= 0):
            raise ModelError("force.cap must be a finite number >= 0")
        object.__setattr__(self, "cap", cap)

    @classmethod
    def constant(cls, value: float) -> "ForceField":
        return cls(base_terms=((0.0, 1.0, float(value)),))

    @property
    def breaks(self) -> np.ndarray:
        ends = [t[0] for t in self.base_terms + self.ramp_terms] + [t[1] for t in self.base_terms + self.ramp_terms]
        return np.unique(np.concatenate(([0.0, 1.0], ends)))

    def law(self, t: float) -> float:
        if self.time_law is TimeLaw.CLIPPED_RAMP:
            return min(float(t), self.cap)
        return 1.0

    def law_rate_integral(self, T: float) -> float:
        """``int_0^T |d law / dt| dt``."""
        if self.time_law is TimeLaw.CLIPPED_RAMP:
            return min(float(T), self.cap)
        return 0.0

    def base_slice(self) -> ForceSlice:
        return self._slice(self.base_terms)

    def ramp_slice(self) -> ForceSlice:
        return self._slice(self.ramp_terms)

    def _slice(self, terms) -> ForceSlice:
        # zero-amplitude copies of every term keep base and ramp on shared breakpoints
        pad = [(a, b, 0.0) for a, b, _ in self.base_terms + self.ramp_terms]
        full = ForceSlice.from_terms(list(terms) + pad)
        return ForceSlice(full.breaks, self.global_sign * full.values)

    def slice(self, t: float) -> ForceSlice:
        b = self.base_slice()
        r = self.ramp_slice()
        return ForceSlice(b.breaks, b.values + self.law(t) * r.values)

    def node_parts(self, grid: "Grid", mode: str = "average") -> tuple[np.ndarray, np.ndarray]:
        """Sampled base and ramp parts; ``f(t) = base + law(t) * ramp``."""
        return self.base_slice().sample(grid, mode), self.ramp_slice().sample(grid, mode)

    def to_dict(self) -> dict:
        return {
            "base": [list(t) for t in self.base_terms],
            "ramp": [list(t) for t in self.ramp_terms],
            "time_law": self.time_law.value,
            "cap": self.cap,
            "sign": int(self.global_sign),
        }


def eval_force(force: ForceField, x: float, t: float) -> float:
    if not 0.0 <= x <= 1.0 or t < 0:
        raise ModelError("eval_force needs x in [0, 1] and t >= 0")
    f = 0.0
    for a, b, amp in force.base_terms:
        f += amp * float(_indicator(a, b, np.asarray(x)))
    ramp = 0.0
    for a, b, amp in force.ramp_terms:
        ramp += amp * float(_indicator(a, b, np.asarray(x)))
    return force.global_sign * (f + force.law(t) * ramp)


BREAKING_RAMP: tuple[Term, ...] = ((3 / 8, 5 / 8, -2.0), (1 / 4, 3 / 4, 1.0))


def alpha_force(alpha: float, *, ramp: bool = True, sign: float = 1.0) -> ForceField:
    """``4 + a(t) [-2 chi_[3/8,5/8] + chi_[1/4,3/4]]`` with ``a(t) = min(t, alpha)``
    when ``ramp`` is set, otherwise ``a = alpha`` frozen."""
    if ramp:
        return ForceField(((0.0, 1.0, 4.0),), BREAKING_RAMP, TimeLaw.CLIPPED_RAMP, alpha, sign)
    terms = ((0.0, 1.0, 4.0),) + tuple((a, b, alpha * amp) for a, b, amp in BREAKING_RAMP)
    return ForceField(terms, (), TimeLaw.CONSTANT, 0.0, sign)


# ---------------------------------------------------------------------------
# grid and profiles


@dataclass(frozen=True)
class Grid:
    n_cells: int

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ModelError("grid.n_cells must be an integer >= 4")
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def x(self) -> np.ndarray:
        x = np.arange(self.n_cells + 1) * self.h
        x[-1] = 1.0
        return x


class Profile:
    """Nodal values on a grid with ``u(0) = u(1) = 0`` held exactly."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        v = np.array(values, dtype=float)
        if v.shape != (grid.n_cells + 1,):
            raise ModelError(f"profile needs {grid.n_cells + 1} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ModelError("profile values must be finite")
        if v[0] != 0.0 or v[-1] != 0.0:
            raise ModelError("profile violates the Dirichlet condition u(0) = u(1) = 0")
        v[0] = v[-1] = 0.0  # normalise -0.0
        v.setflags(write=False)
        self.grid = grid
        self.values = v

    @classmethod
    def zeros(cls, grid: Grid) -> "Profile":
        return cls(grid, np.zeros(grid.n_cells + 1))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Profile":
        v = np.asarray(fn(grid.x), dtype=float).copy()
        v[0] = v[-1] = 0.0
        return cls(grid, v)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / self.grid.h

    def sup_distance(self, other: "Profile") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def l2_distance(self, other: "Profile") -> float:
        return float(np.sqrt(self.grid.h * np.sum((self.values - other.values) ** 2)))

    def __repr__(self) -> str:
        return f"Profile(n_cells={self.grid.n_cells}, sup={np.max(np.abs(self.values)):.3g})"
