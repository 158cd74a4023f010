"""Stationary problem ``d/dx L(u_x) = F`` with ``u(0) = u(1) = 0``.

Closed forms are provided for the two families with ``L(p) = p + sgn p``
(constant force and the three-facet force); the general case is solved
variationally by proximal-point iteration of the implicit step and
certified by flux reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from . import prox
from .model import (
    ForceField,
    ForceSlice,
    Grid,
    ModelError,
    OperatorKind,
    OperatorSpec,
    Profile,
    alpha_force,
)

BREAKING_THRESHOLD = 12.0


class RefusedNoBreaking(ModelError):
    """The three-facet construction only exists for alpha > 12."""

    code = "REFUSED_NO_BREAKING"

    def __init__(self, message: str):
        super().__init__(f"{self.code}: {message}")


class SteadyNonConvergence(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (best residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Piece:
    """Polynomial piece on ``[left, right]`` in the local variable ``x - left``."""

    left: float
    right: float
    coeffs: tuple

    def value(self, x):
        return P.polyval(np.asarray(x) - self.left, self.coeffs)

    def slope(self, x):
        return P.polyval(np.asarray(x) - self.left, P.polyder(self.coeffs)) if len(self.coeffs) > 1 else np.zeros_like(np.asarray(x, float))


@dataclass(frozen=True)
class SteadySolution:
    """Piecewise-polynomial steady state with its facets and flux.

    When ``symmetric`` is set the pieces cover ``[0, 1/2]`` and the profile
    is continued by ``u(x) = u(1 - x)``.
    """

    op: OperatorSpec
    force: ForceSlice
    pieces: tuple
    facets: tuple
    flux_at_zero: float
    symmetric: bool = True
    compatibility_residual: float = 0.0
    params: dict = field(default_factory=dict)

    def _locate(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        refl = np.zeros(x.shape, bool)
        y = x.copy()
        if self.symmetric:
            refl = x > 0.5
            y[refl] = 1.0 - x[refl]
        rights = np.array([p.right for p in self.pieces])
        k = np.clip(np.searchsorted(rights, y, side="left"), 0, len(self.pieces) - 1)
        return y, refl, k

    def value(self, x):
        y, _, k = self._locate(x)
        out = np.empty_like(y)
        for j, piece in enumerate(self.pieces):
            m = k == j
            out[m] = piece.value(y[m])
        return out if np.ndim(x) else float(out[0])

    def slope(self, x):
        y, refl, k = self._locate(x)
        out = np.empty_like(y)
        for j, piece in enumerate(self.pieces):
            m = k == j
            out[m] = piece.slope(y[m])
        out[refl] *= -1.0
        return out if np.ndim(x) else float(out[0])

    def flux(self, x):
        return self.flux_at_zero + self.force.primitive(x)

    def sample(self, grid: Grid) -> Profile:
        x = grid.x
        if self.symmetric and grid.n_cells % 2 == 0:
            half = grid.n_cells // 2
            left = self.value(x[: half + 1])
            vals = np.concatenate((left, left[-2::-1]))
        else:
            vals = self.value(x)
        vals[0] = vals[-1] = 0.0
        return Profile(grid, vals)

    def sample_points(self, per_piece: int = 65):
        """Points covering every piece, with each piece's own endpoints,
        returned as ``(x, u_x)`` evaluated piece by piece."""
        xs, ss = [], []
        for piece in self.pieces:
            t = np.linspace(piece.left, piece.right, per_piece)
            xs.append(t)
            ss.append(np.broadcast_to(piece.slope(t), t.shape))
            if self.symmetric:
                xs.append(1.0 - t)
                ss.append(-np.broadcast_to(piece.slope(t), t.shape))
        return np.concatenate(xs), np.concatenate(ss)


def _require_linear(op: OperatorSpec) -> None:
    if op.kind is not OperatorKind.TV_PLUS_LINEAR:
        raise ModelError("closed-form steady states assume L(p) = p + sgn p")


def solve_constant_force(op: OperatorSpec, A: float) -> SteadySolution:
    """Steady state for ``F = A``: zero for ``A <= 2``, otherwise a convex
    profile with the facet ``[1/2 - 1/A, 1/2 + 1/A]``."""
    _require_linear(op)
    A = float(A)
    if not (np.isfinite(A) and A >= 0):
        raise ModelError("constant force must be finite and >= 0")
    force = ForceSlice.constant(A)
    if A <= 2.0:
        return SteadySolution(op, force, (Piece(0.0, 0.5, (0.0,)),), ((0.0, 1.0, 0.0),), -A / 2, params={"A": A})
    a = 0.5 - 1.0 / A
    level = -0.5 * A * a * a
    pieces = (Piece(0.0, a, (0.0, -A * a, 0.5 * A)), Piece(a, 0.5, (level,)))
    return SteadySolution(op, force, pieces, ((a, 1.0 - a, level),), -A / 2, params={"A": A})


def three_facet_endpoints(alpha: float) -> tuple[float, float]:
    """Right end ``c`` of the left minimum facet and left end ``e`` of the
    maximum facet; defined for ``alpha >= 12`` (both equal 3/8 at 12)."""
    alpha = float(alpha)
    if alpha < BREAKING_THRESHOLD:
        raise RefusedNoBreaking(f"alpha = {alpha} < 12: the facet does not break")
    return 0.25 + 2.0 / (4.0 + alpha), 0.5 + 1.0 / (4.0 - alpha)


def solve_three_facet(op: OperatorSpec, alpha: float) -> SteadySolution:
    """Symmetric steady state for the force ``f_alpha`` with minimum facets
    ``[1/4, c]``, ``[1 - c, 3/4]`` and maximum facet ``[e, 1 - e]``."""
    _require_linear(op)
    alpha = float(alpha)
    if not alpha > BREAKING_THRESHOLD:
        raise RefusedNoBreaking(f"alpha = {alpha} <= 12: no breaking, the construction degenerates")
    c, e = three_facet_endpoints(alpha)
    force = alpha_force(alpha, ramp=False).slice(0.0)
    compat = force.integral(c, e)
    if abs(compat) > 1e-12:
        raise ArithmeticError(f"compatibility integral over [c, e] is {compat:.3e}")
    kp, km = 4.0 + alpha, 4.0 - alpha
    lo = -0.125
    u38 = lo + 0.5 * kp * (0.375 - c) ** 2
    s38 = kp * (0.375 - c)
    top = u38 + s38 * (e - 0.375) + 0.5 * km * (e - 0.375) ** 2
    pieces = (
        Piece(0.0, 0.25, (0.0, -1.0, 2.0)),
        Piece(0.25, c, (lo,)),
        Piece(c, 0.375, (lo, 0.0, 0.5 * kp)),
        Piece(0.375, e, (u38, s38, 0.5 * km)),
        Piece(e, 0.5, (top,)),
    )
    facets = ((0.25, c, lo), (e, 1.0 - e, top), (1.0 - c, 0.75, lo))
    return SteadySolution(op, force, pieces, facets, -2.0, compatibility_residual=compat, params={"alpha": alpha, "c": c, "e": e})


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class VerificationReport:
    passed: bool
    violation: float
    location: float
    sigma0: float
    tol: float


def _best_offset(cum, lo, hi):
    """Offset ``s`` minimising ``max_k dist(s + cum_k, [lo_k, hi_k])`` (closed form)."""
    a = lo - cum
    b = hi - cum
    # the midpoint of [max a, min b] is optimal whether or not the range is empty
    s = 0.5 * (float(np.max(a)) + float(np.min(b)))
    dist = np.maximum(np.maximum(lo - (s + cum), (s + cum) - hi), 0.0)
    return s, dist


def _force_nodes(force, grid: Grid, sampling: str, t: float) -> np.ndarray:
    if isinstance(force, ForceField):
        force = force.slice(t)
    if isinstance(force, ForceSlice):
        return force.sample(grid, sampling)
    arr = np.asarray(force, dtype=float)
    if arr.shape != (grid.n_cells + 1,):
        raise ModelError("force array needs one value per node")
    return arr


def discrete_steady_residual(u: Profile, op: OperatorSpec, F_nodes: np.ndarray):
    """Best flux offset and per-edge inclusion distances for a discrete profile."""
    h = u.grid.h
    cum = np.concatenate(([0.0], np.cumsum(h * F_nodes[1:-1])))
    lo, hi = op.interval(u.slopes)
    return _best_offset(cum, lo, hi)


def verify_steady(candidate, op: OperatorSpec, force, tol: float = 1e-9, *, sampling: str = "average", t: float = 0.0) -> VerificationReport:
    """Check ``d/dx L(u_x) = F`` by reconstructing ``sigma = sigma(0) + int F``.

    ``sigma(0)`` is chosen to minimise the worst distance of ``sigma`` to
    ``L(u_x)``; the check passes when that distance is at most ``tol``.
    Profiles are checked on their grid with the sampled force; analytic
    solutions are checked on points covering every piece with the exact
    primitive of the force.
    """
    if isinstance(candidate, SteadySolution):
        if isinstance(force, ForceField):
            force = force.slice(t)
        if not isinstance(force, ForceSlice):
            raise ModelError("analytic candidates need a ForceSlice or ForceField")
        x, ux = candidate.sample_points()
        cum = np.asarray(force.primitive(x))
        lo, hi = op.interval(ux)
        s0, dist = _best_offset(cum, lo, hi)
    elif isinstance(candidate, Profile):
        F = _force_nodes(force, candidate.grid, sampling, t)
        s0, dist = discrete_steady_residual(candidate, op, F)
        x = 0.5 * (candidate.x[:-1] + candidate.x[1:])
    else:
        raise TypeError("candidate must be a Profile or SteadySolution")
    k = int(np.argmax(dist))
    viol = float(dist[k])
    return VerificationReport(viol <= tol, viol, float(x[k]), float(s0), float(tol))


# ---------------------------------------------------------------------------
# variational solver


def solve_steady_numeric(
    op: OperatorSpec,
    force,
    grid: Grid,
    tol: float = 1e-10,
    *,
    sampling: str = "average",
    t: float = 0.0,
    max_outer: int = 60,
    initial: Profile | None = None,
) -> Profile:
    """Discrete minimiser of ``sum h W(Du) + sum h F u`` over Dirichlet profiles.

    Runs proximal-point iterations (implicit steps with growing ``tau``)
    until the reconstructed flux certifies the steady inclusion within
    ``tol``.
    """
    if not tol > 0:
        raise ModelError("tol must be > 0")
    F = _force_nodes(force, grid, sampling, t)
    f = -F
    u = np.zeros(grid.n_cells + 1) if initial is None else initial.values.copy()
    best = np.inf
    tau = 1.0
    for _ in range(max_outer):
        prof, _ = prox._solve(u, f, tau, op, grid, _step_tol(u, f, tau, grid.n_cells))
        u = prof.values.copy()
        _, dist = discrete_steady_residual(prof, op, F)
        resid = float(np.max(dist))
        best = min(best, resid)
        if resid <= tol:
            return prof
        tau = min(tau * 10.0, 1e8)
    raise SteadyNonConvergence("steady solver did not reach the requested residual", best)


def _step_tol(u, f, tau, n_cells):
    scale = np.max(np.abs(u)) / tau + np.max(np.abs(f))
    return max(1e-12 * max(1.0, scale), prox.roundoff_floor(n_cells, scale))
