"""Implicit Euler time integration with per-step diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import prox
from .facets import FacetSet, detect_facets
from .model import ForceField, Grid, ModelError, OperatorSpec, Profile


# per-step inclusion tolerance relative to the step data; looser values stall
# the approach to steady states at the tolerance level
STEP_TOL_REL = 1e-12


class EvolutionFailure(RuntimeError):
    def __init__(self, step: int, time: float, residual: float):
        super().__init__(f"implicit step {step} (t = {time:.6g}) failed, best inclusion residual {residual:.3e}")
        self.step = step
        self.time = time
        self.residual = residual


@dataclass
class TrajectoryReport:
    """Per-step series (index k is the state after step k+1) and snapshots.

    ``ut_sup`` is ``max_i |u^{k+1}_i - u^k_i| / tau``; ``tv_of_slope`` is the
    total variation of the discrete slope sequence; ``f_inf`` is the exact
    sup norm of the force slice used in the step.
    """

    tau: float
    grid: Grid
    times: np.ndarray
    ut_sup: np.ndarray
    tv_of_slope: np.ndarray
    sup_to_initial: np.ndarray
    f_inf: np.ndarray
    n_facets: np.ndarray
    l2_distance_to_target: np.ndarray | None
    snapshot_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    facet_history: list = field(default_factory=list)
    initial: Profile | None = None
    final: Profile | None = None
    tv_initial: float = 0.0

    @property
    def n_steps(self) -> int:
        return int(self.times.size)


def tv_of_slope(u: Profile) -> float:
    return float(np.sum(np.abs(np.diff(u.slopes))))


def _count_facets(values: np.ndarray, h: float, slope_tol: float, min_edges: int) -> int:
    flat = np.abs(np.diff(values)) <= slope_tol * h
    if not flat.any():
        return 0
    padded = np.concatenate(([False], flat, [False])).astype(np.int8)
    d = np.diff(padded)
    lengths = np.flatnonzero(d == -1) - np.flatnonzero(d == 1)
    return int(np.count_nonzero(lengths >= min_edges))


def snapshot_steps(snapshot_times, tau: float, n_steps: int) -> list[int]:
    """Step index (0 = initial state) nearest to each requested time."""
    out = []
    for t in snapshot_times:
        k = int(round(float(t) / tau))
        out.append(min(max(k, 0), n_steps))
    return sorted(set(out))


def evolve(
    u0: Profile,
    force: ForceField,
    op: OperatorSpec,
    tau: float,
    T: float,
    grid: Grid | None = None,
    tol: float | None = None,
    snapshot_times=(),
    target: Profile | None = None,
    *,
    sampling: str = "average",
    slope_tol: float | None = None,
    min_length: float | None = None,
    callback=None,
) -> TrajectoryReport:
    """Run ``ceil(T / tau)`` implicit steps of ``u_t - (L(u_x))_x = f``.

    The force slice of step ``k`` is taken at its end time ``k tau``.
    ``tol`` is the per-step inclusion tolerance (default scales with the
    step data).  ``callback(k, t, profile)`` is called after each step.
    """
    grid = u0.grid if grid is None else grid
    if grid.n_cells != u0.grid.n_cells:
        raise ModelError("u0 lives on a different grid")
    if not (np.isfinite(tau) and tau > 0):
        raise ModelError("tau must be > 0")
    if not (np.isfinite(T) and T >= tau * (1 - 1e-12)):
        raise ModelError("T must be >= tau")
    if target is not None and target.grid.n_cells != grid.n_cells:
        raise ModelError("target lives on a different grid")
    n_steps = max(1, math.ceil(T / tau - 1e-9))
    h = grid.h
    slope_tol = h if slope_tol is None else float(slope_tol)
    min_edges = int(round((4.0 * h if min_length is None else float(min_length)) / h))

    base, ramp = force.node_parts(grid, sampling)
    base_pc, ramp_pc = force.base_slice().values, force.ramp_slice().values
    snaps = snapshot_steps(snapshot_times, tau, n_steps)

    times = np.empty(n_steps)
    ut = np.empty(n_steps)
    tv = np.empty(n_steps)
    dist0 = np.empty(n_steps)
    finf = np.empty(n_steps)
    nf = np.empty(n_steps, dtype=np.int64)
    l2 = np.empty(n_steps) if target is not None else None

    rep = TrajectoryReport(tau, grid, times, ut, tv, dist0, finf, nf, l2, initial=u0, tv_initial=tv_of_slope(u0))
    facet_kw = dict(slope_tol=slope_tol, min_length=min_edges * h)
    if 0 in snaps:
        rep.snapshot_times.append(0.0)
        rep.snapshots.append(u0)
        rep.facet_history.append(detect_facets(u0, **facet_kw))

    u = u0
    v0 = u0.values
    for k in range(1, n_steps + 1):
        t = k * tau
        a = force.law(t)
        f = base + a * ramp
        g = u.values
        if tol is None:
            scale = np.max(np.abs(g)) / tau + np.max(np.abs(f[1:-1]))
            step_tol = max(STEP_TOL_REL * max(1.0, scale), prox.roundoff_floor(grid.n_cells, scale))
        else:
            step_tol = tol
        try:
            u_new, _ = prox._solve(g, f, tau, op, grid, step_tol)
        except prox.StepFailure as exc:
            raise EvolutionFailure(k, t, exc.residual) from exc
        w = u_new.values
        j = k - 1
        times[j] = t
        ut[j] = np.max(np.abs(w - g)) / tau
        tv[j] = tv_of_slope(u_new)
        dist0[j] = np.max(np.abs(w - v0))
        finf[j] = np.max(np.abs(base_pc + a * ramp_pc))
        nf[j] = _count_facets(w, h, slope_tol, min_edges)
        if l2 is not None:
            l2[j] = u_new.l2_distance(target)
        if k in snaps:
            rep.snapshot_times.append(t)
            rep.snapshots.append(u_new)
            rep.facet_history.append(detect_facets(u_new, **facet_kw))
        if callback is not None:
            callback(k, t, u_new)
        u = u_new
    rep.final = u
    return rep


def f_t_integral(force: ForceField, T: float) -> float:
    """``int_0^T |d f / dt|_inf dt`` from the term list."""
    return force.law_rate_integral(T) * force.ramp_slice().sup_abs()


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    observed: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.observed


def check_ut_bound(report: TrajectoryReport, f_t_int: float, ut0: float = 0.0, *, rel_slack: float = 0.1, abs_slack: float | None = None) -> BoundCheck:
    """``max ut_sup <= (ut0 + f_t_int) (1 + rel_slack) + abs_slack``; ``abs_slack`` defaults to ``10 tau``."""
    abs_slack = 10.0 * report.tau if abs_slack is None else abs_slack
    bound = (float(ut0) + float(f_t_int)) * (1.0 + rel_slack) + abs_slack
    observed = float(np.max(report.ut_sup))
    return BoundCheck(observed <= bound, observed, bound)


def check_tv_monitor(report: TrajectoryReport, factor: float = 10.0, skip: int = 10) -> BoundCheck:
    """No step after the first ``skip`` multiplies the slope variation by more than ``factor``."""
    tv = np.concatenate(([report.tv_initial], report.tv_of_slope))
    prev, nxt = tv[skip:-1], tv[skip + 1 :]
    if prev.size == 0:
        return BoundCheck(True, 0.0, factor)
    ratio = np.where(prev > 0, nxt / np.where(prev > 0, prev, 1.0), np.where(nxt > 1e-12, np.inf, 1.0))
    worst = float(np.max(ratio))
    return BoundCheck(worst <= factor, worst, factor)
