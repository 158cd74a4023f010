"""End-to-end scenarios: zero stagnation, steady-facet stagnation, facet
creation, facet breaking and the breaking-threshold sweep.

Every scenario returns an :class:`ExperimentReport` listing all of its
checks, failing ones included.  Forces handed to the evolution follow
``u_t - (L(u_x))_x = f``; steady states follow ``(L(u_x))_x = F``, so a
static force ``f`` corresponds to ``F = -f``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import steady
from .evolve import TrajectoryReport, check_tv_monitor, check_ut_bound, evolve, f_t_integral
from .facets import FacetKind, band_width, creation_bound_check, facet_flux_balance, stagnation_conditions_check, uncovered_extrema
from .model import BREAKING_RAMP, ForceField, ForceSlice, Grid, OperatorSpec, Profile, TimeLaw, alpha_force

BREAKING_REGION = (0.25, 0.75)


@dataclass(frozen=True)
class Check:
    name: str
    expected: str
    observed: float | str
    tolerance: float | None
    passed: bool

    def line(self) -> str:
        obs = f"{self.observed:.6g}" if isinstance(self.observed, float) else str(self.observed)
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: observed {obs}, expected {self.expected}"

    def to_dict(self) -> dict:
        return {"name": self.name, "expected": self.expected, "observed": self.observed, "tolerance": self.tolerance, "pass": self.passed}


@dataclass
class ExperimentReport:
    scenario: str
    params: dict
    checks: list = field(default_factory=list)
    trajectory: TrajectoryReport | None = None
    summary: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, name, expected, observed, tolerance, passed) -> Check:
        c = Check(name, expected, float(observed) if isinstance(observed, (int, float, np.floating, np.integer)) and not isinstance(observed, bool) else observed, tolerance, bool(passed))
        self.checks.append(c)
        return c


def _default_snapshots(T: float, extra=()) -> list[float]:
    pts = set(np.round(np.linspace(0.0, T, 21), 12).tolist())
    pts.update(float(t) for t in extra if 0 <= t <= T)
    return sorted(pts)


def _sample_times(force: ForceField, T: float, n: int = 101) -> list[float]:
    ts = set(np.linspace(0.0, T, n).tolist())
    if force.time_law is TimeLaw.CLIPPED_RAMP and force.cap <= T:
        ts.add(force.cap)
    return sorted(ts)


def creation_checks(rep: ExperimentReport, traj: TrajectoryReport) -> None:
    """Facet-length lower bound on every extremal facet of every snapshot at
    ``t >= 10 tau``, and every interior extremum lying on such a facet."""
    h = traj.grid.h
    worst_margin = math.inf
    worst_at = None
    n_checked = 0
    stray = []
    for t, prof, fs in zip(traj.snapshot_times, traj.snapshots, traj.facet_history):
        if t < 10 * traj.tau * (1 - 1e-9):
            continue
        k = int(round(t / traj.tau)) - 1
        f_inf, ut_inf = float(traj.f_inf[k]), float(traj.ut_sup[k])
        for facet in fs:
            if not facet.is_extremum:
                continue
            if f_inf + ut_inf <= 0:
                continue
            res = creation_bound_check(facet, f_inf, ut_inf, h=h)
            n_checked += 1
            if res.margin < worst_margin:
                worst_margin, worst_at = res.margin, (t, facet.left, facet.right)
        stray.extend((t, x) for x in uncovered_extrema(prof, fs))
    rep.add(
        "creation_bound",
        f"every MIN/MAX facet length >= 2/(f_inf+ut_sup) - 2h ({n_checked} facets)",
        worst_margin if n_checked else "vacuous",
        2 * h,
        worst_margin >= 0 if n_checked else True,
    )
    rep.add("extrema_on_facets", "no interior extremum off a detected facet", len(stray), 0.0, not stray)
    if worst_at is not None:
        rep.summary["creation_tightest"] = {"time": worst_at[0], "left": worst_at[1], "right": worst_at[2], "margin": worst_margin}


def _finish(rep: ExperimentReport, traj: TrajectoryReport, t0: float) -> ExperimentReport:
    rep.trajectory = traj
    tv = check_tv_monitor(traj)
    rep.add("tv_monitor", "slope variation grows by at most 10x per step after step 10", tv.observed, tv.bound, tv.passed)
    rep.summary.setdefault("n_steps", traj.n_steps)
    rep.summary.setdefault("max_ut_sup", float(np.max(traj.ut_sup)))
    rep.wall_clock = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# stagnation


def run_stagnation_zero(
    force: ForceField,
    T: float,
    grid: Grid,
    tau: float,
    *,
    op: OperatorSpec | None = None,
    eps: float = 1e-8,
    motion_threshold: float = 1e-2,
    snapshot_times=None,
) -> ExperimentReport:
    """Evolve from ``u0 = 0``; the profile must stay zero when the primitive of
    the force fits in a band of width 2 at every sampled time, and must move
    otherwise."""
    t0 = time.perf_counter()
    op = OperatorSpec.linear() if op is None else op
    rep = ExperimentReport("stagnation-zero", {"T": T, "n_cells": grid.n_cells, "tau": tau, "eps": eps, "force": force.to_dict(), "operator": op.kind.value})
    widths = [band_width(force.slice(t)) for t in _sample_times(force, T)]
    band_ok = max(widths) <= 2.0 + 1e-12
    rep.summary["band_width_max"] = max(widths)
    rep.summary["mode"] = "EXPECT_STATIC" if band_ok else "EXPECT_MOTION"
    u0 = Profile.zeros(grid)
    traj = evolve(u0, force, op, tau, T, grid, snapshot_times=_default_snapshots(T) if snapshot_times is None else snapshot_times)
    sup = float(np.max(traj.sup_to_initial))
    final = float(np.max(np.abs(traj.final.values)))
    if band_ok:
        rep.add("band_condition", "primitive range width <= 2 at all sampled times", max(widths), 2.0, True)
        snap_sup = max(float(np.max(np.abs(p.values))) for p in traj.snapshots) if traj.snapshots else 0.0
        rep.add("static_zero", f"|u(t)|_inf <= {eps:g} at every step", max(sup, snap_sup), eps, max(sup, snap_sup) <= eps)
    else:
        rep.add("band_condition", "violated: motion expected", max(widths), 2.0, True)
        rep.add("motion_detected", f"|u(T)|_inf > {motion_threshold:g}", final, motion_threshold, final > motion_threshold)
        A = _constant_value(force)
        if A is not None and op.kind.value == "tv_plus_linear":
            # steady convention F = -f; the solution for F = -A is -u_A
            sol = steady.solve_constant_force(op, abs(A))
            ref = sol.sample(grid).values * (-np.sign(A))
            d_final = float(np.max(np.abs(traj.final.values - ref)))
            d_init = float(np.max(np.abs(ref)))
            rep.add("approach_constant_steady", "|u(T) - u_A|_inf below its initial value", d_final, d_init, d_final < d_init)
            rep.summary["distance_to_constant_steady"] = d_final
    creation_checks(rep, traj)
    return _finish(rep, traj, t0)


def _constant_value(force: ForceField) -> float | None:
    s = force.slice(0.0)
    if force.ramp_terms and force.time_law is not TimeLaw.CONSTANT:
        if np.any(force.ramp_slice().values != 0):
            return None
    vals = np.unique(s.values)
    return float(vals[0]) if vals.size == 1 else None


def run_stagnation_steady(
    T: float,
    grid: Grid,
    tau: float,
    *,
    cap: float = 10.0,
    perturbation=None,
    A: float = 4.0,
    op: OperatorSpec | None = None,
    eps: float | None = None,
    snapshot_times=None,
) -> ExperimentReport:
    """Start from the steady state of ``F = A`` and add ``min(t, cap)`` times a
    perturbation supported on its facet; the profile must not move while the
    facet stagnation conditions hold."""
    t0 = time.perf_counter()
    op = OperatorSpec.linear() if op is None else op
    terms = BREAKING_RAMP if perturbation is None else tuple(tuple(t) for t in perturbation)
    steady_field = ForceField(((0.0, 1.0, A),), terms, TimeLaw.CLIPPED_RAMP, cap, 1.0)
    force = ForceField(((0.0, 1.0, A),), terms, TimeLaw.CLIPPED_RAMP, cap, -1.0)
    u0 = steady.solve_steady_numeric(op, steady_field.slice(0.0), grid)
    norm0 = float(np.max(np.abs(u0.values)))
    eps = 1e-6 * max(1.0, norm0) if eps is None else eps
    rep = ExperimentReport("stagnation-steady", {"T": T, "n_cells": grid.n_cells, "tau": tau, "cap": cap, "A": A, "perturbation": [list(t) for t in terms], "eps": eps, "operator": op.kind.value})
    xm, xp = 0.5 - 1.0 / A, 0.5 + 1.0 / A
    spade = stagnation_conditions_check(steady_field, xm, xp, _sample_times(steady_field, T))
    rep.summary["subinterval_max"] = max(spade.worst_subinterval)
    rep.summary["mode"] = "EXPECT_STATIC" if spade.passed else "EXPECT_MOTION"
    traj = evolve(u0, force, op, tau, T, grid, snapshot_times=_default_snapshots(T) if snapshot_times is None else snapshot_times)
    sup = float(np.max(traj.sup_to_initial))
    if spade.passed:
        rep.add("stagnation_conditions", "support, mean 2 and sub-integrals < 2 at all sampled times", max(spade.worst_subinterval), 2.0, True)
        rep.add("static_steady", f"|u(t) - u0|_inf <= {eps:g} for t <= T", sup, eps, sup <= eps)
    else:
        failed = [n for n, ok in (("support", all(spade.support)), ("mean", all(spade.mean)), ("subinterval", all(spade.subinterval))) if not ok]
        rep.add("stagnation_conditions", "violated: motion expected (" + ",".join(failed) + ")", max(spade.worst_subinterval), 2.0, True)
        rep.add("motion_detected", f"|u(t) - u0|_inf > {eps:g} for some t", sup, eps, sup > eps)
    rep.profiles["initial"] = u0
    creation_checks(rep, traj)
    return _finish(rep, traj, t0)


# ---------------------------------------------------------------------------
# creation


def run_creation(
    force: ForceField,
    u0: Profile,
    T: float,
    grid: Grid,
    tau: float,
    *,
    op: OperatorSpec | None = None,
    snapshot_times=None,
) -> ExperimentReport:
    """Evolve ``u0`` and check that every interior extremum sits on a facet
    at least as long as the creation bound."""
    t0 = time.perf_counter()
    op = OperatorSpec.linear() if op is None else op
    rep = ExperimentReport("creation", {"T": T, "n_cells": grid.n_cells, "tau": tau, "force": force.to_dict(), "operator": op.kind.value})
    snaps = snapshot_times if snapshot_times is not None else _default_snapshots(T, [10 * tau])
    traj = evolve(u0, force, op, tau, T, grid, snapshot_times=snaps)
    creation_checks(rep, traj)
    rep.summary["facet_counts"] = [len(fs.of_kind(FacetKind.MIN, FacetKind.MAX)) for fs in traj.facet_history]
    return _finish(rep, traj, t0)


def tent(grid: Grid, height: float = 0.25) -> Profile:
    """Tent profile peaking at ``x = 1/2``."""
    return Profile.from_function(grid, lambda x: height * (1.0 - np.abs(2.0 * x - 1.0)))


# ---------------------------------------------------------------------------
# breaking


def decay_fit(times: np.ndarray, dist_sq: np.ndarray, window: tuple[float, float], floor: float):
    """Least-squares slope of ``log dist_sq`` over window samples above ``floor``.

    Returns ``(slope, n_used)``; the slope is ``nan`` with fewer than 3 samples.
    """
    m = (times >= window[0]) & (times <= window[1]) & (dist_sq > floor)
    if np.count_nonzero(m) < 3:
        return math.nan, int(np.count_nonzero(m))
    slope = np.polyfit(times[m], np.log(dist_sq[m]), 1)[0]
    return float(slope), int(np.count_nonzero(m))


def run_breaking(
    alpha: float,
    T: float | None,
    grid: Grid,
    tau: float,
    *,
    eps_stag: float | None = None,
    delta_t: float | None = None,
    sigma_rate: float = 9.0,
    converged_l2: float = 1e-6,
    snapshot_times=None,
    light: bool = False,
) -> ExperimentReport:
    """Ramp ``f_alpha`` on top of the constant-force steady state.

    Phases: stagnation up to ``t = 12 - delta_t``; breaking into
    MIN-MAX-MIN facets iff ``alpha > 12`` with the final state matching the
    analytic three-facet profile; exponential L2 decay towards the discrete
    steady state of the frozen force after ``t = alpha``.  ``light`` skips
    the decay fit and cross-checks not needed to decide breaking.
    """
    t0 = time.perf_counter()
    op = OperatorSpec.linear()
    alpha = float(alpha)
    T = alpha + 20.0 if T is None else float(T)
    h = grid.h
    delta_t = 5 * tau if delta_t is None else delta_t
    u0 = steady.solve_steady_numeric(op, ForceSlice.constant(4.0), grid)
    norm0 = float(np.max(np.abs(u0.values)))
    eps_stag = 1e-6 * norm0 if eps_stag is None else eps_stag
    frozen = alpha_force(alpha, ramp=False)
    target = steady.solve_steady_numeric(op, frozen, grid, initial=u0)
    force = alpha_force(alpha, sign=-1.0)
    rep = ExperimentReport(
        "breaking",
        {"alpha": alpha, "T": T, "n_cells": grid.n_cells, "tau": tau, "eps_stag": eps_stag, "delta_t": delta_t, "sigma_rate": sigma_rate},
    )
    snaps = snapshot_times if snapshot_times is not None else _default_snapshots(T, [10 * tau, 12.0, alpha])
    traj = evolve(u0, force, op, tau, T, grid, snapshot_times=snaps, target=target)
    rep.profiles["initial"] = u0
    rep.profiles["target"] = target

    # phase 1: stagnation
    t_stag = min(12.0, T) - delta_t
    m = traj.times <= t_stag + 1e-9
    stag = float(np.max(traj.sup_to_initial[m])) if m.any() else 0.0
    rep.add("stagnation", f"|u(t) - u0|_inf <= {eps_stag:.3g} for t <= {t_stag:g}", stag, eps_stag, stag <= eps_stag)

    # phase 2/3: breaking
    region = (BREAKING_REGION[0] - 2 * h, BREAKING_REGION[1] + 2 * h)
    final_facets = traj.facet_history[-1]
    n_final = final_facets.count_in(*region)
    n_max = int(np.max(traj.n_facets))
    broke = n_max >= 3
    rep.summary.update({"broke": broke, "max_facet_count": n_max, "final_facet_count": n_final, "final_facets": final_facets.to_dict()["facets"]})
    k_break = np.flatnonzero(traj.n_facets >= 3)
    rep.summary["break_time"] = float(traj.times[k_break[0]]) if k_break.size else None
    initial_count = traj.facet_history[0].count_in(*region) if traj.snapshot_times and traj.snapshot_times[0] == 0.0 else 1
    if alpha > steady.BREAKING_THRESHOLD:
        kinds = [f.kind for f in final_facets if f.left >= region[0] and f.right <= region[1] and f.is_extremum]
        rep.add("breaking", "facet count over [1/4, 3/4] goes 1 -> 3 (MIN, MAX, MIN)", f"{initial_count}->{n_final}", None, initial_count == 1 and kinds == [FacetKind.MIN, FacetKind.MAX, FacetKind.MIN])
        if not light:
            sol = steady.solve_three_facet(op, alpha)
            ref = sol.sample(grid)
            d = traj.final.sup_distance(ref)
            rep.add("final_vs_analytic", "|u(T) - u_alpha|_inf <= 2h", d, 2 * h, d <= 2 * h)
            expected = [(0.25, sol.params["c"]), (sol.params["e"], 1 - sol.params["e"]), (1 - sol.params["c"], 0.75)]
            ext = [f for f in final_facets if f.is_extremum]
            if len(ext) == 3:
                dev = max(max(abs(f.left - a), abs(f.right - b)) for f, (a, b) in zip(ext, expected))
            else:
                dev = math.inf
            rep.add("final_facet_endpoints", "within 2h of the analytic facets", dev, 2 * h, dev <= 2 * h)
            F = frozen.slice(0.0)
            tol_bal = 4 * h * F.sup_abs()
            bal = max((facet_flux_balance(f, F) for f in ext), default=math.inf)
            rep.add("facet_flux_balance", "|int F - (+2, -2, +2)| within endpoint resolution", bal, tol_bal, len(ext) == 3 and bal <= tol_bal)
            gap = min(sol.params["c"] - 0.25, 1 - 2 * sol.params["e"], sol.params["e"] - sol.params["c"])
            rep.summary["resolution_adequate"] = bool(gap >= 8 * h)
    else:
        rep.add("no_breaking", "facet count stays 1 over [1/4, 3/4]", n_max, 1.0, n_max == 1 and n_final == 1)
        if not light:
            d = traj.final.sup_distance(target)
            rep.add("final_vs_steady", "|u(T) - u_alpha^h|_inf <= 2h", d, 2 * h, d <= 2 * h)

    # phase 4: convergence after the force freezes
    if not light:
        l2 = traj.l2_distance_to_target
        dsq = l2 ** 2
        floor = (1e-10 * max(1.0, float(np.max(np.abs(target.values))))) ** 2
        after = traj.times > alpha
        d_after = dsq[after]
        rise = float(np.max(np.diff(d_after))) if d_after.size > 1 else 0.0
        rep.add("l2_nonincreasing", "|u - u_alpha^h|_2^2 nonincreasing after t = alpha (slack: floor)", rise, floor, rise <= floor)
        final_l2 = float(l2[-1])
        rep.add("converged", f"|u(T) - u_alpha^h|_2 < {converged_l2:g}", final_l2, converged_l2, final_l2 < converged_l2)
        if alpha > steady.BREAKING_THRESHOLD:
            window = (alpha + 1.0, alpha + 5.0)
            slope, used = decay_fit(traj.times, dsq, window, floor)
            rep.add("decay_rate", f"fitted slope of log|u - u_alpha^h|_2^2 on [{window[0]:g}, {window[1]:g}] <= -{sigma_rate:g}", slope, sigma_rate, used >= 3 and slope <= -sigma_rate)
            rep.summary["decay_fit_samples"] = used
            rep.summary["decay_floor"] = floor

    # a priori bound: the time derivative grows no faster than the force does
    fti = f_t_integral(force, T)
    ub = check_ut_bound(traj, fti, 0.0)
    rep.add("ut_bound", f"max ut_sup <= 1.1 * int |f_t|_inf ({fti:g}) + 10 tau", ub.observed, ub.bound, ub.passed)
    rep.summary["f_t_integral"] = fti
    creation_checks(rep, traj)
    return _finish(rep, traj, t0)


@dataclass
class SweepResult:
    alphas: list
    broke: dict
    reports: list
    estimate: float | None
    bracket: tuple
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def estimate_text(self) -> str:
        if self.estimate is not None:
            return f"{self.estimate:.6g}"
        lo, hi = self.bracket
        return f"> {lo:g}" if hi is None else f"< {hi:g}"


def alpha_sweep(
    alphas,
    T: float | None,
    grid: Grid,
    tau: float,
    *,
    delta: float = 0.5,
    refine_steps: int = 0,
    light: bool = True,
) -> SweepResult:
    """Run the breaking scenario per alpha and bisect the breaking threshold.

    The estimate is the midpoint of the bracket between the largest
    non-breaking and the smallest breaking alpha, after ``refine_steps``
    extra bisection runs.  ``T = None`` runs each case to ``alpha + 20``.
    """
    alphas = sorted(float(a) for a in alphas)
    broke, reports = {}, []

    def run(a):
        r = run_breaking(a, T, grid, tau, light=light)
        reports.append(r)
        broke[a] = bool(r.summary["broke"])
        return broke[a]

    for a in alphas:
        run(a)
    no = [a for a in alphas if not broke[a]]
    yes = [a for a in alphas if broke[a]]
    lo = max(no) if no else None
    hi = min(yes) if yes else None
    checks = []
    mism = [a for a in alphas if broke[a] != (a > steady.BREAKING_THRESHOLD)]
    checks.append(Check("breaking_set", "breaking exactly for alpha > 12", ",".join(f"{a:g}" for a in yes) or "none", None, not mism))
    monotone = lo is None or hi is None or lo < hi
    checks.append(Check("monotone_outcomes", "no breaking alpha below a non-breaking one", f"{lo}..{hi}", None, monotone))
    estimate = None
    if lo is not None and hi is not None and monotone:
        for _ in range(refine_steps):
            mid = 0.5 * (lo + hi)
            if run(mid):
                hi = mid
            else:
                lo = mid
        estimate = 0.5 * (lo + hi)
        err = abs(estimate - steady.BREAKING_THRESHOLD)
        checks.append(Check("threshold_estimate", f"within {delta:g} of 12", estimate, delta, err <= delta))
    return SweepResult(alphas, broke, reports, estimate, (lo, hi), checks)
