import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facetflow.evolve import (
    EvolutionFailure,
    check_tv_monitor,
    check_ut_bound,
    evolve,
    f_t_integral,
    snapshot_steps,
)
from facetflow.model import ForceField, ForceSlice, Grid, ModelError, OperatorSpec, Profile, alpha_force
from facetflow.steady import solve_constant_force, solve_steady_numeric

L1 = OperatorSpec.linear()


def test_zero_is_fixed_under_band_force():
    g = Grid(128)
    f = ForceField(((0.0, 0.5, 1.5), (0.5, 1.0, -1.5)))
    rep = evolve(Profile.zeros(g), f, L1, 0.01, 1.0)
    assert np.all(rep.final.values == 0.0)
    assert np.all(rep.ut_sup == 0.0)
    assert rep.n_steps == 100


def test_discrete_steady_state_is_fixed():
    g = Grid(256)
    # F = 4 in the steady convention is f = -4 in the evolution
    f = ForceField.constant(-4.0)
    u_star = solve_steady_numeric(L1, ForceSlice.constant(4.0), g)
    rep = evolve(u_star, f, L1, 0.01, 0.5)
    assert rep.final.sup_distance(u_star) <= 1e-9
    assert u_star.sup_distance(solve_constant_force(L1, 4.0).sample(g)) <= 2 * g.h


def test_trajectory_approaches_steady_state():
    g = Grid(256)
    u_star = solve_constant_force(L1, 4.0).sample(g)
    rep = evolve(Profile.zeros(g), ForceField.constant(-4.0), L1, 0.01, 3.0, target=u_star)
    d = rep.l2_distance_to_target
    assert np.all(np.diff(d) <= 1e-12)
    assert d[-1] <= 2 * g.h


@settings(max_examples=10)
@given(st.floats(0.0, 2.0), st.floats(0.0, 0.2))
def test_ordered_data_gives_ordered_trajectories(df, bump):
    g = Grid(32)
    x = g.x
    u0 = Profile.zeros(g)
    u1 = Profile(g, bump * 4.0 * x * (1.0 - x))
    f0 = ForceField(((0.2, 0.6, 3.0),))
    f1 = ForceField(((0.2, 0.6, 3.0), (0.0, 1.0, df)))
    a = evolve(u0, f0, L1, 0.02, 0.4, snapshot_times=np.linspace(0, 0.4, 5))
    b = evolve(u1, f1, L1, 0.02, 0.4, snapshot_times=np.linspace(0, 0.4, 5))
    for p, q in zip(a.snapshots, b.snapshots):
        assert np.all(p.values <= q.values + 1e-12)


def test_runs_are_deterministic():
    g = Grid(64)
    args = (Profile.zeros(g), alpha_force(16.0, sign=-1.0), L1, 0.05, 2.0)
    a, b = evolve(*args), evolve(*args)
    assert np.array_equal(a.final.values, b.final.values)
    assert np.array_equal(a.ut_sup, b.ut_sup)


def test_ut_bound_holds_and_corrupted_bound_fails():
    g = Grid(128)
    u0 = solve_constant_force(L1, 4.0).sample(g)
    force = alpha_force(16.0, sign=-1.0)
    rep = evolve(u0, force, L1, 0.01, 20.0)
    fint = f_t_integral(force, 20.0)
    assert fint == 16.0
    ok = check_ut_bound(rep, fint)
    assert ok.passed
    # a corrupted series, ten times over the bound, must be caught
    rep.ut_sup[5] = 10.0 * ok.bound
    bad = check_ut_bound(rep, fint)
    assert not bad.passed and bad.margin < 0


def test_tv_monitor_flags_jumps():
    g = Grid(64)
    rep = evolve(Profile.zeros(g), ForceField.constant(-4.0), L1, 0.01, 0.5)
    assert check_tv_monitor(rep).passed
    rep.tv_of_slope[30] = rep.tv_of_slope[29] * 50
    assert not check_tv_monitor(rep).passed


def test_snapshot_steps():
    assert snapshot_steps([0.0, 0.05, 0.1, 5.0], 0.01, 100) == [0, 5, 10, 100]
    assert snapshot_steps([1.0, 1.0], 0.5, 2) == [2]


def test_single_step_run():
    g = Grid(16)
    rep = evolve(Profile.zeros(g), ForceField.constant(1.0), L1, 0.1, 0.1, snapshot_times=[0.1])
    assert rep.n_steps == 1
    assert rep.snapshot_times == [0.1]


def test_snapshot_facets_are_recorded():
    g = Grid(128)
    rep = evolve(Profile.zeros(g), ForceField.constant(-4.0), L1, 0.01, 1.0, snapshot_times=[0.0, 1.0])
    assert len(rep.facet_history) == 2
    assert len(rep.facet_history[0]) == 1
    assert rep.n_facets[-1] >= 1


def test_step_failure_is_reported():
    g = Grid(64)
    rng = np.random.default_rng(1)
    v = np.concatenate(([0.0], rng.normal(size=63), [0.0]))
    with pytest.raises(EvolutionFailure) as exc:
        evolve(Profile(g, v), ForceField.constant(3.0), L1, 0.5, 1.0, tol=1e-300)
    assert exc.value.step == 1 and exc.value.residual > 0


def test_input_validation():
    g = Grid(8)
    u = Profile.zeros(g)
    with pytest.raises(ModelError):
        evolve(u, ForceField(), L1, 0.0, 1.0)
    with pytest.raises(ModelError):
        evolve(u, ForceField(), L1, 0.1, 0.01)
    with pytest.raises(ModelError):
        evolve(u, ForceField(), L1, 0.1, 1.0, grid=Grid(16))
