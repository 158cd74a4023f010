import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from facetflow.model import ForceField, ForceSlice, Grid, ModelError, OperatorSpec, Profile, alpha_force
from facetflow.prox import StepProblem, brute_force_step_oracle
from facetflow.steady import (
    RefusedNoBreaking,
    SteadyNonConvergence,
    solve_constant_force,
    solve_steady_numeric,
    solve_three_facet,
    three_facet_endpoints,
    verify_steady,
)

L1 = OperatorSpec.linear()


def test_constant_force_four():
    sol = solve_constant_force(L1, 4.0)
    (a, b, level), = sol.facets
    assert (a, b) == (0.25, 0.75)
    assert level == -0.125
    x = np.linspace(0, 0.25, 11)
    assert np.allclose(sol.value(x), 2 * x**2 - x, atol=1e-15)
    assert sol.flux_at_zero == -2.0


@pytest.mark.parametrize("A", [0.0, 1.0, 2.0])
def test_constant_force_below_band_is_zero(A):
    sol = solve_constant_force(L1, A)
    assert np.all(sol.sample(Grid(64)).values == 0.0)
    assert verify_steady(sol, L1, ForceSlice.constant(A)).passed


@pytest.mark.parametrize("A", [2.5, 4.0, 7.0, 30.0])
def test_constant_force_facet_width_and_balance(A):
    sol = solve_constant_force(L1, A)
    (a, b, _), = sol.facets
    assert b - a == pytest.approx(2.0 / A)
    assert ForceSlice.constant(A).integral(a, b) == pytest.approx(2.0)
    assert verify_steady(sol, L1, ForceSlice.constant(A), 1e-12).passed


def test_closed_forms_need_linear_operator():
    with pytest.raises(ModelError):
        solve_constant_force(OperatorSpec.tv(), 4.0)
    with pytest.raises(ModelError):
        solve_three_facet(OperatorSpec.tv(), 16.0)


def test_level_confirmed_by_lattice_oracle():
    # coarse independent check of the facet level: many proximal steps of the
    # lattice-search oracle from zero converge to the steady minimiser
    grid = Grid(8)
    f = -np.full(9, 4.0)
    u = Profile.zeros(grid)
    for _ in range(6):
        u = brute_force_step_oracle(StepProblem(u, f, 10.0, L1, grid), resolution=1e-6)
    num = solve_steady_numeric(L1, ForceSlice.constant(4.0), grid, sampling="midpoint")
    assert u.sup_distance(num) <= 1e-4
    assert u.values[4] == pytest.approx(-0.125, abs=1e-4)


@pytest.mark.parametrize("alpha,c,e", [(16.0, 0.35, 0.5 - 1.0 / 12.0), (28.0, 0.3125, 0.5 - 1.0 / 24.0)])
def test_three_facet_endpoints(alpha, c, e):
    cc, ee = three_facet_endpoints(alpha)
    assert cc == pytest.approx(c, abs=1e-15) and ee == pytest.approx(e, abs=1e-15)
    sol = solve_three_facet(L1, alpha)
    assert abs(sol.compatibility_residual) <= 1e-12


def test_threshold_limit_and_refusal():
    assert three_facet_endpoints(12.0) == (0.375, 0.375)
    for alpha in (12.0, 8.0):
        with pytest.raises(RefusedNoBreaking, match="REFUSED_NO_BREAKING"):
            solve_three_facet(L1, alpha)


@pytest.mark.parametrize("alpha", [12.5, 16.0, 24.0, 100.0])
def test_three_facet_is_steady_and_smooth(alpha):
    sol = solve_three_facet(L1, alpha)
    assert verify_steady(sol, L1, alpha_force(alpha, ramp=False), 1e-12).passed
    knots = [p.right for p in sol.pieces[:-1]]
    for k in knots:
        assert sol.value(k - 1e-13) == pytest.approx(sol.value(k + 1e-13), abs=1e-11)
        assert sol.slope(k - 1e-13) == pytest.approx(sol.slope(k + 1e-13), abs=1e-10)


@pytest.mark.parametrize("alpha", [13.0, 16.0, 28.0])
def test_three_facet_energy_constraint(alpha):
    sol = solve_three_facet(L1, alpha)
    F = alpha_force(alpha, ramp=False).slice(0.0)
    lo1, hi1, _ = sol.facets[0]
    lo2, hi2, _ = sol.facets[1]
    assert F.integral(lo1, hi1) == pytest.approx(2.0, abs=1e-12)
    assert F.integral(lo2, hi2) == pytest.approx(-2.0, abs=1e-12)
    assert F.integral(lo2, 0.5) == pytest.approx(-1.0, abs=1e-12)


def test_symmetry_is_exact():
    g = Grid(1024)
    for sol in (solve_constant_force(L1, 4.0), solve_three_facet(L1, 16.0)):
        v = sol.sample(g).values
        assert np.array_equal(v, v[::-1])
        x = np.arange(129) / 128.0  # dyadic, so 1 - x is exact
        assert np.array_equal(sol.value(x), sol.value(1 - x))


@given(st.floats(12.01, 60.0), st.floats(0.0, 30.0))
def test_ordering_in_alpha(a, da):
    x = np.linspace(0, 1, 401)
    lo = solve_three_facet(L1, a).value(x)
    hi = solve_three_facet(L1, a + da).value(x)
    assert np.all(lo <= hi + 1e-14)


def test_numeric_matches_constant_force():
    g = Grid(1024)
    u = solve_steady_numeric(L1, ForceSlice.constant(4.0), g)
    assert u.sup_distance(solve_constant_force(L1, 4.0).sample(g)) <= 2 * g.h


def test_numeric_matches_three_facet():
    g = Grid(1024)
    u = solve_steady_numeric(L1, alpha_force(16.0, ramp=False), g)
    assert u.sup_distance(solve_three_facet(L1, 16.0).sample(g)) <= 2 * g.h


def test_numeric_zero_force():
    u = solve_steady_numeric(L1, ForceSlice.constant(0.0), Grid(64))
    assert np.all(u.values == 0.0)


def test_numeric_nonconvergence_reports_residual():
    # TV-only with a force outside the band has no bounded minimiser
    with pytest.raises(SteadyNonConvergence) as exc:
        solve_steady_numeric(OperatorSpec.tv(), ForceSlice.constant(4.0), Grid(32), max_outer=5)
    assert exc.value.residual > 0


def test_numeric_rejects_bad_tol():
    with pytest.raises(ModelError):
        solve_steady_numeric(L1, ForceSlice.constant(1.0), Grid(8), tol=0.0)


def test_verify_zero_inside_band():
    g = Grid(256)
    x = np.linspace(0, 1, 65)
    vals = np.sin(2 * np.pi * 0.5 * (x[:-1] + x[1:]))
    F = ForceSlice(x, vals)
    rep = verify_steady(Profile.zeros(g), L1, F)
    assert rep.passed and rep.violation == 0.0


def test_verify_zero_under_large_force_fails():
    rep = verify_steady(Profile.zeros(Grid(256)), L1, ForceSlice.constant(4.0))
    assert not rep.passed
    assert rep.violation == pytest.approx(1.0, abs=1e-2)


def test_verify_accepts_field_and_time():
    g = Grid(256)
    f = ForceField(((0.0, 1.0, 1.0),))
    assert verify_steady(Profile.zeros(g), L1, f, t=3.0).passed
