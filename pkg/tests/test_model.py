import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from facetflow.model import (
    BREAKING_RAMP,
    ForceField,
    ForceSlice,
    Grid,
    ModelError,
    OperatorKind,
    OperatorSpec,
    PiecewisePolynomial,
    Profile,
    TimeLaw,
    alpha_force,
    eval_force,
    eval_operator,
)

CUBIC = OperatorSpec.regular([-1.0, 1.0], [[2.0 / 3.0, 1.0], [0.0, 0.0, 0.0, 1.0 / 3.0], [-2.0 / 3.0, 1.0]])


def ops():
    return [OperatorSpec.tv(), OperatorSpec.linear(), CUBIC]


def test_linear_operator_values():
    op = OperatorSpec.linear()
    assert eval_operator(op, 0.5) == (1.5, 1.5)
    assert eval_operator(op, -0.5) == (-1.5, -1.5)
    assert eval_operator(op, 0.0) == (-1.0, 1.0)


def test_tv_only_is_pure_sign():
    op = OperatorSpec.tv()
    assert eval_operator(op, 3.0) == (1.0, 1.0)
    assert eval_operator(op, -1e-9) == (-1.0, -1.0)
    assert eval_operator(op, 0.0) == (-1.0, 1.0)


def test_regular_must_be_nondecreasing():
    with pytest.raises(ModelError):
        OperatorSpec.regular([0.0], [[0.0, -1.0], [0.0, 1.0]])


def test_piecewise_polynomial_rejects_jumps():
    with pytest.raises(ModelError):
        PiecewisePolynomial([0.0], [[0.0], [1.0]])


def test_cubic_regular_part_is_continuous_and_monotone():
    lr = CUBIC.regular_part
    assert lr.is_nondecreasing()
    assert lr(-1.0) == pytest.approx(-1.0 / 3.0)
    assert lr(1.0) == pytest.approx(1.0 / 3.0)
    assert not lr.is_affine


def test_primitive_is_zero_at_zero_and_differentiates_back():
    lr = CUBIC.regular_part
    w = lr.primitive()
    assert w(0.0) == 0.0
    p = np.linspace(-3, 3, 41)
    dp = 1e-6
    assert np.allclose((w(p + dp) - w(p - dp)) / (2 * dp), lr(p), atol=1e-8)


def test_eval_operator_rejects_nonfinite():
    with pytest.raises(ModelError):
        eval_operator(OperatorSpec.linear(), float("nan"))


@given(st.sampled_from(range(3)), st.floats(-50, 50), st.floats(-50, 50))
def test_operator_graph_is_monotone(k, p, q):
    op = ops()[k]
    if p > q:
        p, q = q, p
    lo_p, hi_p = op.interval(p)
    lo_q, hi_q = op.interval(q)
    assert lo_p <= hi_p
    if p < q:
        assert hi_p <= lo_q + 1e-12


@given(st.sampled_from(range(3)), st.floats(-20, 20), st.floats(-20, 20))
def test_potential_is_convex_along_chords(k, p, q):
    op = ops()[k]
    m = 0.5 * (p + q)
    assert op.potential(m) <= 0.5 * (op.potential(p) + op.potential(q)) + 1e-9 * (1 + abs(p) + abs(q)) ** 4


def test_operator_kind_roundtrip():
    assert OperatorSpec("tv_plus_linear").kind is OperatorKind.TV_PLUS_LINEAR


# forces


def test_alpha_force_values():
    f = alpha_force(16.0)
    assert eval_force(f, 0.1, 100.0) == 4.0
    assert eval_force(f, 0.3, 100.0) == 20.0
    assert eval_force(f, 0.5, 100.0) == -12.0
    assert eval_force(f, 0.5, 5.0) == -1.0


def test_alpha_force_frozen_matches_ramp_after_cap():
    ramp = alpha_force(16.0).slice(30.0)
    frozen = alpha_force(16.0, ramp=False).slice(0.0)
    x = np.linspace(0, 1, 257)
    assert np.array_equal(ramp(x), frozen(x))


def test_indicator_is_right_continuous_and_closed_at_one():
    f = ForceField(((0.25, 0.75, 1.0), (0.5, 1.0, 2.0)))
    assert eval_force(f, 0.25, 0.0) == 1.0
    assert eval_force(f, 0.75, 0.0) == 2.0
    assert eval_force(f, 1.0, 0.0) == 2.0
    assert eval_force(f, 0.2499, 0.0) == 0.0


def test_global_sign_flips_field():
    f = alpha_force(16.0, sign=-1.0)
    assert eval_force(f, 0.3, 20.0) == -20.0


def test_ramp_terms_have_zero_mean():
    s = ForceSlice.from_terms(BREAKING_RAMP)
    assert s.integral(0.0, 1.0) == 0.0


def test_force_primitive_is_exact():
    s = ForceSlice.from_terms(((0.0, 1.0, 4.0),) + BREAKING_RAMP)
    assert s.primitive(0.375) == pytest.approx(4 * 0.375 + 0.125)
    assert s.integral(0.25, 0.75) == pytest.approx(2.0)


@pytest.mark.parametrize("bad", [[(0.9, 0.3, 1.0)], [(0.0, 1.5, 1.0)], [(0.1, 0.2)], [(0.1, 0.2, float("inf"))]])
def test_malformed_terms_rejected(bad):
    with pytest.raises(ModelError):
        ForceField(tuple(bad))


def test_bad_sign_and_cap_rejected():
    with pytest.raises(ModelError):
        ForceField(global_sign=2.0)
    with pytest.raises(ModelError):
        ForceField(ramp_terms=((0, 1, 1),), time_law=TimeLaw.CLIPPED_RAMP, cap=-1.0)


def test_eval_force_domain():
    with pytest.raises(ModelError):
        eval_force(ForceField(), 1.5, 0.0)
    with pytest.raises(ModelError):
        eval_force(ForceField(), 0.5, -1.0)


def test_average_sampling_is_symmetric_for_symmetric_force():
    g = Grid(1024)
    f = alpha_force(16.0, ramp=False).slice(0.0).sample(g, "average")
    assert np.array_equal(f, f[::-1])


def test_average_sampling_preserves_integrals():
    g = Grid(64)
    s = ForceSlice.from_terms(((0.1, 0.37, 3.0), (0.5, 0.61, -2.0)))
    vals = s.sample(g, "average")
    # interior control volumes tile [h/2, 1 - h/2]
    assert g.h * vals[1:-1].sum() == pytest.approx(s.integral(g.h / 2, 1 - g.h / 2))


def test_unknown_sampling_mode():
    with pytest.raises(ModelError):
        ForceSlice.constant(1.0).sample(Grid(8), "spline")


def test_law_rate_integral():
    f = alpha_force(16.0)
    assert f.law_rate_integral(10.0) == 10.0
    assert f.law_rate_integral(40.0) == 16.0
    assert ForceField.constant(3.0).law_rate_integral(5.0) == 0.0


# grid and profile


def test_grid_validation():
    with pytest.raises(ModelError):
        Grid(3)
    g = Grid(8)
    assert g.h == 0.125 and g.x[-1] == 1.0 and g.x.size == 9


def test_profile_enforces_dirichlet():
    g = Grid(4)
    with pytest.raises(ModelError):
        Profile(g, [0.0, 1.0, 0.0, 0.0, 1e-300])
    with pytest.raises(ModelError):
        Profile(g, [0.0, 1.0, 0.0])
    with pytest.raises(ModelError):
        Profile(g, [0.0, np.nan, 0.0, 0.0, 0.0])


def test_profile_is_immutable():
    u = Profile.zeros(Grid(4))
    with pytest.raises(ValueError):
        u.values[1] = 1.0


def test_profile_norms():
    g = Grid(4)
    u = Profile(g, [0.0, 1.0, 2.0, 1.0, 0.0])
    assert u.sup_distance(Profile.zeros(g)) == 2.0
    assert u.l2_distance(Profile.zeros(g)) == pytest.approx(np.sqrt(0.25 * 6.0))
    assert np.array_equal(u.slopes, [4.0, 4.0, -4.0, -4.0])
