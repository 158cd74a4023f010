import math

import numpy as np
import pytest

from facetflow.experiments import (
    Check,
    alpha_sweep,
    decay_fit,
    run_breaking,
    run_creation,
    run_stagnation_steady,
    run_stagnation_zero,
    tent,
)
from facetflow.model import ForceField, Grid

G = Grid(128)


def test_check_line_format():
    c = Check("x", "y <= 1", 0.5, 1.0, True)
    assert c.line().startswith("PASS x:")
    assert Check("x", "y", 2.0, 1.0, False).line().startswith("FAIL")


def test_stagnation_zero_in_band():
    f = ForceField(((0.0, 0.5, 3.0), (0.5, 1.0, -3.0)))
    rep = run_stagnation_zero(f, 1.0, G, 0.01)
    assert rep.summary["mode"] == "EXPECT_STATIC"
    assert rep.check("static_zero").observed == 0.0
    assert rep.passed


def test_stagnation_zero_negative_control_moves():
    rep = run_stagnation_zero(ForceField.constant(4.0), 2.0, G, 0.01)
    assert rep.summary["mode"] == "EXPECT_MOTION"
    assert rep.check("motion_detected").passed
    assert rep.check("approach_constant_steady").passed
    assert rep.passed


def test_stagnation_steady_default_ramp():
    rep = run_stagnation_steady(12.0, G, 0.01, cap=10.0)
    assert rep.summary["mode"] == "EXPECT_STATIC"
    assert rep.check("static_steady").passed
    assert rep.passed


def test_stagnation_steady_mean_violation_moves():
    rep = run_stagnation_steady(3.0, G, 0.01, cap=5.0, perturbation=[(0.25, 0.75, 1.0)])
    assert rep.summary["mode"] == "EXPECT_MOTION"
    assert rep.check("motion_detected").passed


def test_creation_from_tent():
    rep = run_creation(ForceField.constant(-4.0), tent(G), 1.0, G, 0.01)
    assert rep.check("creation_bound").passed
    assert rep.check("extrema_on_facets").passed
    assert rep.summary["facet_counts"][-1] >= 1


def test_decay_fit_recovers_rate():
    t = np.linspace(0, 5, 51)
    slope, used = decay_fit(t, 3.0 * np.exp(-12.0 * t), (1.0, 4.0), 1e-30)
    assert slope == pytest.approx(-12.0, rel=1e-10) and used == 31
    slope, used = decay_fit(t, np.full(51, 1e-40), (1.0, 4.0), 1e-30)
    assert math.isnan(slope) and used == 0


def test_breaking_small_grid():
    rep = run_breaking(16.0, None, G, 0.01)
    assert rep.summary["broke"]
    for name in ("stagnation", "breaking", "final_vs_analytic", "final_facet_endpoints", "l2_nonincreasing", "converged", "decay_rate", "ut_bound"):
        assert rep.check(name).passed, rep.check(name).line()


def test_no_breaking_below_threshold():
    rep = run_breaking(10.0, 25.0, G, 0.01)
    assert not rep.summary["broke"]
    assert rep.check("no_breaking").passed
    assert rep.check("final_vs_steady").passed


def test_sweep_brackets_threshold():
    res = alpha_sweep([8.0, 16.0], 30.0, Grid(64), 0.02, refine_steps=2, delta=2.0)
    assert res.bracket[0] < res.bracket[1]
    assert res.estimate is not None and abs(res.estimate - 12.0) <= 2.0
    assert [c.name for c in res.checks] == ["breaking_set", "monotone_outcomes", "threshold_estimate"]
    assert len(res.reports) == 4


def test_sweep_one_sided_bracket():
    res = alpha_sweep([8.0], 20.0, Grid(64), 0.02)
    assert res.estimate is None and res.estimate_text == "> 8"
