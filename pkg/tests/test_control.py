import math

import numpy as np
import pytest

from skewlab.circle import sine_c0_distance
from skewlab.constants import ControlConstants
from skewlab.control import (
    certify_controlled,
    certify_expansion,
    check_holder,
    check_rotation,
    check_weak_orbit,
    expansion_cover,
    interval_expansion,
    measure_predictability,
    predictability_bound,
)
from skewlab.orbits import PeriodicOrbit, seed_orbit
from skewlab.skew import SkewSystem
from skewlab.symbolic import PeriodicSequence

BETA = 1 - math.log(1.5) / (0.7 * math.log(2))


def test_holder_unperturbed(default_sys):
    rep = check_holder(default_sys, 1.5, 1.0, 0.7, samples=8)
    assert rep["passed"]
    assert abs(rep["max_derivative"] - 1 / (1 - 0.1 * math.pi)) < 1e-12
    assert abs(rep["max_derivative"] - 1.458) < 1e-3


def test_step_locality(default_sys):
    a = PeriodicSequence("0312450")
    b = PeriodicSequence("0321")
    assert sine_c0_distance(default_sys.fiber_map_at(a), default_sys.fiber_map_at(b)) == 0.0


def test_holder_tail_of_small_perturbation():
    sys_ = SkewSystem.default(delta_pert=1e-6, seed=2)
    rep = check_holder(sys_, 1.5, 1e-4, 0.7, samples=8, tail_only=True)
    assert rep["passed"]
    # geometric series bound on the exact tail ratio
    geo = 2e-6 / (1 - 2**-0.7) * 2 ** (0.7 * 41)
    assert rep["tail_ratio_exact"] <= geo


def test_expansion_cover_contains_short_arcs():
    starts, length = expansion_cover(0.07)
    h = starts[1] - starts[0]
    assert length == pytest.approx(0.07 + h)
    rng = np.random.default_rng(0)
    for lo in rng.random(200):
        k = int(lo // h)
        assert starts[k] <= lo and lo + 0.07 <= starts[k] + length + 1e-15


def test_expansion_forward_examples(default_sys):
    j, v = interval_expansion(default_sys, -0.035, 0.035)
    assert j == 1
    assert v >= 1 + 0.1 * math.pi * math.cos(2 * math.pi * 0.035) - 1e-12
    assert v > 1.09
    assert interval_expansion(default_sys, 1 / 3 - 0.035, 1 / 3 + 0.035)[0] == 2
    rep = certify_expansion(default_sys, 1.085, 0.07, "forward")
    assert rep["passed"] and rep["nu_certified"] > 1.085


def test_expansion_backward_near_attractor(default_sys):
    j, v = interval_expansion(default_sys, 0.5 - 0.035, 0.5 + 0.035, "backward")
    assert j == 1 and v > 1.4


def test_expansion_bound_is_sound(default_sys):
    # the certified bound never exceeds the sampled minimum on the arc
    rng = np.random.default_rng(1)
    for lo in rng.random(20):
        for direction in ("forward", "backward"):
            j, v = interval_expansion(default_sys, lo, lo + 0.07, direction)
            g = default_sys.family[j]
            xs = np.linspace(lo, lo + 0.07, 501) % 1.0
            d = g.deriv(xs) if direction == "forward" else 1.0 / g.deriv(g.invert(xs))
            assert v <= d.min() + 1e-12


def test_rotation_examples():
    assert check_rotation(SkewSystem.default(), 0.02)["distance"] == 0.0
    rep = check_rotation(SkewSystem.default(delta_pert=5e-7, seed=0), 0.02)
    assert rep["passed"]
    assert rep["margin"] >= 1e-5 - 2 * 5e-7 / (1 - 2**-0.7)
    assert not check_rotation(SkewSystem.default(delta_pert=1e-3, seed=0), 0.02)["passed"]


def test_weak_orbit_examples(default_sys):
    X = seed_orbit(default_sys)
    assert check_weak_orbit(default_sys, X, 1.09)
    assert abs(X.exponent + math.log(1.09) - 0.0213) < 1e-3
    edge = PeriodicOrbit("4", 0.0, -math.log(1.09))
    assert not check_weak_orbit(default_sys, edge, 1.09)
    with pytest.raises(ValueError):
        check_weak_orbit(default_sys, PeriodicOrbit("4", 0.0, 0.0), 1.09)


def test_predictability_unperturbed_is_zero(default_sys):
    rep = measure_predictability(default_sys, 5, trials=6, completions=6, seed=0)
    assert rep["gamma_measured"] == 0.0


def test_predictability_monotone_in_m():
    sys_ = SkewSystem.default(delta_pert=1e-6, seed=0)
    a = measure_predictability(sys_, 3, 4, 4, seed=7)["per_m"]
    b = measure_predictability(sys_, 5, 4, 4, seed=7)["per_m"]
    assert b[:3] == a
    assert all(x <= y for x, y in zip(b, b[1:]))


def test_predictability_bound_examples():
    assert abs(ControlConstants().beta - 0.16434) < 1e-5
    assert predictability_bound(1.5, 1.0, 0.7, 0.0, 3.0) == 0.0
    assert predictability_bound(1.5, 1.0, 0.7, 1e-6, 2.0) == pytest.approx(2.0 * 1e-6**BETA)
    with pytest.raises(ValueError):
        predictability_bound(1.5, 1.0, math.log2(1.5), 1e-6, 1.0)


def test_consistency_flags():
    assert ControlConstants().consistency()["passed"]
    assert not ControlConstants(gamma=0.02 / 10).consistency()["passed"]
    assert not ControlConstants(delta1=0.04).consistency()["passed"]
    with pytest.raises(ValueError):
        ControlConstants(nu=1.0)


def test_certificate_layout(default_sys):
    cert = certify_controlled(default_sys, ControlConstants(K=1.0), holder_samples=4, m_max=3, trials=3, completions=3)
    for key in ("holder", "expansion_forward", "expansion_backward", "rotation", "weak_orbit", "predictability", "consistency"):
        assert "passed" in cert[key]
    assert cert["passed"] == (not cert["failed"])
    assert len(cert["expansion_forward"]["table"]) == cert["expansion_forward"]["intervals"]
    # a passing check never carries a non-positive margin
    for key in ("rotation", "weak_orbit", "predictability"):
        if cert[key]["passed"]:
            assert cert[key]["margin"] > 0


def test_certificate_pass_fail_is_seed_stable(default_sys):
    a = certify_controlled(default_sys, ControlConstants(K=1.0), seed=0, holder_samples=4, m_max=3, trials=3, completions=3)
    b = certify_controlled(default_sys, ControlConstants(K=1.0), seed=9, holder_samples=4, m_max=3, trials=3, completions=3)
    assert a["failed"] == b["failed"]
