import dataclasses
import math

import numpy as np
import pytest

from skewlab.circle import arc_distance
from skewlab.constants import ControlConstants
from skewlab.orbits import (
    Neighborhood,
    PeriodicOrbit,
    ShadowReport,
    agreement_radius,
    cascade,
    epsilon_close,
    fiber_fixed_points,
    forge,
    orbit_exponent,
    orbit_trajectory,
    schedule_neighborhoods,
    seed_orbit,
    verify_forge,
)
from skewlab.skew import SkewPoint
from skewlab.symbolic import CylinderSpec, PeriodicSequence, word_array

THETA4 = 1 - 2 * math.pi * 0.01


@pytest.fixture(scope="module")
def seed(default_sys):
    return seed_orbit(default_sys)


@pytest.fixture(scope="module")
def first_forge(default_sys, seed):
    U = Neighborhood(CylinderSpec("0", 0), 0.5, 0.1)
    Y, rep = forge(default_sys, seed, U, 0.01)
    return U, Y, rep


def test_fixed_points_identity_is_degenerate(default_sys):
    assert fiber_fixed_points(default_sys, "5").degenerate


def test_fixed_points_of_g4(default_sys):
    fp = fiber_fixed_points(default_sys, "4")
    xs = sorted(x for x, _ in fp)
    assert len(xs) == 2 and abs(xs[0]) < 1e-12 and abs(xs[1] - 0.5) < 1e-12
    thetas = dict(fp.points)
    assert abs(thetas[xs[0]] - THETA4) < 1e-12
    assert thetas[xs[1]] > 1


@pytest.mark.parametrize("word", ["40", "14", "2304", "0000041"])
def test_fixed_point_counts_even_and_alternating(default_sys, word):
    fp = fiber_fixed_points(default_sys, word)
    assert len(fp) % 2 == 0
    kinds = [lt < 0 for lt in fp.log_thetas]
    assert all(a != b for a, b in zip(kinds, kinds[1:] + kinds[:1])) or not kinds


def test_fixed_points_stable_under_grid_doubling(default_sys):
    a = fiber_fixed_points(default_sys, "2304", grid=4096)
    b = fiber_fixed_points(default_sys, "2304", grid=8192)
    assert len(a) == len(b)
    for (x, _), (y, _) in zip(a, b):
        assert arc_distance(x, y) <= 2 / 4096


def test_orbit_exponent_examples():
    assert orbit_exponent(PeriodicOrbit.from_theta("4", 0.0, math.exp(-1))) == pytest.approx(-1.0)
    assert orbit_exponent(PeriodicOrbit.from_theta("4", 0.0, 0.93717)) == pytest.approx(-0.06489, abs=1e-5)
    a = PeriodicOrbit.from_theta("41", 0.0, 0.9)
    b = PeriodicOrbit.from_theta("4141", 0.0, 0.81)
    assert orbit_exponent(a) == pytest.approx(orbit_exponent(b))


def test_orbit_rejects_all_glue_word():
    with pytest.raises(ValueError):
        PeriodicOrbit("555", 0.0, -1.0)


def test_orbit_invariants(default_sys, seed):
    x, ld = default_sys.cocycle(seed.sequence(), seed.fiber_x, seed.period)
    assert arc_distance(x, seed.fiber_x) < 1e-10
    assert abs(ld - seed.log_theta) < 1e-10
    assert seed.theta == pytest.approx(math.exp(seed.period * seed.exponent))


def test_orbit_json_roundtrip(seed):
    d = seed.to_json()
    assert set(d) >= {"word", "fiber_x", "theta", "lambda", "period"}
    back = PeriodicOrbit.from_json(d)
    assert back.word == seed.word and back.log_theta == seed.log_theta


def test_epsilon_close_examples(default_sys):
    p = SkewPoint(PeriodicSequence("0123"), 0.3)
    assert epsilon_close(default_sys, p, p, 1e-9, 10)
    # fibers start eps/2 apart near the repeller of g1, then separate
    eps = 0.01
    x = SkewPoint(PeriodicSequence("1"), 0.001)
    y = SkewPoint(PeriodicSequence("1"), 0.001 + eps / 2)
    assert epsilon_close(default_sys, y, x, eps, 1)
    assert not epsilon_close(default_sys, y, x, eps, 30)
    # equal base words deep enough and equal fibers
    n = agreement_radius(eps) + 2
    core = "0123401234"[: 2 * n]
    a = SkewPoint(PeriodicSequence(core + "3" * 5 + core[:n], 0), 0.2)
    b = SkewPoint(PeriodicSequence(core + "2" * 5 + core[:n], 0), 0.2)
    assert epsilon_close(default_sys, a, b, 0.5, 2)


def test_kappa_formula():
    assert 1 - 3 * 0.01 / math.log(1.5) == pytest.approx(0.926, abs=1e-3)


def test_forge_spec_example(default_sys, seed, first_forge):
    U, Y, rep = first_forge
    assert Y.period >= 3 and Y.period > 2 * seed.period
    assert -0.9 * abs(seed.exponent) < Y.exponent < 0
    assert rep.kappa >= 1 - 3 * abs(seed.exponent) / math.log(1.5)
    assert U.hits(word_array(Y.word), orbit_trajectory(default_sys, Y)).size > 0
    assert verify_forge(default_sys, seed, Y, rep, ControlConstants(), [U]).passed


def test_forge_rejects_weak_margin(default_sys):
    X = PeriodicOrbit("4", 0.0, -math.log(1.085) + 0.005)
    with pytest.raises(ValueError):
        forge(default_sys, X, Neighborhood(CylinderSpec("0", 0), 0.5, 0.1), 0.01)


def test_verify_detects_bad_counts(default_sys, seed, first_forge):
    U, Y, rep = first_forge
    counts = rep.counts.copy()
    counts[0] += 1
    bad = dataclasses.replace(rep, counts=counts)
    v = verify_forge(default_sys, seed, Y, bad, ControlConstants(), [U])
    assert not v.passed and "equal_preimage_counts" in v.failed()
    # dropping one shadowing point also unbalances the counts
    bad = dataclasses.replace(rep, tilde=rep.tilde[1:])
    assert "equal_preimage_counts" in verify_forge(default_sys, seed, Y, bad).failed()


def test_verify_detects_missed_neighbourhood(default_sys, seed, first_forge):
    U, Y, rep = first_forge
    cyclic = Y.word + Y.word[:4]
    absent = next(w for w in ("1", "2", "3", "11", "22", "31", "313") if w not in cyclic)
    far = Neighborhood(CylinderSpec(absent, 0), 0.5, 0.1)
    v = verify_forge(default_sys, seed, Y, rep, ControlConstants(), [far])
    assert not v.passed and v.failed() == ["visits_U0"]


def test_verify_detects_tampered_fiber(default_sys, seed, first_forge):
    U, Y, rep = first_forge
    moved = PeriodicOrbit(Y.word, (Y.fiber_x + 1e-3) % 1.0, Y.log_theta)
    assert "y_is_periodic" in verify_forge(default_sys, seed, moved, rep).failed()


def test_shadow_points_are_close_literally(default_sys, seed, first_forge):
    U, Y, rep = first_forge
    P = seed.period
    for t in rep.tilde[:5]:
        y = SkewPoint(PeriodicSequence(Y.word).shift(int(t)), float(orbit_trajectory(default_sys, Y)[t]))
        x = SkewPoint(PeriodicSequence(seed.word).shift(int(t) % P), seed.fiber_x)
        assert epsilon_close(default_sys, y, x, rep.eps, P)


def test_shadow_report_json_roundtrip(first_forge):
    _, _, rep = first_forge
    back = ShadowReport.from_json(rep.to_json())
    assert np.array_equal(back.tilde, rep.tilde)
    assert np.array_equal(back.counts, rep.counts)
    assert back.kappa == rep.kappa


def test_cascade_single_stage(default_sys):
    C = cascade(default_sys, [], 1)
    assert len(C) == 1 and C.orbits[0].word == "4"


def test_schedule_uses_every_cell(cells):
    plan = schedule_neighborhoods(cells, 8, 0.0)
    assert len(plan) == 7
    assert sum(len(p) for p in plan) == len(cells)
    assert all(len(p) == 1 for p in plan[:-1])


def test_cascade_invariants(default_sys, full_cascade):
    C = full_cascade
    lams = [Y.exponent for Y in C.orbits]
    assert all(l < 0 for l in lams)
    assert all(a < b for a, b in zip(lams, lams[1:]))
    for i, l in enumerate(lams):
        assert abs(l) <= 0.9**i * abs(lams[0]) + 1e-15
    for i, U in enumerate(C.assignments):
        Y = C.orbits[i]
        xs = orbit_trajectory(default_sys, Y)
        for u in U:
            assert u.hits(word_array(Y.word), xs).size > 0
    assert C.eps == [0.02 * 2.0**-i for i in range(1, 8)]
