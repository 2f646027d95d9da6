import math

import numpy as np
import pytest

from skewlab.circle import sine_c0_distance
from skewlab.skew import Perturbation, SkewPoint, SkewSystem, default_rule
from skewlab.symbolic import N_SYMBOLS, PeriodicSequence, array_word


def random_seq(rng, n=30):
    return PeriodicSequence(array_word(rng.integers(0, N_SYMBOLS, size=n)), int(rng.integers(0, n)))


def test_fiber_map_lookup(default_sys):
    assert default_sys.fiber_map_at(PeriodicSequence("04")) == default_sys.family[0]
    assert default_sys.fiber_map_at(PeriodicSequence("55")) == default_sys.family[5]
    assert default_sys.fiber_map_at(PeriodicSequence("35")) == default_sys.family[5]
    for i in range(6):
        for b in range(5):
            assert default_sys.step_index(PeriodicSequence(f"{i}{b}")) == i


def test_rule_shape():
    r = default_rule(2)
    assert r.shape == (6, 6)
    assert np.all(r[:, 5] == 5)
    with pytest.raises(ValueError):
        default_rule(1)


def test_perturbed_map_within_tail_bound(rng):
    p = Perturbation.random(1e-6, 0.7, 40, seed=1)
    assert np.all(np.abs(p.rho) <= 1e-6 * 2.0 ** (-0.7 * np.abs(np.arange(-40, 41)))[:, None])
    assert p.sup() <= p.bound()
    sys0 = SkewSystem.default()
    sys1 = sys0.with_perturbation(p)
    bound = 2e-6 / (1 - 2**-0.7)
    for _ in range(50):
        s = random_seq(rng)
        d = sine_c0_distance(sys1.fiber_map_at(s), sys0.fiber_map_at(s))
        assert d <= bound
        assert d <= p.sup() + 1e-18


def test_cocycle_zero_steps(default_sys):
    assert default_sys.cocycle(PeriodicSequence("012"), 0.3, 0) == (0.3, 0.0)


def test_cocycle_seed_fixed_point(default_sys):
    x, ld = default_sys.cocycle(PeriodicSequence("4"), 0.0, 7)
    assert x == 0.0
    assert abs(ld - 7 * math.log(1 - 2 * math.pi * 0.01)) < 1e-13
    assert abs(ld / 7 - math.log(0.93717)) < 1e-5


@pytest.mark.parametrize("delta", [0.0, 1e-4])
def test_cocycle_roundtrip(rng, delta):
    sys_ = SkewSystem.default(delta_pert=delta, seed=3)
    for _ in range(30):
        s = random_seq(rng)
        x = float(rng.random())
        m = int(rng.integers(1, 40))
        y, a = sys_.cocycle(s, x, m)
        z, b = sys_.cocycle(s.shift(m), y, -m)
        assert abs(((z - x) + 0.5) % 1 - 0.5) < 1e-9
        assert abs(a + b) < 1e-9


def test_cocycle_additive(rng):
    sys_ = SkewSystem.default(delta_pert=1e-5, seed=4)
    for _ in range(30):
        s = random_seq(rng)
        x = float(rng.random())
        m, k = (int(v) for v in rng.integers(1, 30, size=2))
        y, a = sys_.cocycle(s, x, m)
        z, b = sys_.cocycle(s.shift(m), y, k)
        w, c = sys_.cocycle(s, x, m + k)
        assert abs(c - (a + b)) < 1e-10
        assert abs(((w - z) + 0.5) % 1 - 0.5) < 1e-12


def test_cocycle_matches_map_by_map(rng):
    sys_ = SkewSystem.default(delta_pert=1e-4, seed=5)
    s = random_seq(rng)
    x, total = 0.123, 0.0
    for i in range(12):
        g = sys_.fiber_map_at(s.shift(i))
        total += math.log(g.deriv(x))
        x = g.apply(x)[0]
    y, ld = sys_.cocycle(s, 0.123, 12)
    assert abs(y - x) < 1e-13 and abs(ld - total) < 1e-12


def test_trajectory(default_sys, rng):
    p = SkewPoint(random_seq(rng), 0.77)
    assert default_sys.trajectory(p, 1) == [p]
    traj = default_sys.trajectory(p, 15)
    for i, q in enumerate(traj):
        assert q.base == p.base.shift(i)
        assert abs(q.x - default_sys.cocycle(p.base, p.x, i)[0]) < 1e-14


def test_cocycle_log_derivative_vs_finite_difference(rng):
    sys_ = SkewSystem.default()
    for _ in range(20):
        s = random_seq(rng, 12)
        x = float(rng.random())
        y0, ld = sys_.cocycle(s, x, 12)
        h = 1e-6
        yp, _ = sys_.cocycle(s, x + h, 12)
        ym, _ = sys_.cocycle(s, x - h, 12)
        fd = (((yp - ym) + 0.5) % 1 - 0.5) / (2 * h)
        assert abs(fd / math.exp(ld) - 1) < 1e-5
