"""Certification of the control properties of a skew system.

Every check returns a JSON-ready dict with a ``passed`` flag and signed
margins; nothing here raises on a failed property.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .circle import rotation, sine_c0_distance, wrap
from .constants import ControlConstants
from .orbits import PeriodicOrbit, seed_orbit
from .skew import Perturbation, SkewSystem
from .symbolic import GLUE, N_SYMBOLS, PeriodicSequence, array_word, base_distance

EXPANDING_SYMBOLS = (1, 2, 3)


def _maps_for_symbol(sys: SkewSystem, j: int):
    """Family maps used on cylinders ``{...| j b ...}`` with b != 5, over all deeper symbols."""
    sub = np.asarray(sys.rule[j])
    keep = [b for b in range(N_SYMBOLS) if b != GLUE]
    return [sys.family[k] for k in np.unique(sub[keep])]


# --- Hoelder condition ----------------------------------------------------------


def check_holder(
    sys: SkewSystem,
    L: float,
    holder_C: float,
    alpha: float,
    samples: int = 64,
    seed: int = 0,
    tail_only: bool = False,
) -> dict:
    """Sampled ``d_C0(g_a, g_b) / d(a, b)^alpha`` over pairs at every agreement depth, plus the derivative bound.

    ``tail_only`` restricts the ratio to pairs that share the step window, so
    their maps differ only through the perturbation tail.  The exact
    worst case over such pairs is reported next to the sampled one.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    D = sys.perturbation.depth if sys.perturbed else 40
    reach = D + 1
    width = 2 * reach + 1
    ratio = tail = 0.0
    for n in range(0, D + 1):
        for _ in range(samples):
            a = rng.integers(0, N_SYMBOLS, size=width)
            b = a.copy()
            k = n if rng.random() < 0.5 else -n
            b[k + reach] = (a[k + reach] + rng.integers(1, N_SYMBOLS)) % N_SYMBOLS
            sa = PeriodicSequence(array_word(a), reach)
            sb = PeriodicSequence(array_word(b), reach)
            d = base_distance(sa, sb, reach + 1)
            if d == 0.0:
                continue
            dist = sine_c0_distance(sys.fiber_map_at(sa), sys.fiber_map_at(sb))
            q = dist / d**alpha
            ratio = max(ratio, q)
            if n >= sys.depth:
                tail = max(tail, q)
    exact_tail = 0.0
    if sys.perturbed:
        exact_tail = max(sys.perturbation.tail(n) / 2.0 ** (-alpha * n) for n in range(sys.depth, D + 2))
    worst_tail = max(tail, exact_tail)
    amps = np.array([abs(g.amp) for g in sys.family]) * 2 * math.pi
    max_deriv = float(max(np.max(1 + amps), np.max(1 / (1 - amps))))
    used = worst_tail if tail_only else max(ratio, worst_tail)
    return {
        "max_derivative": max_deriv,
        "derivative_margin": L - max_deriv,
        "ratio": ratio,
        "tail_ratio": tail,
        "tail_ratio_exact": exact_tail,
        "ratio_checked": used,
        "ratio_margin": holder_C - used,
        "tail_only": tail_only,
        "passed": bool(max_deriv < L and used < holder_C),
    }


# --- expansion ------------------------------------------------------------------


def expansion_cover(delta1: float) -> tuple[np.ndarray, float]:
    """Left ends and common length of a cover containing every arc shorter than delta1."""
    if not 0 < delta1 < 1:
        raise ValueError("delta1 must lie in (0, 1)")
    n = 16 * math.ceil(1.0 / delta1)
    h = 1.0 / n
    return np.arange(n) * h, delta1 + h


def interval_expansion(sys: SkewSystem, lo: float, hi: float, direction: str = "forward") -> tuple[int, float]:
    """Best symbol j in {1, 2, 3} for the arc [lo, hi] and its certified expansion bound.

    forward:  min over the arc of g_j'.
    backward: min over the arc of (g_j^-1)' = 1 / g_j'(g_j^-1(x)).  The preimage
              arc J = g_j^-1(arc widened by the largest perturbation rotation)
              comes from the monotone inverse, and ``1 / max_J g_j'`` is the bound.
    Derivative extrema of sine maps on an arc are exact.
    """
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    r = sys.rotation_bound()
    best_j, best_v = EXPANDING_SYMBOLS[0], -math.inf
    for j in EXPANDING_SYMBOLS:
        vals = []
        for g in _maps_for_symbol(sys, j):
            if direction == "forward":
                vals.append(g.deriv_range(lo, hi)[0])
            else:
                a = g.invert((lo - r) % 1.0)
                b = g.invert((hi + r) % 1.0)
                span = (b - a) % 1.0
                vals.append(1.0 / g.deriv_range(a, a + span)[1])
        v = min(vals)
        if v > best_v:
            best_j, best_v = j, v
    return best_j, float(best_v)


def certify_expansion(sys: SkewSystem, nu: float, delta1: float, direction: str = "forward") -> dict:
    """Per-interval symbol table certifying derivative > nu on every arc shorter than delta1."""
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    starts, length = expansion_cover(delta1)
    table = []
    for lo in starts:
        j, v = interval_expansion(sys, lo, lo + length, direction)
        table.append([float(lo + 0.5 * length) % 1.0, j, v])
    worst = min(row[2] for row in table)
    bad = [row for row in table if not row[2] > nu]
    return {
        "direction": direction,
        "nu": nu,
        "delta1": delta1,
        "interval_length": length,
        "intervals": len(table),
        "nu_certified": worst,
        "margin": worst - nu,
        "failing_intervals": len(bad),
        "table": [[m, j] for m, j, _ in table],
        "passed": not bad,
    }


# --- rotation ---------------------------------------------------------------------


def check_rotation(sys: SkewSystem, delta2: float) -> dict:
    """``d_C0(g_w, H_delta2) < delta2^2 / 40`` on every cylinder ``{...| 0 b ...}``, b != 5.

    The distance for the step map is exact, and the perturbation adds at most
    its exact supremum.
    """
    H = rotation(delta2)
    step = max(sine_c0_distance(g, H) for g in _maps_for_symbol(sys, 0))
    dist = step + sys.rotation_bound()
    thr = delta2**2 / 40.0
    return {
        "distance": dist,
        "step_distance": step,
        "perturbation_sup": sys.rotation_bound(),
        "threshold": thr,
        "margin": thr - dist,
        "passed": bool(dist < thr),
    }


# --- weak attraction --------------------------------------------------------------


def check_weak_orbit(sys: Optional[SkewSystem], X: PeriodicOrbit, nu: float) -> bool:
    """``lambda(X) + ln nu > 0`` for an attracting orbit X."""
    lam = X.exponent
    if not lam < 0:
        raise ValueError("orbit is not attracting along the fiber")
    return bool(lam + math.log(nu) > 0)


# --- predictability ------------------------------------------------------------------


def _spread(xs: np.ndarray) -> float:
    d = wrap(xs - xs[0])
    return float(d.max() - d.min())


def measure_predictability(
    sys: SkewSystem,
    m_max: int,
    trials: int = 12,
    completions: int = 12,
    seed: int = 0,
    lookahead: bool = True,
) -> dict:
    """Largest observed spread of ``g_{+-m}[w](x)`` over tail completions of a fixed central word.

    The central word covers indices -m..m-1, and with ``lookahead`` also
    index m, which the depth-2 step rule reads at the last forward step.
    Each m uses its own generator derived from (seed, m), so raising m_max
    never changes the values already measured.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    D = sys.perturbation.depth if sys.perturbed else 0
    pad = D + sys.depth + 1
    per_m = []
    running = 0.0
    for m in range(1, m_max + 1):
        rng = np.random.default_rng([seed, m])
        lo, hi = -m, m + (1 if lookahead else 0)
        worst = 0.0
        for _ in range(trials):
            core = rng.integers(0, N_SYMBOLS, size=hi - lo)
            x = float(rng.random())
            fwd, bwd = [], []
            for _ in range(completions):
                left = rng.integers(0, N_SYMBOLS, size=pad)
                right = rng.integers(0, N_SYMBOLS, size=pad)
                word = np.concatenate([left, core, right])
                seq = PeriodicSequence(array_word(word), pad - lo)
                fwd.append(sys.cocycle(seq, x, m)[0])
                bwd.append(sys.cocycle(seq, x, -m)[0])
            worst = max(worst, _spread(np.array(fwd)), _spread(np.array(bwd)))
        running = max(running, worst)
        per_m.append(running)
    return {"gamma_measured": running, "per_m": per_m, "m_max": m_max, "lookahead": lookahead}


def predictability_bound(L: float, holder_C: float, alpha: float, delta: float, K: float) -> float:
    """``K delta^beta`` with ``beta = 1 - ln L / (alpha ln 2)``."""
    if not alpha > math.log2(L):
        raise ValueError("need alpha > log2(L)")
    beta = 1.0 - math.log(L) / (alpha * math.log(2.0))
    if delta == 0:
        return 0.0
    return K * delta**beta


def fit_K(
    sys: SkewSystem,
    constants: ControlConstants,
    deltas: Sequence[float] = (1e-8, 1e-7, 1e-5),
    m_max: int = 6,
    trials: int = 8,
    completions: int = 8,
    seed: int = 1,
) -> dict:
    """Fit K as the largest ``gamma_measured / delta^beta`` over a calibration sweep.

    The sweep perturbs the step system with fresh tails of the given sizes;
    the seed differs from the one used for certification.
    """
    beta = constants.beta
    D = sys.perturbation.depth if sys.perturbed else 40
    rows = []
    for i, delta in enumerate(deltas):
        pert = Perturbation.random(delta, constants.alpha, D, seed + i)
        g = measure_predictability(sys.with_perturbation(pert), m_max, trials, completions, seed + i)["gamma_measured"]
        rows.append({"delta": delta, "gamma_measured": g, "ratio": g / delta**beta})
    K = max(r["ratio"] for r in rows)
    if K == 0:
        K = 1.0
    return {"K": K, "beta": beta, "sweep": rows}


# --- everything ----------------------------------------------------------------------


def certify_controlled(
    sys: SkewSystem,
    constants: ControlConstants = ControlConstants(),
    seed: int = 0,
    holder_samples: int = 24,
    m_max: int = 6,
    trials: int = 8,
    completions: int = 8,
    seed_word: str = "4",
) -> dict:
    """Run every check and the compatibility inequalities; ``passed`` iff all pass."""
    cert: dict = {"constants": constants.to_json(), "system": sys.to_json(), "seed": seed}
    cert["holder"] = check_holder(sys, constants.L, constants.holder_C, constants.alpha, holder_samples, seed)
    for direction in ("forward", "backward"):
        cert[f"expansion_{direction}"] = certify_expansion(sys, constants.nu, constants.delta1, direction)
    cert["rotation"] = check_rotation(sys, constants.delta2)

    X = seed_orbit(sys, seed_word)
    lam = X.exponent
    cert["weak_orbit"] = {
        "word": X.word,
        "fiber_x": X.fiber_x,
        "lambda": lam,
        "margin": lam + math.log(constants.nu),
        "lemma_D_margin": lam + math.log(constants.nu) - constants.lemma_D,
        "passed": check_weak_orbit(sys, X, constants.nu),
    }

    if constants.K is None:
        fit = fit_K(sys, constants, m_max=m_max, trials=trials, completions=completions, seed=seed + 1)
    else:
        fit = {"K": constants.K, "beta": constants.beta, "sweep": []}
    meas = measure_predictability(sys, m_max, trials, completions, seed)
    g = meas["gamma_measured"]
    delta = sys.perturbation.delta if sys.perturbed else 0.0
    bound = predictability_bound(constants.L, constants.holder_C, constants.alpha, delta, fit["K"])
    cert["predictability"] = {
        "gamma_measured": g,
        "per_m": meas["per_m"],
        "gamma": constants.gamma,
        "margin": constants.gamma - g,
        "K": fit["K"],
        "beta": fit["beta"],
        "calibration": fit["sweep"],
        "delta_pert": delta,
        "bound": bound,
        "within_bound": bool(g <= bound),
        "passed": bool(g < constants.gamma and g <= bound),
    }
    cert["consistency"] = constants.consistency()
    parts = ("holder", "expansion_forward", "expansion_backward", "rotation", "weak_orbit", "predictability", "consistency")
    cert["failed"] = [p for p in parts if not cert[p]["passed"]]
    cert["passed"] = not cert["failed"]
    return cert
