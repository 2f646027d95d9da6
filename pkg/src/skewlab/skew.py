"""The skew product ``G(w, x) = (shift w, g_w(x))`` over periodic base points.

The fiber map is chosen by a step rule on the central cylinder of depth d
(symbols at indices 0..d-1) and then post-composed with a small rotation
that depends on far symbols with geometric decay (the perturbation tail).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .circle import MapFamilyParams, SineMap, family_arrays, make_family
from .symbolic import GLUE, N_SYMBOLS, PeriodicSequence, word_array


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Rotation offsets ``rho[k + depth, s]`` with ``|rho[k, s]| <= delta 2^(-alpha |k|)``.

    The rotation at a base point is ``r(w) = sum_{|k| <= depth} rho[k + depth, w_k]``.
    """

    rho: np.ndarray
    delta: float
    alpha: float
    seed: Optional[int] = None

    @property
    def depth(self) -> int:
        return (self.rho.shape[0] - 1) // 2

    @classmethod
    def random(cls, delta: float, alpha: float = 0.7, depth: int = 40, seed: int = 0) -> "Perturbation":
        rng = np.random.default_rng(seed)
        k = np.arange(-depth, depth + 1)
        scale = delta * 2.0 ** (-alpha * np.abs(k))
        rho = rng.uniform(-1.0, 1.0, size=(2 * depth + 1, N_SYMBOLS)) * scale[:, None]
        return cls(rho, float(delta), float(alpha), seed)

    def bound(self) -> float:
        """Nominal bound ``2 delta / (1 - 2^-alpha)`` on ``|r|``."""
        return 2.0 * self.delta / (1.0 - 2.0 ** (-self.alpha))

    def sup(self) -> float:
        """Exact ``sup_w |r(w)|``: the coordinates can be chosen independently."""
        return float(max(self.rho.max(axis=1).sum(), -self.rho.min(axis=1).sum()))

    def tail(self, n: int) -> float:
        """Exact sup of ``|r(a) - r(b)|`` over pairs agreeing on all ``|k| < n``."""
        k = np.abs(np.arange(-self.depth, self.depth + 1))
        spread = self.rho.max(axis=1) - self.rho.min(axis=1)
        return float(spread[k >= n].sum())

    def rotation(self, seq: PeriodicSequence) -> float:
        D = self.depth
        s = seq.symbols(-D, 2 * D + 1)
        return float(self.rho[np.arange(2 * D + 1), s].sum())

    def to_json(self) -> dict:
        return {"delta": self.delta, "alpha": self.alpha, "depth": self.depth, "seed": self.seed}


def default_rule(depth: int = 2) -> np.ndarray:
    """Symbol i at index 0 selects g_i unless index 1 holds a 5, which selects the identity."""
    if depth < 2:
        raise ValueError("the default rule reads two symbols")
    rule = np.empty((N_SYMBOLS,) * depth, dtype=np.uint8)
    for i in range(N_SYMBOLS):
        rule[i] = i
        rule[(i, GLUE)] = GLUE
    return rule


@dataclass(frozen=True)
class SkewPoint:
    base: PeriodicSequence
    x: float


class SkewSystem:
    """Step family on depth-d cylinders plus an optional perturbation tail."""

    def __init__(
        self,
        family: Sequence[SineMap],
        rule: Optional[np.ndarray] = None,
        depth: int = 2,
        perturbation: Optional[Perturbation] = None,
        params: Optional[MapFamilyParams] = None,
    ):
        if len(family) != N_SYMBOLS:
            raise ValueError("need six family maps")
        self.family = tuple(family)
        self.depth = int(depth)
        self.rule = default_rule(depth) if rule is None else np.asarray(rule, dtype=np.uint8)
        if self.rule.shape != (N_SYMBOLS,) * self.depth:
            raise ValueError(f"rule must have shape {(N_SYMBOLS,) * self.depth}")
        if self.rule.max() >= N_SYMBOLS:
            raise ValueError("rule refers to a missing family map")
        self.perturbation = perturbation
        self.params = params
        self._rule_flat = self.rule.reshape(-1)
        self._arrays = family_arrays(self.family)

    @classmethod
    def default(
        cls,
        params: MapFamilyParams = MapFamilyParams(),
        delta_pert: float = 0.0,
        alpha: float = 0.7,
        depth_trunc: int = 40,
        seed: int = 0,
    ) -> "SkewSystem":
        pert = Perturbation.random(delta_pert, alpha, depth_trunc, seed) if delta_pert > 0 else None
        return cls(make_family(params), perturbation=pert, params=params)

    @property
    def perturbed(self) -> bool:
        return self.perturbation is not None

    def with_perturbation(self, perturbation: Optional[Perturbation]) -> "SkewSystem":
        return SkewSystem(self.family, self.rule, self.depth, perturbation, self.params)

    def rotation_bound(self) -> float:
        return self.perturbation.sup() if self.perturbed else 0.0

    # --- single maps ---------------------------------------------------------

    def step_index(self, seq: PeriodicSequence) -> int:
        return int(self.rule[tuple(seq.symbols(0, self.depth))])

    def fiber_map_at(self, seq: PeriodicSequence) -> SineMap:
        g = self.family[self.step_index(seq)]
        if self.perturbed:
            g = g.rotated(self.perturbation.rotation(seq))
        return g

    # --- per-position data for the kernels ---------------------------------

    def _codes(self, s: np.ndarray, count: int, lead: int) -> np.ndarray:
        code = np.zeros(count, dtype=np.int64)
        for i in range(self.depth):
            code = code * N_SYMBOLS + s[lead + i : lead + i + count]
        return code

    def window_data(self, seq: PeriodicSequence, start: int, count: int):
        """Family indices and rotations for positions ``start .. start+count-1`` of ``seq``."""
        D = self.perturbation.depth if self.perturbed else 0
        s = seq.symbols(start - D, count + 2 * D + self.depth).astype(np.int64)
        idx = self._rule_flat[self._codes(s, count, D)].astype(np.uint8)
        rot = np.zeros(count)
        if self.perturbed:
            rho = self.perturbation.rho
            for k in range(-D, D + 1):
                rot += rho[k + D, s[D + k : D + k + count]]
        return idx, rot

    def word_data(self, word: np.ndarray | str):
        """Family indices and rotations for one full period of the periodic word."""
        w = word_array(word) if isinstance(word, str) else np.asarray(word, dtype=np.uint8)
        P = w.shape[0]
        ext = np.concatenate([w, np.resize(w, self.depth)]).astype(np.int64)
        idx = self._rule_flat[self._codes(ext, P, 0)].astype(np.uint8)
        if self.perturbed:
            rot = _kernels.tail_rotations(w, self.perturbation.rho, self.perturbation.depth)
        else:
            rot = np.zeros(P)
        return idx, rot

    # --- compositions --------------------------------------------------------

    def cocycle(self, seq: PeriodicSequence, x: float, m: int) -> tuple[float, float]:
        """``(g_m[w](x), log-derivative)`` for m >= 0, the backward composition for m < 0."""
        if m == 0:
            return float(x) % 1.0, 0.0
        if m > 0:
            idx, rot = self.window_data(seq, 0, m)
            return _kernels.push(float(x) % 1.0, idx, rot, *self._arrays)
        idx, rot = self.window_data(seq, m, -m)
        return _kernels.pull(float(x) % 1.0, idx, rot, *self._arrays)

    def push_word(self, word, x: float) -> tuple[float, float]:
        """One full period of the periodic word starting at its index 0."""
        idx, rot = self.word_data(word)
        return _kernels.push(float(x) % 1.0, idx, rot, *self._arrays)

    def word_orbit(self, word, x: float, data=None) -> tuple[np.ndarray, float, float]:
        """Fibers before each step over one period, plus the end point and log-derivative sum."""
        idx, rot = self.word_data(word) if data is None else data
        out = np.empty(idx.shape[0])
        x_end, logd = _kernels.orbit(float(x) % 1.0, idx, rot, *self._arrays, out)
        return out, x_end, logd

    def log_derivs(self, xs: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return _kernels.log_derivs(np.ascontiguousarray(xs, dtype=float), idx, *self._arrays)

    def trajectory(self, p: SkewPoint, n: int) -> list[SkewPoint]:
        """``[p, G(p), ..., G^(n-1)(p)]``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        idx, rot = self.window_data(p.base, 0, n - 1)
        out = np.empty(n - 1)
        x_end, _ = _kernels.orbit(float(p.x) % 1.0, idx, rot, *self._arrays, out)
        xs = np.append(out, x_end) if n > 1 else np.array([float(p.x) % 1.0])
        return [SkewPoint(p.base.shift(i), float(xs[i])) for i in range(n)]

    def to_json(self) -> dict:
        d = {
            "cylinder_depth": self.depth,
            "perturbation": self.perturbation.to_json() if self.perturbed else None,
        }
        if self.params is not None:
            d["family"] = {
                "rot_angle": self.params.rot_angle,
                "hyp_amplitude": self.params.hyp_amplitude,
                "phases": list(self.params.phases),
                "ms_amplitude": self.params.ms_amplitude,
            }
        return d
