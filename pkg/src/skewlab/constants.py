"""Numerical constants shared by certification and the orbit forge."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional


@dataclass(frozen=True)
class ControlConstants:
    L: float = 1.5
    holder_C: float = 1.0
    alpha: float = 0.7
    nu: float = 1.085
    delta1: float = 0.07
    delta2: float = 0.02
    gamma: float = 4e-4
    lemma_D: float = 0.01
    contraction_C: float = 0.9
    K: Optional[float] = None

    def __post_init__(self):
        if not self.L > 1:
            raise ValueError("L must exceed 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.nu > 1:
            raise ValueError("nu must exceed 1")
        if not 0 < self.contraction_C < 1:
            raise ValueError("contraction_C must lie in (0, 1)")
        for name in ("holder_C", "delta1", "delta2", "gamma", "lemma_D"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.K is not None and not self.K > 0:
            raise ValueError("K must be positive")

    @property
    def beta(self) -> float:
        return 1.0 - math.log(self.L) / (self.alpha * math.log(2.0))

    def consistency(self) -> dict:
        """The three compatibility inequalities with their margins."""
        checks = {
            "gamma_below_delta2_over_40": self.delta2 / 40.0 - self.gamma,
            "delta1_above_3_delta2": self.delta1 - 3.0 * self.delta2,
            "alpha_above_log2_L": self.alpha - math.log2(self.L),
        }
        return {
            "margins": checks,
            "passed": all(v > 0 for v in checks.values()),
        }

    def to_json(self) -> dict:
        return asdict(self)
