"""Orientation-preserving circle diffeomorphisms given by their lifts.

Points of the circle live in [0, 1).  Every map here is a degree-one lift
``F`` with ``F(x + 1) = F(x) + 1`` and ``F' > 0``; ``apply`` reduces mod 1.
The generator family is built from the sine maps
``x -> x + shift + amp * sin(2 pi (x - phase))``, which cover rotations
(``amp = 0``) and the identity as special cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def arc_distance(x, y):
    """Distance on R/Z."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


def wrap(d):
    """Representative of ``d`` mod 1 in [-1/2, 1/2)."""
    return (np.asarray(d, dtype=float) + 0.5) % 1.0 - 0.5


class CircleMap:
    """Base class: subclasses provide ``lift`` and ``deriv`` (vectorized)."""

    def lift(self, x):
        raise NotImplementedError

    def deriv(self, x):
        raise NotImplementedError

    def apply(self, x):
        """``(lift(x) mod 1, deriv(x))``; works on scalars and arrays."""
        y = self.lift(x) % 1.0
        dy = self.deriv(x)
        if np.ndim(y) == 0:
            return float(y), float(dy)
        return y, dy

    def invert(self, y, tol: float = 1e-13):
        """The unique ``x`` in [0, 1) with ``lift(x) = y`` mod 1, by bisection."""
        y = np.asarray(y, dtype=float) % 1.0
        base = self.lift(0.0)
        # lift maps [0, 1) onto [lift(0), lift(0) + 1)
        target = base + (y - base) % 1.0
        lo = np.zeros_like(target)
        hi = np.ones_like(target)
        while np.max(hi - lo) > tol * 0.25:
            mid = 0.5 * (lo + hi)
            below = self.lift(mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x = (0.5 * (lo + hi)) % 1.0
        return float(x) if x.ndim == 0 else x

    def inverse(self) -> "CircleMap":
        return InverseMap(self)

    def check_degree_one(self, grid: int = 4096) -> bool:
        xs = np.arange(grid) / grid
        ok_deg = np.allclose(self.lift(xs + 1.0) - self.lift(xs), 1.0, atol=1e-12)
        return bool(ok_deg and np.all(self.deriv(xs) > 0))


@dataclass(frozen=True)
class SineMap(CircleMap):
    """``x -> x + shift + amp * sin(2 pi (x - phase))``; a diffeomorphism iff ``|amp| < 1/(2 pi)``."""

    shift: float = 0.0
    amp: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if not abs(self.amp) * TWO_PI < 1.0:
            raise ValueError(f"amplitude {self.amp} breaks monotonicity")

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        if self.amp == 0.0:
            return x + self.shift
        return x + self.shift + self.amp * np.sin(TWO_PI * (x - self.phase))

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.amp == 0.0:
            return np.ones_like(x)
        return 1.0 + TWO_PI * self.amp * np.cos(TWO_PI * (x - self.phase))

    def rotated(self, r: float) -> "SineMap":
        """``H_r o self``."""
        return SineMap(self.shift + r, self.amp, self.phase)

    def deriv_range(self, lo: float, hi: float) -> tuple[float, float]:
        """Exact min and max of the derivative over the arc ``[lo, hi]`` (``hi - lo < 1``)."""
        if self.amp == 0.0:
            return 1.0, 1.0
        c = TWO_PI * self.amp
        # cos(2 pi (x - phase)) is maximal at x = phase and minimal at phase + 1/2
        peak = self.phase if c > 0 else self.phase + 0.5
        trough = peak + 0.5
        ends = self.deriv(np.array([lo, hi]))
        vmin, vmax = float(ends.min()), float(ends.max())
        if _arc_contains(lo, hi, peak):
            vmax = 1.0 + abs(c)
        if _arc_contains(lo, hi, trough):
            vmin = 1.0 - abs(c)
        return vmin, vmax


def _arc_contains(lo: float, hi: float, p: float) -> bool:
    return (p - lo) % 1.0 <= hi - lo


def identity() -> SineMap:
    return SineMap()


def rotation(angle: float) -> SineMap:
    return SineMap(shift=angle)


class Composition(CircleMap):
    """Maps applied in the listed order (first listed acts first)."""

    def __init__(self, maps: Sequence[CircleMap]):
        self.maps = tuple(maps)

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        for m in self.maps:
            x = m.lift(x)
        return x

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        d = np.ones_like(x)
        for m in self.maps:
            d = d * m.deriv(x)
            x = m.lift(x)
        return d


class InverseMap(CircleMap):
    """The inverse of a circle map, evaluated by bisection on the lift."""

    def __init__(self, base: CircleMap):
        self.base = base

    def lift(self, y):
        y = np.asarray(y, dtype=float)
        x = np.asarray(self.base.invert(y))
        # choose the lift branch continuous in y
        k = np.round(y - self.base.lift(x))
        return x + k

    def deriv(self, y):
        return 1.0 / self.base.deriv(np.asarray(self.base.invert(y)))

    def invert(self, y, tol: float = 1e-13):
        return self.base.apply(y)[0]


def compose(maps: Sequence[CircleMap]) -> CircleMap:
    """Chain ``maps`` left to right; the empty chain is the identity."""
    maps = list(maps)
    if not maps:
        return identity()
    if len(maps) == 1:
        return maps[0]
    return Composition(maps)


def c0_distance(f: CircleMap, g: CircleMap, grid: int = 4096, L: float = 1.5) -> float:
    """Upper bound on ``sup_x d(f(x), g(x))``: grid maximum plus Lipschitz slack ``(L+1)/(2 grid)``."""
    if grid < 2:
        raise ValueError("grid must be >= 2")
    xs = np.arange(grid) / grid
    return float(np.max(arc_distance(f.lift(xs), g.lift(xs)))) + (L + 1.0) / (2 * grid)


def sine_c0_distance(f: SineMap, g: SineMap) -> float:
    """Exact ``sup_x d(f(x), g(x))`` for two sine maps.

    The lift difference is ``c + R sin(2 pi x + const)`` so it sweeps exactly
    the interval ``[c - R, c + R]``.
    """
    c = f.shift - g.shift
    a = f.amp * np.exp(-1j * TWO_PI * f.phase) - g.amp * np.exp(-1j * TWO_PI * g.phase)
    R = abs(a)
    lo, hi = c - R, c + R
    if math.floor(hi - 0.5) >= math.ceil(lo - 0.5) or hi - lo >= 1.0:
        return 0.5
    return float(max(arc_distance(lo, 0.0), arc_distance(hi, 0.0)))


@dataclass(frozen=True)
class MapFamilyParams:
    rot_angle: float = 0.02
    hyp_amplitude: float = 0.05
    phases: tuple[float, float, float] = (0.0, 1.0 / 3.0, 2.0 / 3.0)
    ms_amplitude: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.rot_angle < 1.0:
            raise ValueError("rot_angle must lie in (0, 1)")
        if not 0.0 < self.hyp_amplitude < 1.0 / (4.0 * math.pi):
            raise ValueError("hyp_amplitude must lie in (0, 1/(4 pi))")
        if not 0.0 < self.ms_amplitude < self.hyp_amplitude:
            raise ValueError("ms_amplitude must lie in (0, hyp_amplitude)")
        if len(self.phases) != 3:
            raise ValueError("need three phases")
        object.__setattr__(self, "phases", tuple(float(a) % 1.0 for a in self.phases))


def make_family(p: MapFamilyParams = MapFamilyParams()) -> tuple[SineMap, ...]:
    """The six generators g0..g5.

    g0 rotates by ``rot_angle``; g1..g3 each repel at their phase and attract
    half a turn away; g4 attracts at 0 and repels at 1/2; g5 is the identity.
    """
    hyp = [SineMap(0.0, p.hyp_amplitude, a) for a in p.phases]
    return (
        rotation(p.rot_angle),
        *hyp,
        SineMap(0.0, -p.ms_amplitude, 0.0),
        identity(),
    )


def family_arrays(family: Sequence[SineMap]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(shift, amp, phase) columns for the compiled kernels."""
    return (
        np.array([m.shift for m in family], dtype=float),
        np.array([m.amp for m in family], dtype=float),
        np.array([m.phase for m in family], dtype=float),
    )
