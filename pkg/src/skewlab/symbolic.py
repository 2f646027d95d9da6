"""Base dynamics: two-sided sequences over six symbols, the shift, and the solenoid map.

Sequences are periodic and stored literally as a period word plus a read
offset.  The adic gluing ``...a555... ~ ...(a+1)000...`` only enters when two
sequences are compared (see :func:`base_distance`).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

ALPHABET = "012345"
N_SYMBOLS = 6
GLUE = 5


def check_word(word: str) -> str:
    if not word:
        raise ValueError("empty word")
    if word.strip(ALPHABET):
        raise ValueError(f"word has symbols outside 0..5: {word[:40]!r}")
    return word


def word_array(word: str) -> np.ndarray:
    """Symbols of ``word`` as a uint8 array (no copy of the text beyond the encode)."""
    return np.frombuffer(word.encode("ascii"), dtype=np.uint8) - ord("0")


def array_word(symbols: np.ndarray) -> str:
    return (np.asarray(symbols, dtype=np.uint8) + ord("0")).tobytes().decode("ascii")


@dataclass(frozen=True)
class PeriodicSequence:
    """The bi-infinite sequence whose symbol at index k is ``word[(k + offset) % P]``."""

    word: str
    offset: int = 0

    def __post_init__(self):
        check_word(self.word)
        object.__setattr__(self, "offset", self.offset % len(self.word))

    @property
    def period(self) -> int:
        return len(self.word)

    def __getitem__(self, k: int) -> int:
        return ord(self.word[(k + self.offset) % len(self.word)]) - 48

    def symbols(self, start: int, count: int) -> np.ndarray:
        """Symbols at indices ``start, ..., start + count - 1``."""
        arr = word_array(self.word)
        idx = (np.arange(start, start + count) + self.offset) % len(self.word)
        return arr[idx]

    def shift(self, k: int = 1) -> "PeriodicSequence":
        return shift(self, k)

    def canonical(self) -> str:
        """The period word as read from index 0."""
        o = self.offset
        return self.word[o:] + self.word[:o]

    def __str__(self) -> str:
        return f"({self.word})@{self.offset}"

    @classmethod
    def parse(cls, text: str) -> "PeriodicSequence":
        text = text.strip()
        body, _, off = text.partition("@")
        if not (body.startswith("(") and body.endswith(")")):
            raise ValueError(f"expected '(word)@offset', got {text!r}")
        return cls(body[1:-1], int(off) if off else 0)


@dataclass(frozen=True)
class CylinderSpec:
    """Sequences spelling ``word`` from ``start_index`` on."""

    word: str
    start_index: int = 0

    def __post_init__(self):
        check_word(self.word)


def shift(seq: PeriodicSequence, k: int) -> PeriodicSequence:
    """The left shift applied ``k`` times (negative ``k`` shifts right)."""
    return PeriodicSequence(seq.word, seq.offset + k)


def cylinder_contains(seq: PeriodicSequence, cyl: CylinderSpec) -> bool:
    return all(seq[cyl.start_index + i] == ord(c) - 48 for i, c in enumerate(cyl.word))


def _rewrites(window: np.ndarray) -> list[np.ndarray]:
    """The window itself plus its rewrites under the tail gluing.

    Only the right end of the window is treated as a tail: a trailing run of
    5s after a symbol ``a`` becomes ``a+1`` followed by 0s, and a trailing run
    of 0s after ``a > 0`` becomes ``a-1`` followed by 5s.
    """
    out = [window]
    for run_sym, new_sym, step in ((GLUE, 0, 1), (0, GLUE, -1)):
        j = len(window)
        while j > 0 and window[j - 1] == run_sym:
            j -= 1
        if j == len(window) or j == 0:
            continue
        pivot = window[j - 1]
        if (step == 1 and pivot == GLUE) or (step == -1 and pivot == 0):
            continue
        alt = window.copy()
        alt[j - 1] = pivot + step
        alt[j:] = new_sym
        out.append(alt)
    return out


def _radius(a: np.ndarray, b: np.ndarray, depth: int) -> int:
    # index depth-1 of the window is symbol 0
    bad = np.nonzero(a != b)[0]
    if bad.size == 0:
        return depth
    return int(np.min(np.abs(bad - (depth - 1))))


def base_distance(a: PeriodicSequence, b: PeriodicSequence, max_depth: int = 32) -> float:
    """``2**-n`` with n the agreement radius around index 0, 0.0 past ``max_depth``.

    The radius is the largest m with ``a[k] == b[k]`` for all ``|k| < m``,
    maximised over the tail rewrites of both windows.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    wa = a.symbols(-(max_depth - 1), 2 * max_depth - 1).astype(np.int16)
    wb = b.symbols(-(max_depth - 1), 2 * max_depth - 1).astype(np.int16)
    n = max(_radius(x, y, max_depth) for x in _rewrites(wa) for y in _rewrites(wb))
    if n >= max_depth:
        return 0.0
    return 2.0**-n


# --- the solenoid -----------------------------------------------------------

DISK_CONTRACTION = 0.01


@dataclass(frozen=True)
class SolenoidPoint:
    phi: float
    u: complex = 0j

    def to_json(self) -> dict:
        return {"phi": self.phi, "u_re": self.u.real, "u_im": self.u.imag}

    @classmethod
    def from_json(cls, d: dict) -> "SolenoidPoint":
        return cls(float(d["phi"]), complex(d["u_re"], d["u_im"]))


def solenoid_step(p: SolenoidPoint) -> SolenoidPoint:
    """``(phi, u) -> (6 phi mod 1, exp(2 pi i phi)/2 + u/100)``."""
    if abs(p.u) > 1.0:
        raise ValueError(f"disk coordinate outside the unit disk: |u| = {abs(p.u)}")
    phi = (6.0 * p.phi) % 1.0
    u = 0.5 * cmath.exp(2j * math.pi * p.phi) + DISK_CONTRACTION * p.u
    return SolenoidPoint(phi, u)


def itinerary(p: SolenoidPoint, n: int) -> str:
    """Symbols ``floor(6 phi_i)`` along the first ``n`` points of the orbit."""
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for _ in range(n):
        out.append(str(min(int(6.0 * p.phi), N_SYMBOLS - 1)))
        p = solenoid_step(p)
    return "".join(out)
