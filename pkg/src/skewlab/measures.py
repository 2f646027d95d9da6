"""Atomic measures on periodic orbits and diagnostics for their weak-* limit.

A measure is a finite list of atoms (base point, fiber point, weight).  Base
points are periodic sequences stored as (word on a shared tape, offset), so
the symbol at index k of atom i is ``tape[start_i + (offset_i + k) mod P_i]``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .circle import TWO_PI, arc_distance
from .orbits import Neighborhood, PeriodicOrbit, orbit_trajectory
from .skew import SkewPoint, SkewSystem
from .symbolic import N_SYMBOLS, PeriodicSequence, array_word, word_array


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    tape: np.ndarray  # uint8, concatenated base words
    starts: np.ndarray  # int64 per atom, where the atom's word begins on the tape
    periods: np.ndarray  # int64 per atom
    offsets: np.ndarray  # int64 per atom, base index 0 of the atom within its word
    x: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n = self.x.shape[0]
        for a in (self.starts, self.periods, self.offsets, self.weights):
            if a.shape != (n,):
                raise ValueError("atom arrays must have equal length")
        if n == 0:
            raise ValueError("a measure needs at least one atom")
        if not np.all(self.weights > 0):
            raise ValueError("weights must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    def __len__(self):
        return int(self.x.shape[0])

    def symbols(self, k: int) -> np.ndarray:
        """Symbol at base index k of every atom."""
        return self.tape[self.starts + (self.offsets + k) % self.periods]

    def codes(self, start: int, depth: int) -> np.ndarray:
        """Base-6 code of the symbols at indices start .. start+depth-1 (0 for depth 0)."""
        code = np.zeros(len(self), dtype=np.int64)
        for k in range(start, start + depth):
            code = code * N_SYMBOLS + self.symbols(k)
        return code

    def atom(self, i: int) -> tuple[SkewPoint, float]:
        s, p = int(self.starts[i]), int(self.periods[i])
        word = array_word(self.tape[s : s + p])
        return SkewPoint(PeriodicSequence(word, int(self.offsets[i])), float(self.x[i])), float(self.weights[i])

    def atoms(self) -> list[tuple[SkewPoint, float]]:
        return [self.atom(i) for i in range(len(self))]

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[SkewPoint, float]]) -> "EmpiricalMeasure":
        words, index = [], {}
        starts, periods, offsets, xs, ws = [], [], [], [], []
        pos = 0
        for p, w in atoms:
            if p.base.word not in index:
                index[p.base.word] = pos
                words.append(word_array(p.base.word))
                pos += len(p.base.word)
            starts.append(index[p.base.word])
            periods.append(len(p.base.word))
            offsets.append(p.base.offset)
            xs.append(float(p.x) % 1.0)
            ws.append(float(w))
        return cls(
            np.concatenate(words),
            np.array(starts, dtype=np.int64),
            np.array(periods, dtype=np.int64),
            np.array(offsets, dtype=np.int64),
            np.array(xs),
            np.array(ws),
        )

    # --- export ----------------------------------------------------------------

    def to_csv(self, path, word_labels: Optional[dict] = None) -> None:
        """One atom per row: word, offset, x, weight.

        Long words are written once in the JSON export; ``word_labels`` maps a
        tape start to the label used in the word column instead.
        """
        with open(path, "w", newline="") as f:
            out = csv.writer(f, lineterminator="\n")
            out.writerow(["word", "offset", "x", "weight"])
            cache = {}
            for s, p, o, x, w in zip(self.starts, self.periods, self.offsets, self.x, self.weights):
                s = int(s)
                if s not in cache:
                    cache[s] = word_labels[s] if word_labels and s in word_labels else array_word(self.tape[s : s + int(p)])
                out.writerow([cache[s], int(o), repr(float(x)), repr(float(w))])

    def to_json(self) -> dict:
        words = {}
        for s, p in zip(self.starts.tolist(), self.periods.tolist()):
            if s not in words:
                words[s] = array_word(self.tape[s : s + p])
        keys = sorted(words)
        label = {s: i for i, s in enumerate(keys)}
        return {
            "words": [words[s] for s in keys],
            "word_index": [label[s] for s in self.starts.tolist()],
            "offsets": self.offsets.tolist(),
            "x": self.x.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "EmpiricalMeasure":
        arrays = [word_array(w) for w in d["words"]]
        bounds = np.concatenate([[0], np.cumsum([a.size for a in arrays])]).astype(np.int64)
        wi = np.asarray(d["word_index"], dtype=np.int64)
        return cls(
            np.concatenate(arrays),
            bounds[wi],
            np.array([a.size for a in arrays], dtype=np.int64)[wi],
            np.asarray(d["offsets"], dtype=np.int64),
            np.asarray(d["x"], dtype=float),
            np.asarray(d["weights"], dtype=float),
        )


def orbit_measure(Y: PeriodicOrbit, sys: SkewSystem, xtraj: Optional[np.ndarray] = None) -> EmpiricalMeasure:
    """Uniform measure on the P points of the orbit."""
    xs = orbit_trajectory(sys, Y) if xtraj is None else np.asarray(xtraj, dtype=float)
    P = Y.period
    if xs.shape != (P,):
        raise ValueError("trajectory length must equal the period")
    return EmpiricalMeasure(
        word_array(Y.word),
        np.zeros(P, dtype=np.int64),
        np.full(P, P, dtype=np.int64),
        np.arange(P, dtype=np.int64),
        xs.copy(),
        np.full(P, 1.0 / P),
    )


def push_forward(mu: EmpiricalMeasure, sys: SkewSystem) -> EmpiricalMeasure:
    """Image of the measure under one step of the skew product."""
    idx = step_indices(mu, sys)
    rot = _rotations(mu, sys)
    x = mu.x.copy()
    shift, amp, phase = sys._arrays
    for k in np.unique(idx):
        m = idx == k
        x[m] = x[m] + shift[k] + amp[k] * np.sin(TWO_PI * (x[m] - phase[k]))
    x = (x + rot) % 1.0
    return EmpiricalMeasure(mu.tape, mu.starts, mu.periods, (mu.offsets + 1) % mu.periods, x, mu.weights)


def step_indices(mu: EmpiricalMeasure, sys: SkewSystem) -> np.ndarray:
    return sys._rule_flat[mu.codes(0, sys.depth)]


def _rotations(mu: EmpiricalMeasure, sys: SkewSystem) -> np.ndarray:
    rot = np.zeros(len(mu))
    if sys.perturbed:
        D = sys.perturbation.depth
        for k in range(-D, D + 1):
            rot += sys.perturbation.rho[k + D, mu.symbols(k)]
    return rot


def fiber_exponent(mu: EmpiricalMeasure, sys: SkewSystem) -> float:
    """Integral of ``ln Dg_w(x)`` against the measure."""
    idx = step_indices(mu, sys)
    ld = sys.log_derivs(mu.x, idx.astype(np.uint8))
    return float(math.fsum(mu.weights * ld))


# --- partitions -----------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Cells: base cylinders on the symbols at indices 0..depth-1, times equal fiber arcs."""

    depth: int
    arcs: int

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.arcs < 1:
            raise ValueError("arcs must be >= 1")

    @property
    def cells(self) -> int:
        return N_SYMBOLS**self.depth * self.arcs

    def cell_index(self, mu: EmpiricalMeasure) -> np.ndarray:
        arc = np.minimum((mu.x * self.arcs).astype(np.int64), self.arcs - 1)
        return mu.codes(0, self.depth) * self.arcs + arc

    def masses(self, mu: EmpiricalMeasure) -> np.ndarray:
        return np.bincount(self.cell_index(mu), weights=mu.weights, minlength=self.cells)


def support_coverage(mu: EmpiricalMeasure, part: Partition) -> float:
    """Fraction of partition cells with positive mass."""
    return float(np.count_nonzero(part.masses(mu) > 0) / part.cells)


def max_cell_mass(mu: EmpiricalMeasure, part: Partition) -> float:
    return float(part.masses(mu).max())


def mass_of(mu: EmpiricalMeasure, U: Neighborhood) -> float:
    """Mass of a cylinder-times-open-arc neighbourhood."""
    ok = arc_distance(mu.x, U.center) < U.radius
    for i, c in enumerate(word_array(U.cylinder.word)):
        ok &= mu.symbols(U.cylinder.start_index + i) == c
    return float(math.fsum(mu.weights[ok]))


# --- weak-* test functions --------------------------------------------------------

FOURIER_MODES = ("1", "cos1", "sin1", "cos2", "sin2")


def _mode(name: str, x: np.ndarray) -> np.ndarray:
    if name == "1":
        return np.ones_like(x)
    k = int(name[3:])
    return np.cos(TWO_PI * k * x) if name.startswith("cos") else np.sin(TWO_PI * k * x)


@dataclass(frozen=True)
class TestFunctionSet:
    """Indicators of every base cylinder on indices 0..d-1 (d <= max_depth) times low Fourier modes."""

    __test__ = False  # not a pytest class

    max_depth: int = 2
    modes: tuple = FOURIER_MODES

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        for m in self.modes:
            if m != "1" and not (m[:3] in ("cos", "sin") and m[3:].isdigit()):
                raise ValueError(f"unknown mode {m!r}")

    def __len__(self):
        cyl = sum(N_SYMBOLS**d for d in range(self.max_depth + 1))
        return cyl * len(self.modes)

    def labels(self) -> list[str]:
        out = []
        for d in range(self.max_depth + 1):
            for c in range(N_SYMBOLS**d):
                w = np.base_repr(c, N_SYMBOLS).zfill(d) if d else ""
                out += [f"[{w}]*{m}" for m in self.modes]
        return out

    def integrals(self, mu: EmpiricalMeasure) -> np.ndarray:
        """All integrals, in the order of :meth:`labels`."""
        vals = [mu.weights * _mode(m, mu.x) for m in self.modes]
        out = []
        for d in range(self.max_depth + 1):
            code = mu.codes(0, d)
            n = N_SYMBOLS**d
            block = np.stack([np.bincount(code, weights=v, minlength=n) for v in vals], axis=1)
            out.append(block.reshape(-1))
        return np.concatenate(out)


def weak_star_gap(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure, tests: TestFunctionSet = TestFunctionSet()) -> float:
    """``max_f |int f dmu1 - int f dmu2|`` over the test set."""
    return float(np.max(np.abs(tests.integrals(mu1) - tests.integrals(mu2))))


# --- cascade diagnostics -------------------------------------------------------------

DIAGNOSTIC_COLUMNS = ("stage", "period", "lambda", "kappa", "coverage", "max_cell_mass", "ws_gap")


def cascade_diagnostics(
    sys: SkewSystem,
    orbits: Sequence[PeriodicOrbit],
    kappas: Sequence[Optional[float]],
    part: Partition,
    tests: TestFunctionSet = TestFunctionSet(),
    neighborhoods: Sequence[Sequence[Neighborhood]] = (),
) -> dict:
    """Per-stage rows plus, for every scheduled neighbourhood, its mass in every later measure."""
    rows, measures = [], []
    prev = None
    for i, (Y, kap) in enumerate(zip(orbits, kappas), start=1):
        mu = orbit_measure(Y, sys)
        ints = tests.integrals(mu)
        gap = float(np.max(np.abs(ints - prev))) if prev is not None else None
        prev = ints
        rows.append(
            {
                "stage": i,
                "period": Y.period,
                "lambda": fiber_exponent(mu, sys),
                "kappa": kap,
                "coverage": support_coverage(mu, part),
                "max_cell_mass": max_cell_mass(mu, part),
                "ws_gap": gap,
            }
        )
        measures.append(mu)
    masses = []
    for i, group in enumerate(neighborhoods, start=1):
        for U in group:
            later = [mass_of(measures[j - 1], U) for j in range(i, len(measures) + 1)]
            masses.append({"stage": i, "neighborhood": U.to_json(), "masses": later, "min_mass": min(later) if later else None})
    return {"rows": rows, "neighborhood_masses": masses}


def write_diagnostics_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(DIAGNOSTIC_COLUMNS)
        for r in rows:
            out.writerow(["" if r[c] is None else (repr(float(r[c])) if isinstance(r[c], float) else r[c]) for c in DIAGNOSTIC_COLUMNS])


def measure_json_dump(mu: EmpiricalMeasure, path) -> None:
    with open(path, "w") as f:
        json.dump(mu.to_json(), f)
