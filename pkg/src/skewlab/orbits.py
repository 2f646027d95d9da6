"""Periodic orbits of the skew product and the forge that lengthens them.

A forge step takes an attracting orbit X with word w (period P) and builds
the word ``w^N c`` of a new attracting orbit Y.  The connector c is

    head      the first n symbols of w^inf, so windows ending a block of w
              still see the right base context;
    visits    for every target neighbourhood: a steering block that brings
              the fiber into the arc, then the cylinder word;
    '5'       one identity symbol closing the visit section;
    padding   identity symbols '5' and full turns of the rotation '0';
              both are isometries, so they dilute the exponent without
              touching the fiber;
    return    a steering block that brings the fiber back onto X;
    tail      the last n symbols of w^inf.

N and the padding length fix the exponent ratio lambda(Y)/lambda(X) at a
target below the contraction constant.  Everything the forge claims is
recomputed by :func:`verify_forge` from the raw words.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .circle import TWO_PI, arc_distance, wrap
from .constants import ControlConstants
from .symbolic import (
    GLUE,
    CylinderSpec,
    PeriodicSequence,
    array_word,
    base_distance,
    check_word,
    cylinder_contains,
    word_array,
)
from .skew import SkewPoint, SkewSystem
from . import _kernels


class ForgeError(RuntimeError):
    pass


@dataclass(frozen=True)
class Neighborhood:
    """Product of a base cylinder and an open fiber arc ``(center - radius, center + radius)``."""

    cylinder: CylinderSpec
    center: float
    radius: float

    def __post_init__(self):
        if not 0.0 < self.radius < 0.5:
            raise ValueError("arc radius must lie in (0, 1/2)")
        object.__setattr__(self, "center", float(self.center) % 1.0)

    def contains(self, seq: PeriodicSequence, x: float) -> bool:
        return cylinder_contains(seq, self.cylinder) and float(arc_distance(x, self.center)) < self.radius

    def hits(self, word: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Positions t of a periodic orbit (word, fibers) whose point lies in the neighbourhood."""
        P = word.shape[0]
        cw = word_array(self.cylinder.word)
        t = np.arange(P)
        if cw.size:
            t = t[word[(t + self.cylinder.start_index) % P] == cw[0]]
            for i, c in enumerate(cw[1:], start=1):
                t = t[word[(t + self.cylinder.start_index + i) % P] == c]
        return t[arc_distance(xs[t], self.center) < self.radius]

    def hit_at(self, word: np.ndarray, xs: np.ndarray, t: int) -> bool:
        """Whether position t of the periodic orbit (word, fibers) lies in the neighbourhood."""
        P = word.shape[0]
        cw = word_array(self.cylinder.word)
        pos = (t + self.cylinder.start_index + np.arange(cw.size)) % P
        return bool(np.all(word[pos] == cw) and arc_distance(xs[t % P], self.center) < self.radius)

    def to_json(self) -> dict:
        return {
            "word": self.cylinder.word,
            "start_index": self.cylinder.start_index,
            "center": self.center,
            "radius": self.radius,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Neighborhood":
        return cls(CylinderSpec(d["word"], int(d["start_index"])), float(d["center"]), float(d["radius"]))


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """Orbit of the periodic base point ``(word)`` with fiber fixed point ``fiber_x``.

    The multiplier is kept as its logarithm: for long words it underflows.
    """

    word: str
    fiber_x: float
    log_theta: float

    def __post_init__(self):
        check_word(self.word)
        if set(self.word) == {"5"}:
            raise ValueError("the all-5 word is not an orbit word")

    @classmethod
    def from_theta(cls, word: str, fiber_x: float, theta: float) -> "PeriodicOrbit":
        if not theta > 0:
            raise ValueError("multiplier must be positive")
        return cls(word, fiber_x, math.log(theta))

    @property
    def period(self) -> int:
        return len(self.word)

    @property
    def theta(self) -> float:
        return math.exp(self.log_theta)

    @property
    def exponent(self) -> float:
        return self.log_theta / self.period

    @property
    def attracting(self) -> bool:
        return self.log_theta < 0

    def sequence(self) -> PeriodicSequence:
        return PeriodicSequence(self.word)

    def to_json(self) -> dict:
        return {
            "word": self.word,
            "fiber_x": self.fiber_x,
            "theta": self.theta,
            "lambda": self.exponent,
            "period": self.period,
            "log_theta": self.log_theta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PeriodicOrbit":
        if "log_theta" in d:
            return cls(d["word"], float(d["fiber_x"]), float(d["log_theta"]))
        return cls.from_theta(d["word"], float(d["fiber_x"]), float(d["theta"]))


def orbit_exponent(orbit: PeriodicOrbit) -> float:
    """``ln(theta) / P``."""
    return orbit.exponent


def orbit_trajectory(sys: SkewSystem, orbit: PeriodicOrbit) -> np.ndarray:
    """Fiber coordinates of the orbit's P points, starting at ``fiber_x``."""
    xs, _, _ = sys.word_orbit(orbit.word, orbit.fiber_x)
    return xs


# --- fixed points of the period map -----------------------------------------


@dataclass
class FixedPoints:
    points: list  # (x, theta) pairs
    log_thetas: list
    degenerate: bool

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def fiber_fixed_points(sys: SkewSystem, word: str, grid: int = 4096, tol: float = 1e-12) -> FixedPoints:
    """All fixed points of the period map of ``(word)`` with their multipliers.

    Sign changes of ``F(x) - x - k`` on a uniform grid are refined by
    bisection; ``degenerate`` is set when the displacement vanishes on a
    whole grid cell, which signals a non-hyperbolic (e.g. identity) map.
    """
    check_word(word)
    idx, rot = sys.word_data(word)
    xs = np.arange(grid + 1) / grid
    disp = _kernels.lift_grid(xs, idx, rot, *sys._arrays) - xs
    kmin, kmax = math.ceil(disp.min() - tol), math.floor(disp.max() + tol)
    roots: list[float] = []
    degenerate = False
    for k in range(kmin, kmax + 1):
        h = disp - k
        flat = np.abs(h) < tol
        if np.any(flat[:-1] & flat[1:]):
            degenerate = True
            continue
        for i in np.nonzero((h[:-1] < 0) & (h[1:] >= 0) | (h[:-1] > 0) & (h[1:] <= 0))[0]:
            lo, hi = xs[i], xs[i + 1]
            if h[i + 1] == 0:
                roots.append(float(hi))
                continue
            sign_lo = np.sign(h[i])
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                v = _kernels.lift_grid(np.array([mid]), idx, rot, *sys._arrays)[0] - mid - k
                if np.sign(v) == sign_lo:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-16:
                    break
            roots.append(0.5 * (lo + hi))
    uniq: list[float] = []
    for r in sorted(x % 1.0 for x in roots):
        if not uniq or arc_distance(r, uniq[-1]) > 1e-10:
            uniq.append(r)
    if len(uniq) > 1 and arc_distance(uniq[0], uniq[-1]) <= 1e-10:
        uniq.pop()
    log_thetas = [_kernels.push(x, idx, rot, *sys._arrays)[1] for x in uniq]
    pts = [(x, math.exp(lt)) for x, lt in zip(uniq, log_thetas)]
    return FixedPoints(pts, log_thetas, degenerate)


def seed_orbit(sys: SkewSystem, word: str = "4") -> PeriodicOrbit:
    """The most strongly attracting fixed point of ``(word)``."""
    fp = fiber_fixed_points(sys, word)
    best = None
    for (x, _), lt in zip(fp.points, fp.log_thetas):
        if lt < 0 and (best is None or lt < best[1]):
            best = (x, lt)
    if best is None:
        raise ForgeError(f"word {word!r} has no attracting fiber fixed point")
    return PeriodicOrbit(word, best[0], best[1])


def settle_fixed_point(sys: SkewSystem, word_data, x0: float, max_iter: int = 400) -> float:
    """Attracting fixed point of the period map by forward iteration from ``x0``."""
    idx, rot = word_data
    x = x0
    for _ in range(max_iter):
        y, _ = _kernels.push(x, idx, rot, *sys._arrays)
        if abs(float(wrap(y - x))) <= 1e-15:
            return y
        x = y
    return x


# --- closeness ----------------------------------------------------------------


def agreement_radius(eps: float) -> int:
    """Smallest n with ``2^-n < eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return max(0, math.floor(math.log2(1.0 / eps)) + 1)


def epsilon_close(sys: SkewSystem, y: SkewPoint, x: SkewPoint, eps: float, P: int) -> bool:
    """Whether ``max(d_base, d_fiber)(G^l y, G^l x) < eps`` for l = 0..P-1."""
    if not eps > 0 or P < 1:
        raise ValueError("need eps > 0 and P >= 1")
    depth = agreement_radius(eps) + 1
    for py, px in zip(sys.trajectory(y, P), sys.trajectory(x, P)):
        if float(arc_distance(py.x, px.x)) >= eps:
            return False
        if base_distance(py.base, px.base, depth) >= eps:
            return False
    return True


# --- shadow reports -------------------------------------------------------------


def _runs(sorted_idx: np.ndarray) -> list:
    if sorted_idx.size == 0:
        return []
    breaks = np.nonzero(np.diff(sorted_idx) != 1)[0]
    starts = np.concatenate([[0], breaks + 1])
    stops = np.concatenate([breaks, [sorted_idx.size - 1]])
    return [[int(sorted_idx[a]), int(sorted_idx[b]) + 1] for a, b in zip(starts, stops)]


def _unruns(runs) -> np.ndarray:
    if not runs:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([np.arange(a, b, dtype=np.int64) for a, b in runs])


@dataclass
class ShadowReport:
    """Points of Y that shadow X for a full period, with projection ``t -> t mod P``."""

    eps: float
    radius: int
    period_x: int
    period_y: int
    tilde: np.ndarray
    counts: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def kappa(self) -> float:
        return self.tilde.size / self.period_y

    def projection(self) -> np.ndarray:
        return self.tilde % self.period_x

    def to_json(self) -> dict:
        vals, mult = np.unique(self.counts, return_counts=True)
        return {
            "eps": self.eps,
            "base_radius": self.radius,
            "period_x": self.period_x,
            "period_y": self.period_y,
            "kappa": self.kappa,
            "projection": "phase = index mod period_x",
            "tilde_ranges": _runs(self.tilde),
            # run-length form of the per-phase preimage counts: [[count, phases], ...]
            "preimage_counts": [[int(v), int(m)] for v, m in zip(vals, mult)] if self.counts.size else [],
            "preimage_counts_by_phase": _counts_runs(self.counts),
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ShadowReport":
        return cls(
            float(d["eps"]),
            int(d["base_radius"]),
            int(d["period_x"]),
            int(d["period_y"]),
            _unruns(d["tilde_ranges"]),
            _uncounts(d["preimage_counts_by_phase"]),
            d.get("meta", {}),
        )


def _counts_runs(counts: np.ndarray) -> list:
    out: list = []
    for c in counts.tolist():
        if out and out[-1][0] == c:
            out[-1][1] += 1
        else:
            out.append([c, 1])
    return out


def _uncounts(runs) -> np.ndarray:
    return np.array([c for c, m in runs for _ in range(m)], dtype=np.int64)


def closeness_profile(
    yword: np.ndarray, ytraj: np.ndarray, xword: np.ndarray, xtraj: np.ndarray, eps: float, lo: int, hi: int
) -> np.ndarray:
    """For t in [lo, hi): is the point of Y at t within eps of the point of X at phase t mod P.

    Indices are unwrapped: Y is read at ``t mod P'`` and X at ``t mod P``.
    The base test is literal agreement on ``|k| < n``, which implies the
    metric bound for every rewrite.
    """
    Py, Px = yword.shape[0], xword.shape[0]
    n = agreement_radius(eps)
    reach = max(n - 1, 0)
    t = np.arange(lo - reach, hi + reach)
    bad = (yword[t % Py] != xword[t % Px]).astype(np.int64)
    csum = np.concatenate([[0], np.cumsum(bad)])
    # mismatches among t-reach .. t+reach
    w = 2 * reach + 1
    base_ok = (csum[w:] - csum[:-w]) == 0
    tt = np.arange(lo, hi)
    fiber_ok = arc_distance(ytraj[tt % Py], xtraj[tt % Px]) < eps
    return base_ok & fiber_ok


def shadow_report(
    X: PeriodicOrbit, Y: PeriodicOrbit, xtraj: np.ndarray, ytraj: np.ndarray, eps: float, meta: Optional[dict] = None
) -> ShadowReport:
    """Extract the shadowing set: the first M full-period windows for every phase."""
    xw, yw = word_array(X.word), word_array(Y.word)
    P, Py = X.period, Y.period
    close = closeness_profile(yw, ytraj, xw, xtraj, eps, 0, Py + P - 1)
    csum = np.concatenate([[0], np.cumsum(~close)])
    valid = (csum[P:] - csum[:-P])[:Py] == 0  # window t .. t+P-1 all close
    rows = -(-Py // P)
    grid = np.zeros(rows * P, dtype=bool)
    grid[:Py] = valid
    grid = grid.reshape(rows, P)
    per_phase = grid.sum(axis=0)
    M = int(per_phase.min())
    rank = np.cumsum(grid, axis=0)
    pick = grid & (rank <= M)
    r, c = np.nonzero(pick)
    tilde = np.sort(r.astype(np.int64) * P + c)
    counts = np.bincount(tilde % P, minlength=P)
    return ShadowReport(eps, agreement_radius(eps), P, Py, tilde, counts, dict(meta or {}))


# --- the forge ----------------------------------------------------------------

STEER_ALPHABET = np.arange(5, dtype=np.uint8)


@functools.lru_cache(maxsize=None)
def _blocks(j: int) -> np.ndarray:
    """All words of length j over the steering alphabet, one per row."""
    c = np.array(list(itertools.product(range(5), repeat=j)), dtype=np.int64)
    c = c.reshape(max(c.shape[0], 1), j)
    c.flags.writeable = False
    return c


class _Connector:
    """Symbol list with the fiber tracked through every map whose context is known.

    Uses the unperturbed step maps; the final orbit is recomputed exactly.
    """

    def __init__(self, sys: SkewSystem, x: float):
        self.sys = sys
        self.d = sys.depth
        self.shift, self.amp, self.phase = sys._arrays
        self.symbols: list[int] = []
        self.applied = 0
        self.x = float(x)
        self.logd = 0.0

    def _step(self, xs, codes):
        k = self.sys._rule_flat[codes]
        a = self.amp[k]
        arg = TWO_PI * (xs - self.phase[k])
        logd = np.log1p(TWO_PI * a * np.cos(arg))
        return (xs + self.shift[k] + a * np.sin(arg)) % 1.0, logd

    def _code(self, window) -> int:
        c = 0
        for s in window:
            c = c * 6 + int(s)
        return c

    def extend(self, block: Sequence[int], context: Sequence[int] = ()):
        """Append symbols and apply every map whose d-symbol window is now known."""
        self.symbols.extend(int(s) for s in block)
        full = self.symbols + [int(s) for s in context]
        while self.applied + self.d <= len(full) and self.applied < len(self.symbols):
            code = self._code(full[self.applied : self.applied + self.d])
            y, ld = self._step(np.array([self.x]), np.array([code]))
            self.x, self.logd = float(y[0]), self.logd + float(ld[0])
            self.applied += 1

    @property
    def pending(self) -> list[int]:
        return self.symbols[self.applied :]

    def _evaluate(self, x0: np.ndarray, rows: np.ndarray, n_apply: int) -> np.ndarray:
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        x0 = np.ascontiguousarray(x0, dtype=float)
        return _kernels.eval_rows(x0, rows, n_apply, self.d, self.sys._rule_flat, self.shift, self.amp, self.phase)

    def steer(self, target: float, tol: float, post: Sequence[int], follow: Sequence[int], max_depth: int) -> list[int]:
        """Shortest block B = '0'*k + c, c over {0..4}, putting the fiber after ``pending + B + post`` within tol of target."""
        pend = self.pending
        delta = float(self.shift[0])
        n_turn = math.ceil(1.0 / delta) + 1 if delta > 0 else 0
        reach_step = float(np.max(np.abs(self.shift[:5]) + np.abs(self.amp[:5])))
        after = list(post) + list(follow)
        # fiber after pending + '0'*(k-1), all of whose maps see a '0' next
        starts = [self.x]
        if n_turn:
            x1 = self._evaluate(np.array([self.x]), np.array([pend + [0] * self.d], dtype=np.int64), len(pend))[0]
            starts.append(x1)
            for _ in range(n_turn - 1):
                starts.append((starts[-1] + delta) % 1.0)
        for length in range(1, n_turn + max_depth + 1):
            best = None
            for j in range(min(length, max_depth), -1, -1):
                k = length - j
                if k > n_turn:
                    break
                if not post and float(arc_distance(starts[k], target)) > j * reach_step + tol + 2 * delta:
                    continue
                cands = _blocks(j)
                lead = pend if k == 0 else [0]
                tail = np.array(after, dtype=np.int64)
                nrow = cands.shape[0]
                rows = np.hstack(
                    [
                        np.broadcast_to(np.array(lead, dtype=np.int64), (nrow, len(lead))),
                        cands,
                        np.broadcast_to(tail, (nrow, tail.size)),
                    ]
                )
                n_apply = len(lead) + j + len(post)
                if n_apply + self.d - 1 > rows.shape[1]:
                    raise ForgeError("steering needs more follow-up context")
                xs = self._evaluate(np.full(nrow, starts[k]), rows, n_apply)
                dist = arc_distance(xs, target)
                i = int(np.argmin(dist))
                if dist[i] < tol and (best is None or dist[i] < best[0]):
                    best = (float(dist[i]), [0] * k + cands[i].tolist())
            if best is not None:
                return best[1]
        raise ForgeError(f"no steering block of depth <= {max_depth} reaches {target:.6g} within {tol:.3g}")


def _visit_layout(cyl: CylinderSpec) -> tuple[list[int], list[int]]:
    """Symbols applied before the visit time (post) and after it (follow)."""
    cw = word_array(cyl.word).tolist()
    s = cyl.start_index
    if s >= 0:
        return [], [0] * s + cw
    m = -s
    full = cw + [0] * max(0, m - len(cw))
    post, follow = full[:m], full[m:]
    return post, follow or [0]


@dataclass(frozen=True)
class ForgeSettings:
    target_ratio: float = 0.895
    max_N: int = 10_000
    steer_depth: int = 8
    visit_margin: Optional[float] = None


def _amplification(xtraj: np.ndarray, xlogd: np.ndarray, start: int, length: int) -> float:
    P = xlogd.shape[0]
    t = (start + np.arange(length)) % P
    c = np.cumsum(xlogd[t])
    return float(math.exp(max(0.0, c.max())))


def build_connector(
    sys: SkewSystem,
    X: PeriodicOrbit,
    xtraj: np.ndarray,
    neighborhoods: Sequence[Neighborhood],
    eps: float,
    settings: ForgeSettings,
    delta2: float,
) -> dict:
    """Connector pieces (without padding) and the bookkeeping the forge needs."""
    w = word_array(X.word)
    P = X.period
    n = max(agreement_radius(eps), sys.depth)
    ext = lambda a, b: w[np.arange(a, b) % P].tolist()  # noqa: E731
    head, tail = ext(0, n), ext(-n, 0)
    xlogd = sys.log_derivs(xtraj, sys.word_data(w)[0])

    con = _Connector(sys, X.fiber_x)
    con.extend(head)
    visits = []
    margin = settings.visit_margin
    for U in neighborhoods:
        m = min(0.5 * U.radius, 2.0 * eps) if margin is None else margin
        post, follow = _visit_layout(U.cylinder)
        block = con.steer(U.center, U.radius - m, post, follow, settings.steer_depth)
        con.extend(block)
        t_visit = len(con.symbols) + len(post)
        con.extend(post + follow)
        visits.append(t_visit)
    con.extend([GLUE])
    split = len(con.symbols)
    # error at the tail start is amplified along the tail and the next blocks of w
    amp = _amplification(xtraj, xlogd, -n, n + 2 * P)
    tol = min(0.5 * delta2, eps / (4.0 * amp))
    target = float(xtraj[(-n) % P])
    back = con.steer(target, tol, [], tail[: sys.depth - 1] or [int(w[0])], settings.steer_depth)
    con.extend(back)
    con.extend(tail, context=ext(0, sys.depth - 1))
    return {
        "symbols": np.array(con.symbols, dtype=np.uint8),
        "split": split,
        "logd": con.logd,
        "visits": visits,
        "head": n,
        "return_error": float(arc_distance(con.x, X.fiber_x)),
        "return_tol": tol,
    }


def padding_block(length: int, delta2: float) -> np.ndarray:
    """Identity symbols followed by as many full rotation turns as fit."""
    turn = round(1.0 / delta2)
    if abs(turn * delta2 - 1.0) > 1e-12:
        turn = 0  # rotation steps do not close up: pad with identities only
    n_rot = (length // turn) * turn if turn else 0
    return np.concatenate([np.full(length - n_rot, GLUE, dtype=np.uint8), np.zeros(n_rot, dtype=np.uint8)])


def forge(
    sys: SkewSystem,
    X: PeriodicOrbit,
    U: Neighborhood | Sequence[Neighborhood],
    eps: float,
    constants: ControlConstants = ControlConstants(),
    settings: ForgeSettings = ForgeSettings(),
) -> tuple[PeriodicOrbit, ShadowReport]:
    """One lengthening step: a longer, less attracting orbit that visits U and shadows X."""
    lam = X.exponent
    if not lam < 0:
        raise ValueError("X must attract along the fiber")
    if not lam + math.log(constants.nu) > constants.lemma_D:
        raise ValueError("X violates lambda + ln(nu) > lemma_D")
    if not 0 < settings.target_ratio < constants.contraction_C:
        raise ValueError("target_ratio must lie in (0, contraction_C)")
    nbhds = [U] if isinstance(U, Neighborhood) else list(U)
    delta2 = float(sys.family[0].shift)

    P = X.period
    w = word_array(X.word)
    xdata = sys.word_data(w)
    xtraj, _, _ = sys.word_orbit(w, X.fiber_x, xdata)
    con = build_connector(sys, X, xtraj, nbhds, eps, settings, delta2)
    c = con["symbols"]
    kappa_req = 1.0 - 3.0 * abs(lam) / math.log(constants.L)
    r = settings.target_ratio

    failures = []
    for N in range(2, settings.max_N + 1):
        S = N * X.log_theta + con["logd"]
        if not S < 0:
            failures.append((N, "connector expands more than w^N contracts"))
            continue
        Py = math.ceil(S / (r * lam))
        pad = Py - N * P - c.size
        if pad < 0:
            failures.append((N, "connector too long for the target ratio"))
            continue
        if Py <= 2 * P:
            continue
        # quick upper bound: at most N + 1 windows per phase
        if (N + 1) * P / Py < kappa_req and P > 1:
            continue
        yw = np.concatenate([np.tile(w, N), c[: con["split"]], padding_block(pad, delta2), c[con["split"] :]])
        ydata = sys.word_data(yw)
        y0 = settle_fixed_point(sys, ydata, X.fiber_x)
        ytraj, y_end, log_theta = sys.word_orbit(yw, y0, ydata)
        if abs(float(wrap(y_end - y0))) > 1e-10:
            failures.append((N, "fixed point did not settle"))
            continue
        Y = PeriodicOrbit(array_word(yw), float(y0), float(log_theta))
        lam_y = Y.exponent
        if not (lam_y < 0 and abs(lam_y) < constants.contraction_C * abs(lam)):
            failures.append((N, f"exponent ratio {lam_y / lam:.4f}"))
            continue
        if not lam_y + math.log(constants.nu) > constants.lemma_D:
            failures.append((N, "weak attraction margin lost"))
            continue
        if not all(U_.hit_at(yw, ytraj, N * P + v) for U_, v in zip(nbhds, con["visits"])):
            failures.append((N, "a neighbourhood is not visited"))
            continue
        meta = {
            "N": N,
            "connector_length": int(c.size),
            "padding": int(pad),
            "visits": [N * P + v for v in con["visits"]],
            "return_error": con["return_error"],
            "return_tol": con["return_tol"],
        }
        report = shadow_report(X, Y, xtraj, ytraj, eps, meta)
        if report.kappa < kappa_req or report.counts.size == 0 or report.counts.min() == 0:
            failures.append((N, f"kappa {report.kappa:.4f} < {kappa_req:.4f}"))
            continue
        return Y, report
    tail = "; ".join(f"N={n}: {why}" for n, why in failures[-5:])
    raise ForgeError(f"no admissible N up to {settings.max_N} ({tail})")


# --- verification ---------------------------------------------------------------


@dataclass
class Verdict:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.checks.values())

    def __bool__(self):
        return self.passed

    def failed(self) -> list[str]:
        return [k for k, (ok, _) in self.checks.items() if not ok]

    def to_json(self) -> dict:
        return {"passed": self.passed, "checks": {k: {"ok": ok, "margin": m} for k, (ok, m) in self.checks.items()}}


def _literal_windows(yw, ytraj, xw, xtraj, eps, starts, P) -> np.ndarray:
    """Full-window closeness for each start, via nearest-failure lookups.

    Deliberately a different route from :func:`closeness_profile`: the base
    test measures the distance to the nearest symbol mismatch, and a window
    passes when the first failing position at or after its start lies a full
    period away.
    """
    Py, Px = yw.shape[0], xw.shape[0]
    n = agreement_radius(eps)
    if starts.size == 0:
        return np.zeros(0, dtype=bool)
    lo, hi = int(starts.min()) - n, int(starts.max()) + P + n
    t = np.arange(lo, hi)
    miss = np.concatenate([[lo - n - 1], t[yw[t % Py] != xw[t % Px]], [hi + n + 1]])
    pos = np.arange(int(starts.min()), int(starts.max()) + P)
    j = np.searchsorted(miss, pos)
    right = np.where(j < miss.size, miss[np.minimum(j, miss.size - 1)] - pos, n + 1)
    left = np.where(j > 0, pos - miss[np.maximum(j - 1, 0)], n + 1)
    base_ok = np.minimum(left, right) >= n
    fiber_ok = arc_distance(ytraj[pos % Py], xtraj[pos % Px]) < eps
    fails = np.append(pos[~(base_ok & fiber_ok)], pos[-1] + 1)
    first_fail = fails[np.searchsorted(fails, starts)]
    return first_fail >= starts + P


def verify_forge(
    sys: SkewSystem,
    X: PeriodicOrbit,
    Y: PeriodicOrbit,
    report: ShadowReport,
    constants: ControlConstants = ControlConstants(),
    neighborhoods: Sequence[Neighborhood] = (),
    spot_checks: int = 16,
) -> Verdict:
    """Recheck every forge conclusion from the raw words."""
    checks: dict = {}
    xw, yw = word_array(X.word), word_array(Y.word)
    P, Py = X.period, Y.period
    xtraj, x_end, x_logd = sys.word_orbit(xw, X.fiber_x)
    ytraj, y_end, y_logd = sys.word_orbit(yw, Y.fiber_x)
    err_x = float(arc_distance(x_end, X.fiber_x))
    err_y = float(arc_distance(y_end, Y.fiber_x))
    checks["x_is_periodic"] = (err_x < 1e-10, 1e-10 - err_x)
    checks["y_is_periodic"] = (err_y < 1e-10, 1e-10 - err_y)
    tol_t = 1e-10 * max(1.0, abs(y_logd))
    checks["y_multiplier_matches"] = (abs(y_logd - Y.log_theta) <= tol_t, tol_t - abs(y_logd - Y.log_theta))
    lam, lam_y = x_logd / P, y_logd / Py
    checks["period_more_than_doubles"] = (Py > 2 * P, Py - 2 * P)
    checks["y_attracting"] = (lam_y < 0, -lam_y)
    bound = constants.contraction_C * abs(lam)
    checks["exponent_contracts"] = (abs(lam_y) < bound, bound - abs(lam_y))
    m = lam_y + math.log(constants.nu) - constants.lemma_D
    checks["weak_attraction"] = (m > 0, m)
    for i, U in enumerate(neighborhoods):
        hits = U.hits(yw, ytraj)
        checks[f"visits_U{i}"] = (hits.size > 0, int(hits.size))

    tilde = np.asarray(report.tilde, dtype=np.int64)
    kappa = tilde.size / Py
    kappa_req = 1.0 - 3.0 * abs(lam) / math.log(constants.L)
    checks["kappa_bound"] = (kappa >= kappa_req, kappa - kappa_req)
    checks["report_matches_periods"] = (report.period_x == P and report.period_y == Py, 0)
    counts = np.bincount(tilde % P, minlength=P) if tilde.size else np.zeros(P, dtype=np.int64)
    equal = bool(counts.size and counts.min() == counts.max() and counts.min() > 0)
    stored = np.asarray(report.counts)
    checks["equal_preimage_counts"] = (
        equal and stored.shape == counts.shape and bool(np.all(stored == counts)),
        int(counts.min() - counts.max()) if counts.size else -1,
    )
    in_range = bool(tilde.size == 0 or (tilde.min() >= 0 and tilde.max() < Py and np.all(np.diff(tilde) > 0)))
    win = _literal_windows(yw, ytraj, xw, xtraj, report.eps, tilde, P) if in_range else np.array([False])
    checks["windows_shadow"] = (in_range and bool(np.all(win)), int(np.sum(~win)))
    # a few full metric evaluations with tail rewrites, as a cross-check of the literal scan
    if tilde.size and in_range:
        rng = np.random.default_rng(0)
        depth = agreement_radius(report.eps) + 1
        ys, xs_ = PeriodicSequence(Y.word), PeriodicSequence(X.word)
        worst = 0.0
        for t in rng.choice(tilde, size=min(spot_checks, tilde.size), replace=False):
            for l in rng.integers(0, P, size=2):
                u = int(t + l)
                d = max(
                    base_distance(ys.shift(u), xs_.shift(u), depth),
                    float(arc_distance(ytraj[u % Py], xtraj[u % P])),
                )
                worst = max(worst, d)
        checks["metric_spot_checks"] = (worst < report.eps, report.eps - worst)
    return Verdict(checks)


# --- cascade ------------------------------------------------------------------------


@dataclass
class Cascade:
    orbits: list
    reports: list
    assignments: list  # neighbourhoods visited by the orbit of each stage (stage 1: none)
    eps: list

    def __len__(self):
        return len(self.orbits)


def schedule_neighborhoods(neighborhoods: Sequence[Neighborhood], stages: int, x0: float) -> list[list[Neighborhood]]:
    """Spread the neighbourhoods over forges 1..stages-1.

    Cells are taken in order of fiber distance from the seed; every forge but
    the last takes one, the last takes the rest, so the long connector lands
    where it is diluted by the longest orbit.
    """
    forges = stages - 1
    if forges <= 0:
        return []
    order = sorted(range(len(neighborhoods)), key=lambda i: (float(arc_distance(neighborhoods[i].center, x0)), i))
    queue = [neighborhoods[i] for i in order]
    plan = []
    for f in range(forges):
        if f < forges - 1:
            plan.append(queue[:1])
            queue = queue[1:]
        else:
            plan.append(queue)
    return plan


def cascade(
    sys: SkewSystem,
    neighborhoods: Sequence[Neighborhood],
    stages: int,
    constants: ControlConstants = ControlConstants(),
    eps0: Optional[float] = None,
    seed: Optional[PeriodicOrbit] = None,
    settings: ForgeSettings = ForgeSettings(),
) -> Cascade:
    """Seed orbit followed by ``stages - 1`` forges with ``eps_i = eps0 2^-i``."""
    if stages < 1:
        raise ValueError("stages must be >= 1")
    X = seed_orbit(sys) if seed is None else seed
    if not X.exponent + math.log(constants.nu) > 0:
        raise ForgeError("seed orbit is not weakly attracting")
    eps0 = constants.delta2 if eps0 is None else eps0
    plan = schedule_neighborhoods(neighborhoods, stages, X.fiber_x)
    orbits, reports, eps_list = [X], [], []
    for i, U in enumerate(plan, start=1):
        eps = eps0 * 2.0**-i
        try:
            Y, rep = forge(sys, X, U, eps, constants, settings)
        except (ForgeError, ValueError) as e:
            raise ForgeError(f"stage {i + 1}: {e}") from e
        orbits.append(Y)
        reports.append(rep)
        eps_list.append(eps)
        X = Y
    return Cascade(orbits, reports, [[]] + plan, eps_list)
