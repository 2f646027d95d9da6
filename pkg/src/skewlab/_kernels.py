"""Compiled inner loops for long fiber compositions.

Every position t of a base word carries a family index ``idx[t]`` (the step
rule already applied) and a rotation ``rot[t]`` from the perturbation tail.
The fiber map at t is ``x -> F_idx(x) + rot`` with ``F`` a sine map.
"""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def push(x0, idx, rot, shift, amp, phase):
    """Forward composition: returns (x mod 1, sum of log-derivatives)."""
    x = x0
    logd = 0.0
    for t in range(idx.shape[0]):
        k = idx[t]
        a = amp[k]
        if a != 0.0:
            arg = TWO_PI * (x - phase[k])
            logd += math.log1p(TWO_PI * a * math.cos(arg))
            x = x + shift[k] + a * math.sin(arg) + rot[t]
        else:
            x = x + shift[k] + rot[t]
        x -= math.floor(x)
    return x, logd


@njit(cache=True)
def orbit(x0, idx, rot, shift, amp, phase, out):
    """Like ``push`` but stores the fiber before each step in ``out``."""
    x = x0
    logd = 0.0
    for t in range(idx.shape[0]):
        out[t] = x
        k = idx[t]
        a = amp[k]
        if a != 0.0:
            arg = TWO_PI * (x - phase[k])
            logd += math.log1p(TWO_PI * a * math.cos(arg))
            x = x + shift[k] + a * math.sin(arg) + rot[t]
        else:
            x = x + shift[k] + rot[t]
        x -= math.floor(x)
    return x, logd


@njit(cache=True)
def log_derivs(xs, idx, shift, amp, phase):
    """Pointwise log-derivatives of the maps at positions t evaluated at xs[t]."""
    out = np.empty(xs.shape[0])
    for t in range(xs.shape[0]):
        k = idx[t]
        a = amp[k]
        if a != 0.0:
            out[t] = math.log1p(TWO_PI * a * math.cos(TWO_PI * (xs[t] - phase[k])))
        else:
            out[t] = 0.0
    return out


@njit(cache=True)
def pull(x0, idx, rot, shift, amp, phase):
    """Backward composition over positions in reverse order.

    Applies the inverse of the map at the last position first.  Returns the
    preimage mod 1 and the sum of log-derivatives of the inverses.
    """
    x = x0
    logd = 0.0
    for t in range(idx.shape[0] - 1, -1, -1):
        k = idx[t]
        a = amp[k]
        target = x - rot[t] - shift[k]
        if a == 0.0:
            x = target
        else:
            # monotone bisection on y + a sin(2 pi (y - phase)) = target
            lo = target - abs(a)
            hi = target + abs(a)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if mid + a * math.sin(TWO_PI * (mid - phase[k])) < target:
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-15:
                    break
            x = 0.5 * (lo + hi)
            logd -= math.log1p(TWO_PI * a * math.cos(TWO_PI * (x - phase[k])))
        x -= math.floor(x)
    return x, logd


@njit(cache=True)
def tail_rotations(word, rho, depth):
    """``rot[t] = sum_k rho[k + depth, word[(t + k) mod P]]`` for |k| <= depth."""
    P = word.shape[0]
    out = np.zeros(P)
    for t in range(P):
        s = 0.0
        for k in range(-depth, depth + 1):
            s += rho[k + depth, word[(t + k) % P]]
        out[t] = s
    return out


@njit(cache=True)
def lift_grid(xs, idx, rot, shift, amp, phase):
    """Lift of the whole composition at every x in xs (no reduction mod 1)."""
    out = xs.copy()
    for i in range(xs.shape[0]):
        x = xs[i]
        for t in range(idx.shape[0]):
            k = idx[t]
            x = x + shift[k] + amp[k] * math.sin(TWO_PI * (x - phase[k])) + rot[t]
        out[i] = x
    return out


@njit(cache=True)
def eval_rows(x0, rows, n_apply, depth, rule_flat, shift, amp, phase):
    """Fiber after the first n_apply maps of every symbol row, unperturbed step rule of the given depth."""
    n = rows.shape[0]
    out = np.empty(n)
    for r in range(n):
        x = x0[r]
        for col in range(n_apply):
            code = 0
            for i in range(depth):
                code = code * 6 + rows[r, col + i]
            k = rule_flat[code]
            x = x + shift[k] + amp[k] * math.sin(TWO_PI * (x - phase[k]))
            x -= math.floor(x)
        out[r] = x
    return out
