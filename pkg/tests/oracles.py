"""Independent reference computations used to freeze expected values.

Nothing here imports the package's numerical code: scalars use plain Python
arithmetic, fractions or brute-force enumeration.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def splitmix_finalizer(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def counter_stream(seed: int, stream: int, n: int) -> list[int]:
    key = splitmix_finalizer(seed ^ splitmix_finalizer(stream + GAMMA))
    return [splitmix_finalizer(key + (i + 1) * GAMMA) for i in range(n)]


def box_muller_scalar(raw: list[int]) -> list[float]:
    out = []
    for a, b in zip(raw[0::2], raw[1::2]):
        u1 = ((a >> 11) + 1) * 2.0 ** -53
        u2 = (b >> 11) * 2.0 ** -53
        r = math.sqrt(-2.0 * math.log(u1))
        out += [r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)]
    return out


def ess_fraction(weights) -> Fraction:
    w = [Fraction(x) for x in weights]
    return sum(w) ** 2 / sum(x * x for x in w)


def pooled_s2_fraction(clusters) -> Fraction:
    num, den = Fraction(0), 0
    for c in clusters:
        if len(c) < 2:
            continue
        c = [Fraction(x) for x in c]
        mean = sum(c) / len(c)
        s2 = sum((x - mean) ** 2 for x in c) / (len(c) - 1)
        num += len(c) * s2
        den += len(c)
    return num / den


def simplex_grid(m: int, step: float):
    """All points of the probability simplex on a grid with spacing ``step``."""
    k = int(round(1.0 / step))
    for comp in itertools.product(range(k + 1), repeat=m - 1):
        s = sum(comp)
        if s <= k:
            yield np.array([*comp, k - s], dtype=float) / k


def transport_by_vertices(cost) -> float:
    """Optimal transport for tiny uniform problems by enumerating permutations.

    With equal numbers of points and uniform masses an optimal plan is a
    permutation matrix (Birkhoff-von Neumann).
    """
    n = len(cost)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, sum(cost[i][perm[i]] for i in range(n)) / n)
    return best


def mixture_mean(centers, weights):
    return tuple(sum(w * c[k] for c, w in zip(centers, weights)) for k in range(len(centers[0])))


try:
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*a, **k):
        return (lambda f: f) if not a or not callable(a[0]) else a[0]


@njit(cache=True)
def _grid_value(P, counts, k, linf):
    p = P.shape[1]
    best = 0.0
    acc2 = 0.0
    for d in range(p):
        s = 0.0
        for j in range(P.shape[0]):
            s += counts[j] * P[j, d]
        s /= k
        if linf:
            if abs(s) > best:
                best = abs(s)
        else:
            acc2 += s * s
    return best if linf else np.sqrt(acc2)


@njit(cache=True)
def _grid_min(P, k, linf):
    m = P.shape[0]
    counts = np.zeros(m)
    best = np.inf
    if m == 1:
        counts[0] = k
        return _grid_value(P, counts, k, linf)
    # enumerate the first m - 2 coordinates; the objective restricted to the
    # last two is convex along the segment, so an integer ternary search finds
    # its grid minimum exactly
    idx = np.zeros(max(m - 2, 1), dtype=np.int64)
    while True:
        used = 0
        for i in range(m - 2):
            used += idx[i]
        if used <= k:
            rem = k - used
            for i in range(m - 2):
                counts[i] = idx[i]
            lo, hi = 0, rem
            while hi - lo > 2:
                a = lo + (hi - lo) // 3
                b = hi - (hi - lo) // 3
                counts[m - 2] = a
                counts[m - 1] = rem - a
                fa = _grid_value(P, counts, k, linf)
                counts[m - 2] = b
                counts[m - 1] = rem - b
                fb = _grid_value(P, counts, k, linf)
                if fa <= fb:
                    hi = b
                else:
                    lo = a
            for t in range(lo, hi + 1):
                counts[m - 2] = t
                counts[m - 1] = rem - t
                v = _grid_value(P, counts, k, linf)
                if v < best:
                    best = v
        if m == 2:
            break
        # odometer increment over idx[0 .. m-3]
        pos = 0
        while pos < m - 2:
            idx[pos] += 1
            total = 0
            for i in range(m - 2):
                total += idx[i]
            if total <= k:
                break
            idx[pos] = 0
            pos += 1
        if pos == m - 2:
            break
    return best


def simplex_grid_min(x_t, Xc, pi, norm: str, step: float = 1e-3) -> float:
    """Minimum scaled imbalance over the simplex grid with spacing ``step``."""
    P = (np.asarray(Xc, dtype=float) - np.asarray(x_t, dtype=float)) / np.asarray(pi, dtype=float)
    return float(_grid_min(np.ascontiguousarray(P), int(round(1.0 / step)), norm == "linf"))
