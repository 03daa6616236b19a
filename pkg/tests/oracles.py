"""Independent reference computations used by the tests.

Nothing here calls into the library's algorithms; these are brute-force
enumerations and exact rational arithmetic written from the definitions.
"""

from __future__ import annotations

import itertools
from fractions import Fraction


def brute_census(k: int) -> dict[int, int]:
    out: dict[int, int] = {}
    for digits in itertools.product(range(k), repeat=k):
        r = len(set(digits))
        out[r] = out.get(r, 0) + 1
    return out


def first_rank_one_law(symbols, weights, depth: int, forward: bool) -> dict[int, float]:
    """P{first n with a rank-one product = n} for n <= depth, by prefix enumeration.

    ``symbols`` are digit tuples.  Branches stop as soon as the product
    collapses, so only undecided prefixes are expanded.
    """
    k = len(symbols[0])
    law: dict[int, float] = {}
    frontier = [(tuple(range(k)), 1.0)]
    for n in range(1, depth + 1):
        nxt = []
        for cur, p in frontier:
            for a, w in zip(symbols, weights):
                new = tuple(a[t] for t in cur) if forward else tuple(cur[t] for t in a)
                if len(set(new)) == 1:
                    law[n] = law.get(n, 0.0) + p * w
                else:
                    nxt.append((new, p * w))
        # merge identical maps to keep the frontier small
        merged: dict[tuple, float] = {}
        for cur, p in nxt:
            merged[cur] = merged.get(cur, 0.0) + p
        frontier = list(merged.items())
    return law


def omega1_probability(symbols, weights, zero, depth: int = 12) -> tuple[float, float]:
    """P{f(A_-1) = ... = f(A_-N) = 0} with N the pull-back sync time.

    ``zero[i]`` says whether f vanishes on ``symbols[i]``.  Returns the
    probability accumulated over prefixes decided within ``depth`` steps and
    the undecided mass left over.
    """
    k = len(symbols[0])
    hit = 0.0
    frontier = {tuple(range(k)): 1.0}
    for _ in range(depth):
        nxt: dict[tuple, float] = {}
        for cur, p in frontier.items():
            for a, w, z in zip(symbols, weights, zero):
                if not z:
                    continue
                new = tuple(cur[t] for t in a)
                if len(set(new)) == 1:
                    hit += p * w
                else:
                    nxt[new] = nxt.get(new, 0.0) + p * w
        frontier = nxt
    return hit, sum(frontier.values())


def frac_matrix(rows) -> list[list[Fraction]]:
    return [[Fraction(x) for x in r] for r in rows]


def frac_mul(a, b):
    n, m, p = len(a), len(b), len(b[0])
    return [[sum((a[i][t] * b[t][j] for t in range(m)), Fraction(0)) for j in range(p)] for i in range(n)]


def det_dense(digits):
    k = len(digits)
    return [[1 if digits[j] == i else 0 for j in range(k)] for i in range(k)]


def naive_product(mats):
    """Left-to-right dense product by triple loops, in floats."""
    out = mats[0]
    for b in mats[1:]:
        k = len(out)
        out = [[sum(out[i][t] * b[t][j] for t in range(k)) for j in range(k)] for i in range(k)]
    return out
