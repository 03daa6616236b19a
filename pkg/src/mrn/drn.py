"""The unperturbed deterministic random network over a noise realization.

Cocycle products of deterministic matrices are composed as maps of states,
O(k) per step, and are therefore exact.  Synchronization times are the
first depths at which the forward product ``A_{n-1} ... A_0`` or the
pull-back product ``A_{-1} ... A_{-n}`` has rank one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import CappedSyncTime
from .linalg import DetMatrix, as_zero_sum
from .noise import Alphabet, NoiseRealization, sample_realization

DEFAULT_CAP = 10_000


def cocycle_forward(omega: NoiseRealization, n: int) -> DetMatrix:
    """``P0(n, omega) = A_{n-1} ... A_0`` (identity for ``n = 0``)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    cur = tuple(range(omega.k))
    for z in range(n):
        a = omega.digits_at(z)
        cur = tuple(a[t] for t in cur)
    return DetMatrix(cur)


def cocycle_pullback(omega: NoiseRealization, n: int) -> DetMatrix:
    """``P0(n, theta^{-n} omega) = A_{-1} A_{-2} ... A_{-n}``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    cur = tuple(range(omega.k))
    for z in range(1, n + 1):
        a = omega.digits_at(-z)
        cur = tuple(cur[t] for t in a)
    return DetMatrix(cur)


def forward_sync_time(omega: NoiseRealization, cap: int = DEFAULT_CAP) -> tuple[int, bool]:
    """First ``n >= 1`` with ``rank P0(n, omega) = 1``; ``(cap, True)`` if not reached."""
    cur = tuple(range(omega.k))
    for n in range(1, cap + 1):
        a = omega.digits_at(n - 1)
        cur = tuple(a[t] for t in cur)
        if len(set(cur)) == 1:
            return n, False
    return cap, True


def pullback_sync(omega: NoiseRealization, cap: int = DEFAULT_CAP) -> tuple[int, int | None, bool]:
    """Pull-back sync time, the synchronization index J, and the capped flag.

    J is the state that the rank-one pull-back product collapses onto; it is
    ``None`` when the cap is hit.
    """
    cur = tuple(range(omega.k))
    for n in range(1, cap + 1):
        a = omega.digits_at(-n)
        cur = tuple(cur[t] for t in a)
        if len(set(cur)) == 1:
            return n, cur[0], False
    return cap, None, True


def sync_index(omega: NoiseRealization, cap: int = DEFAULT_CAP) -> int:
    n, j, capped = pullback_sync(omega, cap)
    if capped:
        raise CappedSyncTime(f"no pull-back synchronization within {cap} steps")
    return j


@dataclass(frozen=True)
class SyncReport:
    n_plus: int
    n_minus: int
    j_index: int | None
    capped_plus: bool = False
    capped_minus: bool = False

    @property
    def capped(self) -> bool:
        return self.capped_plus or self.capped_minus


def sync_times(omega: NoiseRealization, cap: int = DEFAULT_CAP) -> SyncReport:
    if cap < 1:
        raise ValueError("cap must be >= 1")
    n_plus, cp = forward_sync_time(omega, cap)
    n_minus, j, cm = pullback_sync(omega, cap)
    return SyncReport(n_plus, n_minus, j, cp, cm)


@dataclass
class SyncStats:
    cdf: dict[int, float]
    mean_plus: float
    density_good_times: float
    counts_plus: dict[int, int]
    counts_minus: dict[int, int]
    n_seeds: int
    n_capped: int
    m: int

    def rows(self):
        """CSV rows ``n, count_plus, count_minus, cdf_plus, cdf_minus``."""
        top = max(max(self.counts_plus, default=1), max(self.counts_minus, default=1))
        cp = cm = 0
        for n in range(1, top + 1):
            a, b = self.counts_plus.get(n, 0), self.counts_minus.get(n, 0)
            cp += a
            cm += b
            yield n, a, b, cp / self.n_seeds, cm / self.n_seeds


def good_time_density(omega: NoiseRealization, m: int, length: int) -> float:
    """Fraction of ``0 <= n < length`` with ``N0+(theta^n omega) <= m``."""
    alphabet = omega.alphabet
    pos = omega.positions(0, length + m)
    rows = [alphabet.row(int(p)) for p in pos]
    k = omega.k
    good = 0
    for n in range(length):
        cur = tuple(range(k))
        for a in rows[n : n + m]:
            cur = tuple(a[t] for t in cur)
            if len(set(cur)) == 1:
                good += 1
                break
    return good / length


def seed_sync_times(alphabet: Alphabet, seeds: Iterable[int], cap: int = DEFAULT_CAP):
    """``(N0+ array, N0- array, capped count)`` over fresh realizations."""
    plus, minus = [], []
    capped = 0
    for s in seeds:
        r = sync_times(sample_realization(s, alphabet), cap)
        plus.append(r.n_plus)
        minus.append(r.n_minus)
        capped += r.capped
    return np.array(plus, dtype=np.int64), np.array(minus, dtype=np.int64), capped


def stats_from_samples(plus, minus, capped: int, m: int, density: float) -> SyncStats:
    plus, minus = np.asarray(plus), np.asarray(minus)
    n = plus.size
    counts_plus = {int(v): int(c) for v, c in zip(*np.unique(plus, return_counts=True))}
    counts_minus = {int(v): int(c) for v, c in zip(*np.unique(minus, return_counts=True))}
    cdf, acc = {}, 0
    for v in range(1, int(plus.max()) + 1):
        acc += counts_plus.get(v, 0)
        cdf[v] = acc / n
    return SyncStats(cdf, float(plus.mean()), density, counts_plus, counts_minus, n, capped, m)


def sync_time_stats(
    alphabet: Alphabet,
    seeds: range,
    m: int,
    cap: int = DEFAULT_CAP,
    orbit_length: int = 100_000,
) -> SyncStats:
    """Monte-Carlo law of the sync times plus the orbit density of good times.

    The orbit density is measured along the realization of ``seeds[0]``.
    """
    if len(seeds) == 0:
        raise ValueError("seed range is empty")
    if m > cap:
        raise ValueError("m must not exceed cap")
    plus, minus, capped = seed_sync_times(alphabet, seeds, cap)
    density = good_time_density(sample_realization(seeds[0], alphabet), m, orbit_length)
    return stats_from_samples(plus, minus, capped, m, density)


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic for integer-valued samples."""
    a, b = np.sort(np.asarray(a)), np.sort(np.asarray(b))
    grid = np.union1d(a, b)
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical_value(n1: int, n2: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample KS rejection threshold at level ``alpha``."""
    c = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def check_minus_plus_distribution(alphabet: Alphabet, seeds: range, cap: int = DEFAULT_CAP) -> float:
    """KS distance between the empirical laws of N0+ and N0-."""
    plus, minus, _ = seed_sync_times(alphabet, seeds, cap)
    return ks_distance(plus, minus)


def exact_apply(a: DetMatrix, v) -> np.ndarray:
    """``A v`` with every output entry an exactly rounded sum."""
    k = a.k
    groups: list[list[float]] = [[] for _ in range(k)]
    for j, t in enumerate(a.digits):
        groups[t].append(float(v[j]))
    return np.array([math.fsum(g) for g in groups])


def check_annihilation(omega: NoiseRealization, v, extra: int = 0, cap: int = DEFAULT_CAP) -> bool:
    """Does the pull-back product at depth ``N0- + extra`` send ``v`` to 0?"""
    v = as_zero_sum(v)
    n_minus, _, capped = pullback_sync(omega, cap)
    if capped:
        raise CappedSyncTime(f"no pull-back synchronization within {cap} steps")
    out = exact_apply(cocycle_pullback(omega, n_minus + extra), v)
    return bool(np.all(out == 0.0))
