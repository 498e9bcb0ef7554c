"""Consecutive-repetition detection over label sequences.

Suffix arrays come from prefix doubling over integer ranks and LCP arrays
from Kasai's rank walk. Repetitions are reported as *runs*: maximal
intervals ``[start, end)`` with smallest period ``p`` and ``end - start >=
2p``. Runs are found by longest-common-extension queries at sampled
positions ``k*p`` (range-minimum over the LCP array, forward and on the
reversed sequence), which touches ``n/p`` positions per period and so
``O(n log n)`` positions overall.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np


@dataclass(frozen=True)
class RepetitionPattern:
    labels: tuple
    period: int
    start: int
    count: int
    trailing: bool

    @property
    def end(self) -> int:
        return self.start + self.period * self.count

    def to_record(self) -> dict:
        return {
            "pattern": [str(x) for x in self.labels],
            "period": self.period,
            "start": self.start,
            "count": self.count,
            "trailing": self.trailing,
        }


def encode(seq: Sequence[Hashable]) -> np.ndarray:
    """Dense integer ranks preserving the labels' total order."""
    uniq = set(seq)
    try:
        ordered = sorted(uniq)
    except TypeError:
        ordered = list(dict.fromkeys(seq))
    rank = {x: i for i, x in enumerate(ordered)}
    return np.fromiter((rank[x] for x in seq), dtype=np.int64, count=len(seq))


def _as_ints(seq) -> np.ndarray:
    if isinstance(seq, np.ndarray) and seq.dtype.kind in "iu":
        return seq.astype(np.int64, copy=False)
    return encode(seq)


def build_suffix_array(seq) -> np.ndarray:
    """Suffix start positions in lexicographic order of the suffixes."""
    a = _as_ints(seq)
    n = len(a)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    rank = a.copy()
    k = 1
    while True:
        second = np.full(n, -1, dtype=np.int64)
        if k < n:
            second[: n - k] = rank[k:]
        order = np.lexsort((second, rank))
        r, s = rank[order], second[order]
        bumps = np.empty(n, dtype=np.int64)
        bumps[0] = 0
        bumps[1:] = (r[1:] != r[:-1]) | (s[1:] != s[:-1])
        new = np.empty(n, dtype=np.int64)
        new[order] = np.cumsum(bumps)
        rank = new
        if rank.max() == n - 1 or k >= n:
            return order.astype(np.int64)
        k *= 2


def build_lcp(seq, sa: np.ndarray) -> np.ndarray:
    """``lcp[i]`` = common-prefix length of suffixes ``sa[i-1]`` and ``sa[i]``; ``lcp[0] = 0``."""
    a = _as_ints(seq).tolist()
    n = len(a)
    lcp = [0] * n
    rank = [0] * n
    for i, p in enumerate(sa.tolist()):
        rank[p] = i
    h = 0
    for p in range(n):
        r = rank[p]
        if r == 0:
            h = 0
            continue
        q = int(sa[r - 1])
        while p + h < n and q + h < n and a[p + h] == a[q + h]:
            h += 1
        lcp[r] = h
        if h:
            h -= 1
    return np.asarray(lcp, dtype=np.int64)


class _LCE:
    """Longest common extension of two suffixes in O(1) per query."""

    def __init__(self, a: np.ndarray):
        n = len(a)
        self.n = n
        sa = build_suffix_array(a)
        lcp = build_lcp(a, sa)
        self.rank = np.empty(n, dtype=np.int64)
        self.rank[sa] = np.arange(n)
        levels = [lcp]
        w = 1
        while 2 * w <= n:
            prev = levels[-1]
            nxt = prev.copy()
            nxt[: n - w] = np.minimum(prev[: n - w], prev[w:])
            levels.append(nxt)
            w *= 2
        self.table = np.stack(levels) if n else np.zeros((1, 0), dtype=np.int64)

    def query(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """Vectorized LCE for position pairs with ``i != j``."""
        ri, rj = self.rank[i], self.rank[j]
        lo = np.minimum(ri, rj) + 1
        hi = np.maximum(ri, rj)
        length = hi - lo + 1
        k = np.floor(np.log2(length)).astype(np.int64)
        return np.minimum(self.table[k, lo], self.table[k, hi - (1 << k) + 1])


def adjacent_suffix_repeats(sa: np.ndarray, lcp: np.ndarray) -> list[tuple[int, int]]:
    """Squares visible to suffix-order neighbours: pairs ``(start, period)``
    where ``sa[i-1] == sa[i] + lcp[i]``, i.e. the suffix at ``sa[i]``
    begins with its own prefix repeated twice.

    This is a fast witness, not a complete search: some squares never sit
    next to their shifted copy in suffix order (``ABABXABC`` hides ``ABAB``).
    :func:`find_consecutive_repetitions` does not rely on it.
    """
    out = []
    for i in range(1, len(sa)):
        if lcp[i] > 0 and sa[i - 1] == sa[i] + lcp[i]:
            out.append((int(sa[i]), int(lcp[i])))
    return sorted(out)


def find_runs(seq) -> list[tuple[int, int, int]]:
    """All maximal runs as ``(start, end, period)`` with ``end - start >= 2*period``."""
    a = _as_ints(seq)
    n = len(a)
    if n < 2:
        return []
    fwd = _LCE(a)
    bwd = _LCE(a[::-1].copy())
    best: dict[tuple[int, int], int] = {}
    for p in range(1, n // 2 + 1):
        i = np.arange(0, n - p, p, dtype=np.int64)
        j = i + p
        f = fwd.query(i, j)
        b = np.zeros_like(i)
        has_left = i > 0
        if has_left.any():
            # common suffix of prefixes ending at i-1 and j-1
            b[has_left] = bwd.query(n - i[has_left], n - j[has_left])
        b = np.minimum(b, i)
        hit = f + b >= p
        if not hit.any():
            continue
        starts = i[hit] - b[hit]
        ends = j[hit] + f[hit]
        for s, e in zip(starts.tolist(), ends.tolist()):
            key = (s, e)
            if key not in best:
                best[key] = p
    return sorted((s, e, p) for (s, e), p in best.items())


def find_consecutive_repetitions(seq) -> list[RepetitionPattern]:
    """Every maximal consecutive repeat, sorted by start then period."""
    items = list(seq)
    n = len(items)
    out = []
    for s, e, p in find_runs(items):
        count = (e - s) // p
        out.append(RepetitionPattern(tuple(items[s : s + p]), p, s, count, e == n))
    out.sort(key=lambda r: (r.start, r.period))
    return out


def trailing_repetition(seq, min_count: int = 2) -> tuple[RepetitionPattern, int] | None:
    """The run that ends at the sequence end with the largest ``period*count``
    coverage (ties prefer the longer period), aligned so its last full
    occurrence ends exactly at the end. ``None`` if no such run reaches
    ``min_count`` occurrences."""
    items = list(seq)
    n = len(items)
    if n < 2:
        return None
    r = _as_ints(items)[::-1].copy()
    lce = _LCE(r)
    periods = np.arange(1, n, dtype=np.int64)
    # common suffix of the whole sequence and the prefix ending p earlier
    m = lce.query(np.zeros_like(periods), periods)
    tail = m + periods  # longest suffix having period p
    prior = np.maximum.accumulate(np.concatenate(([0], tail[:-1])))
    minimal = tail > prior
    counts = tail // periods
    ok = minimal & (counts >= max(2, min_count))
    if not ok.any():
        return None
    cand_p = periods[ok]
    cand_c = counts[ok]
    cover = cand_p * cand_c
    best = np.flatnonzero(cover == cover.max())[-1]
    p, c = int(cand_p[best]), int(cand_c[best])
    start = n - p * c
    return RepetitionPattern(tuple(items[start : start + p]), p, start, c, True), c
