"""Brute-force references for the detector."""

from __future__ import annotations

import random


def naive_suffix_array(seq) -> list[int]:
    return sorted(range(len(seq)), key=lambda i: tuple(seq[i:]))


def common_prefix(seq, i: int, j: int) -> int:
    k = 0
    while i + k < len(seq) and j + k < len(seq) and seq[i + k] == seq[j + k]:
        k += 1
    return k


def naive_lcp(seq, sa) -> list[int]:
    if not sa:
        return []
    return [0] + [common_prefix(seq, sa[i - 1], sa[i]) for i in range(1, len(sa))]


def brute_runs(seq) -> set[tuple[int, int, int]]:
    """Maximal runs ``(start, end, period)`` with the smallest period.

    Every square ``w w`` is found by checking the element-wise condition
    ``seq[i + p] == seq[i]`` over its first half, then extended left and
    right while the period holds.
    """
    n = len(seq)
    best: dict[tuple[int, int], int] = {}
    for p in range(1, n // 2 + 1):
        for s in range(0, n - 2 * p + 1):
            if all(seq[i + p] == seq[i] for i in range(s, s + p)):
                lo, hi = s, s + 2 * p
                while lo > 0 and seq[lo - 1] == seq[lo - 1 + p]:
                    lo -= 1
                while hi < n and seq[hi] == seq[hi - p]:
                    hi += 1
                key = (lo, hi)
                best[key] = min(best.get(key, p), p)
    # an interval whose smallest period p also has a run of some multiple is one run
    return {(s, e, p) for (s, e), p in best.items()}


def brute_trailing(seq, min_count: int = 2):
    """``(unit, count)`` of the trailing repetition by direct scan, or None."""
    n = len(seq)
    best = None
    for p in range(1, n):
        length = p
        while length < n and seq[n - 1 - length] == seq[n - 1 - length + p]:
            length += 1
        count = length // p
        if count < max(2, min_count):
            continue
        # p must be the smallest period of its tail
        if any(_has_period(seq[n - length :], q) for q in range(1, p)):
            continue
        key = (p * count, p)
        if best is None or key >= best[0]:
            best = (key, (tuple(seq[n - p * count : n - p * (count - 1)]), count))
    return None if best is None else best[1]


def _has_period(seq, q: int) -> bool:
    return all(seq[i] == seq[i + q] for i in range(len(seq) - q))


def random_sequences(count: int = 1000, seed: int = 2024, max_len: int = 200):
    rng = random.Random(seed)
    for _ in range(count):
        k = rng.randint(2, 8)
        n = rng.randint(0, max_len)
        # mix in planted repeats so long runs occur
        seq: list[int] = []
        while len(seq) < n:
            if rng.random() < 0.3:
                unit = [rng.randrange(k) for _ in range(rng.randint(1, 6))]
                seq += unit * rng.randint(2, 5)
            else:
                seq.append(rng.randrange(k))
        yield seq[:n]
