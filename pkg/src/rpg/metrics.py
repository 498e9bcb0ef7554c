"""Generation metrics: EGP, TR-N, TR-S, CCP, GenLen, wall time and pass@k."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Hashable, Iterable, Protocol, Sequence

from .pda import ReducedSequence, statement_instances


class _Result(Protocol):
    ended_with_eos: bool
    accepted: bool
    merged: ReducedSequence
    wall_time: float

    @property
    def gen_len(self) -> int: ...


def _nonempty(results) -> list:
    items = list(results)
    if not items:
        raise ValueError("no results")
    return items


def egp(results: Iterable[_Result]) -> float:
    """Fraction of generations that ended with the end-of-sequence token."""
    items = _nonempty(results)
    return sum(1 for r in items if r.ended_with_eos) / len(items)


def ccp(results: Iterable[_Result]) -> float:
    """Fraction of outputs the grammar engine accepts."""
    items = _nonempty(results)
    return sum(1 for r in items if r.accepted) / len(items)


def gen_len(results: Iterable[_Result]) -> float:
    items = _nonempty(results)
    return sum(r.gen_len for r in items) / len(items)


def wall_time(results: Iterable[_Result]) -> float:
    items = _nonempty(results)
    return math.fsum(r.wall_time for r in items) / len(items)


def tr_n_checked(seq: Sequence[Hashable], n: int = 4) -> tuple[float, bool]:
    """``(rate, defined)``; sequences shorter than ``n`` give ``(0.0, False)``."""
    if n < 1:
        raise ValueError("n must be positive")
    labels = seq.labels if isinstance(seq, ReducedSequence) else tuple(seq)
    total = len(labels) - n + 1
    if total <= 0:
        return 0.0, False
    unique = len({tuple(labels[i : i + n]) for i in range(total)})
    return 1.0 - unique / total, True


def tr_n(seq: Sequence[Hashable], n: int = 4) -> float:
    """Duplicate n-gram rate ``1 - |unique n-grams| / (len - n + 1)``."""
    return tr_n_checked(seq, n)[0]


def tr_s(statements: Sequence[Hashable]) -> float:
    """Duplicate statement rate ``1 - unique / total``; instances compare by value."""
    items = list(statements)
    if not items:
        return 0.0
    return 1.0 - len(set(items)) / len(items)


def statement_shapes(seq: ReducedSequence) -> list[tuple]:
    """Statement instances of a reduction as comparable ``(class, labels)`` values."""
    return [(cls, labels) for cls, labels in statement_instances(seq)]


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k, ``1 - C(n-c, k) / C(n, k)``, as a running product."""
    if not (0 <= c <= n and 1 <= k <= n):
        raise ValueError("need 0 <= c <= n and 1 <= k <= n")
    if n - c < k:
        return 1.0
    prod = 1.0
    for i in range(n - c + 1, n + 1):
        prod *= 1.0 - k / i
    return 1.0 - prod


@dataclass(frozen=True)
class MetricReport:
    egp: float | None
    tr_n: float
    n: int
    tr_s: float
    ccp: float
    gen_len_mean: float
    wall_time_mean_seconds: float | None
    sample_count: int
    tr_n_undefined: int = 0

    def to_record(self) -> dict:
        return asdict(self)


def summarize(results: Iterable[_Result], n: int = 4) -> MetricReport:
    """Aggregate report; TR-N and TR-S are per-sample rates averaged."""
    items = _nonempty(results)
    trn = [tr_n_checked(r.merged, n) for r in items]
    trs = [tr_s(statement_shapes(r.merged)) for r in items]
    return MetricReport(
        egp=egp(items),
        tr_n=math.fsum(v for v, _ in trn) / len(items),
        n=n,
        tr_s=math.fsum(trs) / len(items),
        ccp=ccp(items),
        gen_len_mean=gen_len(items),
        wall_time_mean_seconds=wall_time(items),
        sample_count=len(items),
        tr_n_undefined=sum(1 for _, ok in trn if not ok),
    )


COLUMNS = ("EGP", "TR-N", "TR-S", "CCP", "Time", "GenLen")


def _fmt(v: float | None, digits: int = 3) -> str:
    return "-" if v is None else f"{v:.{digits}f}"


def format_table(rows: Sequence[tuple[str, MetricReport]]) -> str:
    """Aligned text table, one row per named report."""
    header = ("method",) + COLUMNS + ("N",)
    body = [
        (
            name,
            _fmt(r.egp),
            _fmt(r.tr_n),
            _fmt(r.tr_s),
            _fmt(r.ccp),
            _fmt(r.wall_time_mean_seconds, 4),
            f"{r.gen_len_mean:.1f}",
            str(r.sample_count),
        )
        for name, r in rows
    ]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))) for row in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def format_records(rows: Sequence[tuple[str, MetricReport]]) -> str:
    return json.dumps([{"method": name, **r.to_record()} for name, r in rows], indent=2)
