"""Reference sampling strategies: greedy, temperature, top-k, top-p and the
CTRL-style penalty on previously generated tokens.

All transforms take and return ``{token_id: probability}`` mappings and are
pure. Ties are broken toward the lowest token id.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Collection, Mapping, Sequence

Dist = Mapping[int, float]


def _normalize(weights: dict[int, float]) -> dict[int, float]:
    total = math.fsum(weights.values())
    if total <= 0.0:
        raise ValueError("distribution has no probability mass")
    return {t: w / total for t, w in weights.items()}


def _ranked(scores: Dist) -> list[int]:
    return sorted(scores, key=lambda t: (-scores[t], t))


def greedy_select(scores: Dist) -> int:
    if not scores:
        raise ValueError("empty vocabulary")
    return min(scores, key=lambda t: (-scores[t], t))


def temperature_transform(scores: Dist, temperature: float) -> dict[int, float]:
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if temperature == 1.0:
        return _normalize(dict(scores))
    return _reweight(scores, lambda t: temperature)


def _reweight(scores: Dist, divisor) -> dict[int, float]:
    logs = {t: math.log(p) / divisor(t) for t, p in scores.items() if p > 0}
    if not logs:
        raise ValueError("distribution has no probability mass")
    top = max(logs.values())
    out = {t: 0.0 for t in scores}
    out.update({t: math.exp(v - top) for t, v in logs.items()})
    return _normalize(out)


def topk_filter(scores: Dist, k: int) -> dict[int, float]:
    if k < 1:
        raise ValueError("k must be at least 1")
    keep = set(_ranked(scores)[:k])
    return _normalize({t: (p if t in keep else 0.0) for t, p in scores.items()})


def topp_filter(scores: Dist, p: float) -> dict[int, float]:
    """Keep the smallest high-probability prefix whose mass reaches ``p``
    (the token that crosses ``p`` is included)."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if p == 1.0:
        return _normalize(dict(scores))
    keep = set()
    mass = 0.0
    for t in _ranked(scores):
        keep.add(t)
        mass += scores[t]
        if mass >= p:
            break
    return _normalize({t: (q if t in keep else 0.0) for t, q in scores.items()})


def ctrl_penalty_transform(
    scores: Dist, generated: Collection[int], theta: float, temperature: float = 1.0
) -> dict[int, float]:
    """``p'(w) ∝ exp(log p(w) / (T * I(w)))`` with ``I = theta`` for tokens
    already generated and 1 otherwise."""
    if theta < 1:
        raise ValueError("theta must be at least 1")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    seen = set(generated)
    return _reweight(scores, lambda t: temperature * (theta if t in seen else 1.0))


def sample(dist: Dist, rng: random.Random) -> int:
    """Inverse-CDF draw in ascending id order."""
    ids = sorted(t for t, p in dist.items() if p > 0)
    if not ids:
        raise ValueError("empty vocabulary")
    total = math.fsum(dist[t] for t in ids)
    u = rng.random() * total
    acc = 0.0
    for t in ids:
        acc += dist[t]
        if u < acc:
            return t
    return ids[-1]


KINDS = ("greedy", "temperature", "topk", "topp", "ctrl")


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "greedy"
    temperature: float = 1.0
    k: int = 1
    p: float = 1.0
    theta: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown sampler {self.kind!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.theta < 1:
            raise ValueError("theta must be at least 1")

    @property
    def name(self) -> str:
        return {
            "greedy": "greedy",
            "temperature": f"temp:{self.temperature:g}",
            "topk": f"topk:{self.k}",
            "topp": f"topp:{self.p:g}",
            "ctrl": f"ctrl:{self.theta:g}:{self.temperature:g}",
        }[self.kind]

    def transform(self, scores: Dist, history: Sequence[int]) -> dict[int, float]:
        if self.kind == "temperature":
            return temperature_transform(scores, self.temperature)
        if self.kind == "topk":
            return topk_filter(scores, self.k)
        if self.kind == "topp":
            return topp_filter(scores, self.p)
        if self.kind == "ctrl":
            return ctrl_penalty_transform(scores, history, self.theta, self.temperature)
        return dict(scores)

    def select(self, scores: Dist, history: Sequence[int], rng: random.Random) -> int:
        if self.kind == "greedy":
            return greedy_select(scores)
        return sample(self.transform(scores, history), rng)


def parse_sampler(text: str, seed: int = 0) -> SamplerConfig:
    """Parse ``greedy``, ``temp:T``, ``topk:K``, ``topp:P`` or ``ctrl:THETA[:T]``."""
    parts = text.split(":")
    head, args = parts[0], parts[1:]
    try:
        if head == "greedy" and not args:
            return SamplerConfig("greedy", seed=seed)
        if head in ("temp", "temperature") and len(args) == 1:
            return SamplerConfig("temperature", temperature=float(args[0]), seed=seed)
        if head == "topk" and len(args) == 1:
            return SamplerConfig("topk", k=int(args[0]), seed=seed)
        if head == "topp" and len(args) == 1:
            return SamplerConfig("topp", p=float(args[0]), seed=seed)
        if head == "ctrl" and len(args) in (1, 2):
            t = float(args[1]) if len(args) == 2 else 1.0
            return SamplerConfig("ctrl", theta=float(args[0]), temperature=t, seed=seed)
    except ValueError as exc:
        raise ValueError(f"bad sampler spec {text!r}: {exc}") from exc
    raise ValueError(f"unknown sampler spec {text!r}")
