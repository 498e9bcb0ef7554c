"""Repetition-penalized decoding.

At each step the decoder reduces everything generated so far to its merged
label sequence, finds the repetition currently running at the end of that
sequence, and multiplies the probability of every candidate token that
would continue it by ``lambda ** count``.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import baselines
from .detector import RepetitionPattern, trailing_repetition
from .lexer import LexError, Lexicon, Terminal, TokenAdapter, python_lexicon
from .model import LanguageModel, ModelError, ScoredVocab, Vocab
from .pda import RAW, NoTransition, PDAConfig, PDASession, ReducedSequence, ReductionLabel, Reducer, python_pda


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 0.9
    min_count: int = 2
    mode: str = "argmax"
    eos_exempt: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie strictly between 0 and 1")
        if self.min_count < 2:
            raise ValueError("min_count must be at least 2")
        if self.mode not in ("argmax", "sample"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def name(self) -> str:
        return f"rpg:{self.lam:g}"


def penalty_factor(count: int, lam: float) -> float:
    if not 0 < lam < 1:
        raise ValueError("lambda must lie strictly between 0 and 1")
    if count < 0:
        raise ValueError("count must be non-negative")
    return lam**count


@dataclass(frozen=True)
class StepTrace:
    token: int
    count: int
    pn: float
    flipped: bool
    penalized: int = 0


@dataclass
class GenerationResult:
    tokens: list[int]
    text: str
    ended_with_eos: bool
    accepted: bool
    merged: ReducedSequence
    trace: list[StepTrace]
    prompt: list[int] = field(default_factory=list)
    prompt_text: str = ""
    wall_time: float = 0.0
    error: str | None = None

    @property
    def gen_len(self) -> int:
        return len(self.tokens)

    @property
    def code(self) -> str:
        return self.prompt_text + self.text


class DecodeSession:
    """Generation state: emitted tokens, the token adapter and the reducer.

    ``merged`` covers only terminals the adapter has committed; :meth:`view`
    adds the terminals still pending in the adapter's buffer, read as if the
    text ended there.
    """

    def __init__(self, vocab: Vocab, pda: PDAConfig | None = None, lexicon: Lexicon | None = None, budget: int = 1024):
        self.vocab = vocab
        self.pda = pda or python_pda()
        self.lexicon = lexicon or python_lexicon()
        self.adapter = TokenAdapter(self.lexicon)
        self.reducer = Reducer(self.pda)
        self.history: list[int] = []
        self.budget = budget
        self.lex_failed = False
        self._view: tuple[list[ReductionLabel], list[ReductionLabel]] | None = None

    @property
    def merged(self) -> ReducedSequence:
        return self.reducer.reduced()

    @property
    def pda_session(self) -> PDASession:
        return self.reducer.session

    def feed(self, token_id: int) -> None:
        self.history.append(token_id)
        self._view = None
        if token_id == self.vocab.eos_id or self.lex_failed:
            return
        try:
            terms = self.adapter.feed(self.vocab.text(token_id))
        except LexError:
            self.lex_failed = True
            if self.reducer.failed is None:
                self.reducer.failed = self.reducer.count
            return
        self.reducer.extend(terms)

    def finish(self) -> bool:
        """Flush the adapter; True if the whole text parses."""
        self._view = None
        if self.lex_failed:
            return False
        try:
            terms = self.adapter.flush()
        except LexError:
            return False
        self.reducer.extend(terms)
        return self.reducer.accepted

    def _tail_labels(self, terms: Iterable[Terminal]) -> list[ReductionLabel]:
        """Merged labels appended to the committed sequence by ``terms``."""
        last = self.reducer.labels[-1] if self.reducer.labels else None
        out: list[ReductionLabel] = []
        session = None if self.reducer.failed is not None else self.reducer.session.clone()
        for t in terms:
            lab = RAW
            if session is not None:
                try:
                    lab = session.step(t)
                except NoTransition:
                    session = None
            prev = out[-1] if out else last
            if lab != prev:
                out.append(lab)
        return out

    def view(self) -> tuple[list[ReductionLabel], list[ReductionLabel]]:
        """``(committed merged labels, labels of the pending buffer)``."""
        if self._view is None:
            pending: list[ReductionLabel] = []
            if not self.lex_failed:
                try:
                    pending = self._tail_labels(self.adapter.provisional())
                except LexError:
                    pending = []
            self._view = (self.reducer.labels, pending)
        return self._view

    def view_labels(self) -> list[ReductionLabel]:
        committed, pending = self.view()
        return committed + pending

    def tail_after(self, token_id: int) -> list[ReductionLabel] | None:
        """Pending-tail labels if ``token_id`` were emitted next (None if it cannot lex)."""
        if self.lex_failed:
            return None
        adapter = self.adapter.clone()
        try:
            terms = adapter.feed(self.vocab.text(token_id)) + adapter.provisional()
        except LexError:
            return None
        return self._tail_labels(terms)


def current_repetition(session: DecodeSession, min_count: int = 2) -> tuple[RepetitionPattern, int] | None:
    return trailing_repetition(session.view_labels(), min_count)


def _extends(session: DecodeSession, token_id: int, continuation: ReductionLabel) -> bool:
    pending = session.view()[1]
    tail = session.tail_after(token_id)
    if tail is None:
        return False
    k = len(pending)
    return len(tail) > k and tail[:k] == pending and tail[k] == continuation


def repetition_extending_tokens(
    session: DecodeSession,
    candidates: Iterable[int] | None = None,
    min_count: int = 2,
) -> tuple[set[int], int]:
    """Tokens whose emission would append the next label of the trailing
    repetition, and that repetition's occurrence count (0 when none is
    active). ``candidates`` defaults to the whole vocabulary."""
    found = current_repetition(session, min_count)
    if found is None:
        return set(), 0
    pattern, count = found
    labels = session.view_labels()
    continuation = labels[len(labels) - pattern.period]
    if candidates is None:
        candidates = range(len(session.vocab))
    eos = session.vocab.eos_id
    hits = {t for t in candidates if t != eos and _extends(session, t, continuation)}
    return hits, count


def adjust_scores(
    session: DecodeSession, scores: ScoredVocab, config: PenaltyConfig
) -> tuple[ScoredVocab, int, float, set[int]]:
    """Apply ``Pn = lambda ** count`` to the repetition-extending tokens.

    Returns the adjusted scores with the count, ``Pn`` and the penalized set.
    Sample mode renormalizes; argmax mode leaves the raw products.
    """
    live = [t for t, p in scores.entries.items() if p > 0]
    hits, count = repetition_extending_tokens(session, live, config.min_count)
    if count < config.min_count:
        return scores, count, 1.0, set()
    pn = penalty_factor(count, config.lam)
    if not config.eos_exempt and scores.eos_id in scores.entries:
        hits.add(scores.eos_id)
    entries = {t: (p * pn if t in hits else p) for t, p in scores.entries.items()}
    if config.mode == "sample":
        total = math.fsum(entries.values())
        entries = {t: p / total for t, p in entries.items()}
    return ScoredVocab(entries, scores.eos_id), count, pn, hits


def select_token(scores: ScoredVocab, config: PenaltyConfig, rng: random.Random | None = None) -> int:
    if not scores.entries:
        raise ValueError("empty vocabulary")
    if config.mode == "argmax":
        return baselines.greedy_select(scores.entries)
    return baselines.sample(scores.entries, rng or random.Random(config.seed))


Decoder = PenaltyConfig | baselines.SamplerConfig


def decode(
    model: LanguageModel,
    prompt: Sequence[int] = (),
    config: Decoder | None = None,
    budget: int = 1024,
    pda: PDAConfig | None = None,
    lexicon: Lexicon | None = None,
    trace_counts: bool = True,
) -> GenerationResult:
    """Generate up to ``budget`` new tokens (EOS included) after ``prompt``.

    ``config`` is a :class:`PenaltyConfig` for penalized decoding or a
    :class:`~rpg.baselines.SamplerConfig` for a reference sampler (default
    greedy). With a sampler, ``trace_counts`` still records the repetition
    count per step for diagnostics.
    """
    config = config or baselines.SamplerConfig()
    vocab = model.vocab
    session = DecodeSession(vocab, pda, lexicon, budget)
    for t in prompt:
        session.feed(t)
    rng = random.Random(config.seed)
    generated: list[int] = []
    trace: list[StepTrace] = []
    ended = False
    error = None
    start = time.perf_counter()
    while len(generated) < budget:
        try:
            scores = model(list(session.history))
            scores.validate()
        except ModelError as exc:
            error = str(exc)
            break
        if isinstance(config, PenaltyConfig):
            adjusted, count, pn, hits = adjust_scores(session, scores, config)
            token = select_token(adjusted, config, rng)
            base = baselines.greedy_select(scores.entries)
            flipped = token != base if config.mode == "argmax" else bool(hits and token not in hits)
        else:
            count = 0
            if trace_counts:
                found = current_repetition(session)
                count = found[1] if found else 0
            pn, hits, flipped = 1.0, set(), False
            token = config.select(scores.entries, session.history, rng)
        trace.append(StepTrace(token, count, pn, flipped, len(hits)))
        generated.append(token)
        session.feed(token)
        if token == vocab.eos_id:
            ended = True
            break
    accepted = session.finish()
    elapsed = time.perf_counter() - start
    return GenerationResult(
        tokens=generated,
        text=vocab.detokenize(generated),
        ended_with_eos=ended,
        accepted=accepted,
        merged=session.merged,
        trace=trace,
        prompt=list(prompt),
        prompt_text=vocab.detokenize(prompt),
        wall_time=elapsed,
        error=error,
    )
