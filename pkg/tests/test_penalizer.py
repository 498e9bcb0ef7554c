from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpg.baselines import SamplerConfig
from rpg.harness import _TRAP_TEXTS, elif_trap_model, repetition_free_model, trap_prompt, trap_vocab
from rpg.model import ModelError, ScoredVocab, Vocab
from rpg.penalizer import (
    DecodeSession,
    PenaltyConfig,
    adjust_scores,
    current_repetition,
    decode,
    penalty_factor,
    repetition_extending_tokens,
    select_token,
)

VOCAB = trap_vocab()
ELIF = VOCAB.id_of("elif")
ELSE = VOCAB.id_of("else")
EOS = VOCAB.eos_id


def session_after(units: int, vocab: Vocab = VOCAB) -> DecodeSession:
    s = DecodeSession(vocab)
    for t in trap_prompt(units):
        s.feed(vocab.id_of(VOCAB.text(t)))
    return s


def test_penalty_factor_examples():
    assert penalty_factor(0, 0.9) == 1.0
    assert penalty_factor(3, 0.9) == pytest.approx(0.729, abs=1e-12)
    assert penalty_factor(1, 0.5) == 0.5


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.1, 1.5])
def test_penalty_factor_rejects_lambda(lam):
    with pytest.raises(ValueError):
        penalty_factor(1, lam)
    with pytest.raises(ValueError):
        PenaltyConfig(lam=lam)


def test_config_invariants():
    with pytest.raises(ValueError):
        PenaltyConfig(min_count=1)
    with pytest.raises(ValueError):
        PenaltyConfig(mode="beam")


def test_elif_is_the_extending_token():
    hits, count = repetition_extending_tokens(session_after(2))
    assert count == 2
    assert hits == {ELIF}


def test_multi_terminal_token_starting_with_elif():
    vocab = Vocab(_TRAP_TEXTS + ("elif check", "el", "else:\n"), 0)
    hits, _ = repetition_extending_tokens(session_after(3, vocab))
    assert hits == {ELIF, vocab.id_of("elif check")}


def test_no_repetition_no_hits():
    assert repetition_extending_tokens(session_after(0)) == (set(), 0)
    assert repetition_extending_tokens(session_after(1)) == (set(), 0)


def test_pattern_is_the_elif_unit():
    pat, count = current_repetition(session_after(3))
    shown = [str(l) for l in pat.labels]
    assert count == 3
    assert shown[0] == "'elif'" and "namedexpr_test" in shown and "suite" in shown


def scores(anchor: float) -> ScoredVocab:
    return ScoredVocab({ELIF: anchor, ELSE: 1 - anchor}, EOS)


def test_adjust_flips_at_count_five():
    adj, count, pn, hits = adjust_scores(session_after(5), scores(0.6), PenaltyConfig(0.9))
    assert count == 5 and hits == {ELIF}
    assert adj.entries[ELIF] == pytest.approx(0.354294, abs=1e-12)
    assert select_token(adj, PenaltyConfig(0.9)) == ELSE


def test_adjust_keeps_anchor_at_count_two():
    adj, *_ = adjust_scores(session_after(2), scores(0.6), PenaltyConfig(0.9))
    assert adj.entries[ELIF] == pytest.approx(0.486, abs=1e-12)
    assert select_token(adj, PenaltyConfig(0.9)) == ELIF


def test_unchanged_without_repetition():
    sv = scores(0.6)
    adj, count, pn, hits = adjust_scores(session_after(1), sv, PenaltyConfig(0.9))
    assert adj is sv and pn == 1.0 and not hits


def test_flip_threshold_is_smallest_count():
    """0.6 * 0.9**k < 0.4 first holds at k = 4 (0.39366) and then for every larger k."""
    flips = [select_token(adjust_scores(session_after(k), scores(0.6), PenaltyConfig(0.9))[0], PenaltyConfig(0.9)) == ELSE for k in range(2, 9)]
    assert flips == [False, False, True, True, True, True, True]


@settings(max_examples=60, deadline=None)
@given(st.floats(0.3, 0.95), st.floats(0.5, 0.99), st.integers(2, 7))
def test_monotone_escape(anchor, lam, k):
    cfg = PenaltyConfig(lam)
    picked = select_token(adjust_scores(session_after(k), scores(anchor), cfg)[0], cfg)
    expected = ELSE if anchor * lam**k < 1 - anchor else ELIF
    if abs(anchor * lam**k - (1 - anchor)) > 1e-12:
        assert picked == expected


def test_eos_exempt_and_not():
    sv = ScoredVocab({ELIF: 0.5, EOS: 0.3, ELSE: 0.2}, EOS)
    adj, *_ = adjust_scores(session_after(3), sv, PenaltyConfig(0.9))
    assert adj.entries[EOS] == 0.3
    adj, *_ = adjust_scores(session_after(3), sv, PenaltyConfig(0.9, eos_exempt=False))
    assert adj.entries[EOS] == pytest.approx(0.3 * 0.729)


def test_sample_mode_renormalizes():
    adj, *_ = adjust_scores(session_after(3), scores(0.6), PenaltyConfig(0.9, mode="sample"))
    assert sum(adj.entries.values()) == pytest.approx(1.0)
    adj, *_ = adjust_scores(session_after(3), scores(0.6), PenaltyConfig(0.9))
    assert sum(adj.entries.values()) < 1.0


def test_select_tie_and_sampling():
    uniform = ScoredVocab({3: 0.25, 1: 0.25, 2: 0.25, 0: 0.25}, 0)
    assert select_token(uniform, PenaltyConfig()) == 0
    cfg = PenaltyConfig(mode="sample")
    a = [select_token(uniform, cfg, random.Random(5)) for _ in range(3)]
    b = [select_token(uniform, cfg, random.Random(5)) for _ in range(3)]
    assert a == b
    with pytest.raises(ValueError):
        select_token(ScoredVocab({}, 0), cfg)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_argmax_scale_invariance(c):
    s = session_after(4)
    base = scores(0.6)
    scaled = ScoredVocab({t: p * c for t, p in base.entries.items()}, EOS)
    cfg = PenaltyConfig(0.9)
    assert select_token(adjust_scores(s, base, cfg)[0], cfg) == select_token(adjust_scores(s, scaled, cfg)[0], cfg)


def test_greedy_loops_and_rpg_escapes():
    model = elif_trap_model()
    greedy = decode(model, trap_prompt(0), SamplerConfig(), budget=300)
    assert not greedy.ended_with_eos and greedy.gen_len == 300
    rpg = decode(model, trap_prompt(0), PenaltyConfig(0.9), budget=1024)
    assert rpg.ended_with_eos and rpg.tokens[-1] == EOS and rpg.gen_len < 1024
    assert rpg.accepted
    assert len(rpg.trace) == rpg.gen_len
    assert any(step.flipped for step in rpg.trace)


def test_trace_invariants():
    result = decode(elif_trap_model(), trap_prompt(0), PenaltyConfig(0.9, min_count=3), budget=1024)
    for step in result.trace:
        assert 0 < step.pn <= 1
        assert (step.pn == 1.0) == (step.count < 3)


def test_repetition_free_identical_to_greedy():
    model, script = repetition_free_model(0)
    greedy = decode(model, [], SamplerConfig(), budget=256)
    rpg = decode(model, [], PenaltyConfig(0.9), budget=256)
    assert greedy.tokens == rpg.tokens == script
    assert all(s.pn == 1.0 for s in rpg.trace)


def test_replay_determinism():
    cfg = PenaltyConfig(0.9, mode="sample", seed=11)
    a = decode(elif_trap_model(), trap_prompt(0), cfg, budget=200)
    b = decode(elif_trap_model(), trap_prompt(0), cfg, budget=200)
    assert a.tokens == b.tokens and a.trace == b.trace


def test_model_error_is_reported():
    class Broken:
        vocab = VOCAB

        def __call__(self, history):
            raise ModelError("down")

    result = decode(Broken(), [], PenaltyConfig())
    assert result.error == "down" and result.tokens == [] and not result.ended_with_eos


def test_invalid_distribution_is_reported():
    class Bad:
        vocab = VOCAB

        def __call__(self, history):
            return ScoredVocab({1: 0.5}, EOS)

    assert decode(Bad(), [], SamplerConfig()).error


def test_merged_consistent_with_replay():
    result = decode(elif_trap_model(), trap_prompt(0), PenaltyConfig(0.9), budget=1024)
    s = DecodeSession(VOCAB)
    for t in result.prompt + result.tokens:
        s.feed(t)
    assert s.finish() == result.accepted
    assert s.merged == result.merged
