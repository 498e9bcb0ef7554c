from __future__ import annotations

import io
import random
import tokenize

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpg.lexer import LexError, TokenAdapter, feed_token, lex, python_lexicon, split_token
from snippets import SNIPPETS, corpus

LEXICON = python_lexicon()


def reference(src: str) -> list[tuple[str, str]]:
    """Terminal types from the stdlib tokenizer, in this package's naming."""
    out = []
    for tok in tokenize.generate_tokens(io.StringIO(src).readline):
        if tok.type in (tokenize.NL, tokenize.COMMENT):
            continue
        if tok.type == tokenize.NAME:
            out.append(LEXICON.word_type(tok.string))
        elif tok.type == tokenize.OP:
            out.append(tok.string)
        else:
            out.append(tokenize.tok_name[tok.type])
    return out


def types(terms) -> list[str]:
    return [t.type for t in terms]


def test_single_statement():
    assert types(lex("pass\n")) == ["pass", "NEWLINE", "ENDMARKER"]


def test_indentation_matches_reference():
    src = "if x:\n    pass\n"
    got = types(lex(src))
    assert got == reference(src)
    assert got[-5:] == ["INDENT", "pass", "NEWLINE", "DEDENT", "ENDMARKER"]


def test_bracket_suppression():
    got = types(lex("x = [1,\n2]\n"))
    assert got == reference("x = [1,\n2]\n")
    assert got.count("NEWLINE") == 1


@pytest.mark.parametrize("src", SNIPPETS)
def test_snippets_match_reference_tokenizer(src):
    assert types(lex(src)) == reference(src)


def test_generated_programs_match_reference_tokenizer():
    for src in corpus(40, seed=99):
        assert types(lex(src)) == reference(src)


def test_spans_index_the_source():
    src = "def f(a, b=2):\n    return a ** b  # note\n"
    for t in lex(src):
        assert src[t.start : t.end] == t.text


@pytest.mark.parametrize(
    "src, fragment",
    [
        ("x = 'abc\n", "unterminated"),
        ("x = $\n", "illegal"),
        ("if x:\n        a\n    b\n", "unindent"),
    ],
)
def test_errors_carry_span(src, fragment):
    with pytest.raises(LexError) as err:
        lex(src)
    assert fragment in str(err.value).lower()
    assert 0 <= err.value.start <= len(src)


def test_tabs_expand_to_eight_columns():
    # a tab and eight spaces open the same block
    assert types(lex("if x:\n\ta = 1\n        b = 2\n")) == reference("if x:\n\ta = 1\n        b = 2\n")


def test_indent_dedent_balance():
    for src in SNIPPETS:
        got = types(lex(src))
        assert got.count("INDENT") == got.count("DEDENT")


def feed_all(pieces) -> list:
    adapter = TokenAdapter()
    out = []
    for p in pieces:
        out += feed_token(adapter, p)
    return out + adapter.flush()


def test_name_fragments_accumulate():
    got = feed_all(["fo", "obar", " ="])
    assert [(t.type, t.text) for t in got[:2]] == [("NAME", "foobar"), ("=", "=")]
    assert got == lex("foobar =")


def test_string_fragments_accumulate():
    adapter = TokenAdapter()
    assert feed_token(adapter, '"hel') == []
    assert adapter.mode == "accumulating"
    done = feed_token(adapter, 'lo"')
    assert [(t.type, t.text) for t in done] == [("STRING", '"hello"')]
    assert done + adapter.flush() == lex('"hello"')


def test_single_fragment_flushed():
    adapter = TokenAdapter()
    assert feed_token(adapter, "x") == []
    assert [(t.type, t.text) for t in adapter.flush()][:1] == [("NAME", "x")]


def test_split_brackets():
    got = split_token("[]", [{"["}, {"]", "NAME"}])
    assert [t.type for t in got] == ["[", "]"]


def test_split_close_comma():
    got = split_token("),", [{")"}, {","}])
    assert [t.type for t in got] == [")", ","]


def test_split_one_to_one():
    assert [t.type for t in split_token("pass", [{"pass"}])] == ["pass"]


def test_split_rejects_when_prefix_invalid():
    assert split_token("),", [{")"}, {"NAME"}]) is None


def test_split_backs_off_to_shorter_operator():
    # '**' is not acceptable but two '*' are
    got = split_token("**", [{"*"}, {"*"}])
    assert [t.type for t in got] == ["*", "*"]


def test_split_lexemes_cover_token_text():
    for token in ["[]", "),", "):", "()", "x.y", " []", "a,b"]:
        got = split_token(token, lambda prefix: {"[", "]", ")", ",", ":", "(", "NAME", "."})
        assert got is not None
        assert "".join(t.text for t in got) == token.replace(" ", "")
        for t in got:
            assert token[t.start : t.end] == t.text


SOURCES = SNIPPETS + corpus(30, seed=7)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(SOURCES), st.randoms(use_true_random=False))
def test_stream_equivalence(src, rnd):
    cuts = sorted(rnd.sample(range(1, len(src)), min(len(src) - 1, rnd.randint(0, 30))))
    pieces = [src[a:b] for a, b in zip([0] + cuts, cuts + [len(src)])]
    assert feed_all(pieces) == lex(src)


def test_stream_equivalence_single_characters():
    src = SNIPPETS[30]
    assert feed_all(list(src)) == lex(src)


def test_adapter_clone_is_independent():
    adapter = TokenAdapter()
    feed_token(adapter, "ab")
    twin = adapter.clone()
    feed_token(twin, "c ")
    assert adapter.buffer == "ab"
    assert [t.text for t in adapter.provisional()][:1] == ["ab"]
