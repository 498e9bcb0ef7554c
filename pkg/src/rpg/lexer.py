"""Python-style lexing into grammar terminals, whole-text or incremental.

``lex`` and ``TokenAdapter`` share one scanner. The scanner only commits a
terminal once no further input could change it, which is what makes feeding
arbitrary token pieces equivalent to lexing the joined text.
"""

from __future__ import annotations

import re
import tokenize
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Collection, NamedTuple, Sequence

from .grammar import GrammarSpec, python_grammar

TAB_SIZE = 8
STRING_PREFIXES = frozenset({"r", "u", "b", "f", "br", "rb", "fr", "rf"})
_QUOTES = "'\""
_NUMBER_RE = re.compile(tokenize.Number)
_NAME_TAIL_RE = re.compile(r"\w*")
_NUMBER_EXTENT_RE = re.compile(r"(?:[eE][+-]|[\w.])*")


class Terminal(NamedTuple):
    """A lexed terminal. ``type`` is the grammar symbol key: the literal text
    for keywords and operators, the class name (``NAME``, ``NEWLINE``, ...)
    otherwise. ``start``/``end`` are character offsets."""

    type: str
    text: str
    start: int
    end: int


class LexError(Exception):
    def __init__(self, message: str, start: int, end: int | None = None):
        super().__init__(f"{message} at offset {start}")
        self.start = start
        self.end = start if end is None else end
        self.span = (self.start, self.end)


@dataclass(frozen=True)
class Lexicon:
    """Keywords and operators recognized by the scanner."""

    keywords: frozenset[str]
    operators: frozenset[str]
    async_classes: bool = True

    @classmethod
    def from_grammar(cls, spec: GrammarSpec) -> Lexicon:
        classes = {s.text for s in spec.terminals if s.kind == "class"}
        return cls(spec.keywords, spec.operators, {"ASYNC", "AWAIT"} <= classes)

    def __post_init__(self) -> None:
        by_char: dict[str, tuple[str, ...]] = {}
        for op in self.operators:
            by_char.setdefault(op[0], ())
        for ch in by_char:
            by_char[ch] = tuple(sorted((o for o in self.operators if o[0] == ch), key=len, reverse=True))
        object.__setattr__(self, "_ops_by_char", by_char)

    def ops_at(self, ch: str) -> tuple[str, ...]:
        return self._ops_by_char.get(ch, ())  # type: ignore[attr-defined]

    def word_type(self, word: str) -> str:
        if word in self.keywords:
            return word
        if self.async_classes and word in ("async", "await"):
            return word.upper()
        return "NAME"


@lru_cache(maxsize=1)
def python_lexicon() -> Lexicon:
    return Lexicon.from_grammar(python_grammar())


class _NeedMore(Exception):
    pass


def _string_end(buf: str, q_start: int, final: bool) -> int:
    """Index just past the string literal whose opening quote is at ``q_start``."""
    n = len(buf)
    q = buf[q_start]
    head = buf[q_start : q_start + 3]
    if not final and len(head) < 3 and head == q * len(head):
        raise _NeedMore
    if head == q * 3:
        k = q_start + 3
        while True:
            if k >= n:
                if final:
                    raise LexError("unterminated triple-quoted string", q_start, n)
                raise _NeedMore
            ch = buf[k]
            if ch == "\\":
                k += 2
                continue
            if ch == q:
                tail = buf[k : k + 3]
                if tail == q * 3:
                    return k + 3
                if not final and tail == q * len(tail):
                    raise _NeedMore
            k += 1
    k = q_start + 1
    while True:
        if k >= n:
            if final:
                raise LexError("unterminated string", q_start, n)
            raise _NeedMore
        ch = buf[k]
        if ch == "\\":
            if k + 1 >= n and not final:
                raise _NeedMore
            k += 2
            continue
        if ch == q:
            return k + 1
        if ch in "\r\n":
            raise LexError("unterminated string", q_start, k)
        k += 1


class Scanner:
    """Incremental scanner with indentation tracking.

    ``feed`` returns the terminals completed so far; ``close`` drains the
    rest and appends the end-of-file NEWLINE, DEDENTs and ENDMARKER.
    """

    def __init__(self, lexicon: Lexicon | None = None):
        self.lexicon = lexicon or python_lexicon()
        self.buf = ""
        self.offset = 0
        self.indents = [0]
        self.depth = 0
        self.at_line_start = True
        self.line_has_content = False
        self.closed = False

    def clone(self) -> Scanner:
        other = Scanner.__new__(Scanner)
        other.__dict__.update(self.__dict__)
        other.indents = list(self.indents)
        return other

    def feed(self, text: str) -> list[Terminal]:
        if self.closed:
            raise LexError("scanner already closed", self.offset)
        self.buf += text
        return self._scan(final=False)

    def close(self) -> list[Terminal]:
        if self.closed:
            return []
        out = self._scan(final=True)
        end = self.offset
        if self.depth > 0:
            raise LexError("unexpected end of input inside brackets", end)
        if self.line_has_content:
            out.append(Terminal("NEWLINE", "", end, end))
            self.line_has_content = False
        while len(self.indents) > 1:
            self.indents.pop()
            out.append(Terminal("DEDENT", "", end, end))
        out.append(Terminal("ENDMARKER", "", end, end))
        self.closed = True
        return out

    def provisional(self) -> list[Terminal]:
        """Terminals the pending text would form if the next character
        ended the current lexeme. Does not change this scanner."""
        return self.clone()._scan(final=False, soft=True)

    # -- scanning -----------------------------------------------------------

    def _scan(self, final: bool, soft: bool = False) -> list[Terminal]:
        out: list[Terminal] = []
        buf = self.buf
        n = len(buf)
        i = 0
        lexeme_final = final or soft
        base = self.offset
        try:
            while i < n:
                if self.at_line_start:
                    i = self._line_start(buf, i, final, out)
                    continue
                c = buf[i]
                if c in " \t\f":
                    i += 1
                elif c == "#":
                    k = _find_eol(buf, i)
                    if k < 0:
                        if not final:
                            raise _NeedMore
                        k = n
                    i = k
                elif c == "\\":
                    if i + 1 >= n:
                        if not final:
                            raise _NeedMore
                        raise LexError("unexpected end of input after line continuation", base + i)
                    if buf[i + 1] == "\n":
                        i += 2
                    elif buf[i + 1] == "\r":
                        if i + 2 >= n and not final:
                            raise _NeedMore
                        i += 3 if buf.startswith("\r\n", i + 1) else 2
                    else:
                        raise LexError("unexpected character after line continuation", base + i, base + i + 2)
                elif c in "\r\n":
                    if c == "\r" and i + 1 >= n and not final:
                        raise _NeedMore
                    width = 2 if buf.startswith("\r\n", i) else 1
                    if self.depth == 0:
                        if self.line_has_content:
                            out.append(Terminal("NEWLINE", buf[i : i + width], base + i, base + i + width))
                            self.line_has_content = False
                        self.at_line_start = True
                    i += width
                elif c.isidentifier():
                    j = _NAME_TAIL_RE.match(buf, i + 1).end()
                    if j >= n and not lexeme_final:
                        raise _NeedMore
                    word = buf[i:j]
                    if j < n and buf[j] in _QUOTES and word.lower() in STRING_PREFIXES:
                        end = _string_end(buf, j, final)
                        self._emit(out, "STRING", buf, i, end)
                        i = end
                    else:
                        self._emit(out, self.lexicon.word_type(word), buf, i, j)
                        i = j
                elif c.isdigit() or (c == "." and i + 1 < n and buf[i + 1].isdigit()):
                    j = _NUMBER_EXTENT_RE.match(buf, i).end()
                    if j >= n and not lexeme_final:
                        raise _NeedMore
                    m = _NUMBER_RE.match(buf, i)
                    self._emit(out, "NUMBER", buf, i, m.end())
                    i = m.end()
                elif c in _QUOTES:
                    end = _string_end(buf, i, final)
                    self._emit(out, "STRING", buf, i, end)
                    i = end
                else:
                    ops = self.lexicon.ops_at(c)
                    if not lexeme_final:
                        rest = buf[i:]
                        if any(len(op) > len(rest) and op.startswith(rest) for op in ops):
                            raise _NeedMore
                        if c == "." and i + 1 >= n:
                            raise _NeedMore
                    op = next((o for o in ops if buf.startswith(o, i)), None)
                    if op is None:
                        raise LexError(f"illegal character {c!r}", base + i, base + i + 1)
                    if op in "([{":
                        self.depth += 1
                    elif op in ")]}" and self.depth > 0:
                        self.depth -= 1
                    self._emit(out, op, buf, i, i + len(op))
                    i += len(op)
        except _NeedMore:
            pass
        self.buf = buf[i:]
        self.offset = base + i
        return out

    def _emit(self, out: list[Terminal], kind: str, buf: str, i: int, j: int) -> None:
        out.append(Terminal(kind, buf[i:j], self.offset + i, self.offset + j))
        self.line_has_content = True

    def _line_start(self, buf: str, i: int, final: bool, out: list[Terminal]) -> int:
        """Measure indentation of a fresh logical line; returns the new index."""
        n = len(buf)
        j, col = i, 0
        while j < n and buf[j] in " \t\f":
            ch = buf[j]
            if ch == " ":
                col += 1
            elif ch == "\t":
                col = (col // TAB_SIZE + 1) * TAB_SIZE
            else:
                col = 0
            j += 1
        if j >= n:
            if not final:
                raise _NeedMore
            return n
        ch = buf[j]
        if ch == "#":
            k = _find_eol(buf, j)
            if k < 0:
                if not final:
                    raise _NeedMore
                return n
            j = k
            ch = buf[j]
        if ch in "\r\n":
            if ch == "\r" and j + 1 >= n and not final:
                raise _NeedMore
            return j + (2 if buf.startswith("\r\n", j) else 1)
        if ch == "\\":
            # an explicit continuation on an otherwise empty line
            self.at_line_start = False
            return j
        at = self.offset + j
        if col > self.indents[-1]:
            self.indents.append(col)
            out.append(Terminal("INDENT", buf[i:j], self.offset + i, at))
        else:
            while col < self.indents[-1]:
                self.indents.pop()
                out.append(Terminal("DEDENT", "", at, at))
            if col != self.indents[-1]:
                raise LexError("unindent does not match any outer indentation level", at)
        self.at_line_start = False
        return j


def _find_eol(buf: str, i: int) -> int:
    k = buf.find("\n", i)
    r = buf.find("\r", i)
    if r >= 0 and (k < 0 or r < k):
        return r
    return k


def lex(source: str, lexicon: Lexicon | None = None) -> list[Terminal]:
    """Lex a complete source text. The stream ends with ENDMARKER."""
    scanner = Scanner(lexicon)
    return scanner.feed(source) + scanner.close()


# Token adaptation -------------------------------------------------------------


class TokenAdapter:
    """Turns a stream of model tokens into complete grammar terminals.

    Token pieces that only form part of a NAME, NUMBER or STRING stay in
    :attr:`buffer` until a later piece (or :meth:`flush`) completes them;
    a single piece may also complete several terminals at once.
    """

    def __init__(self, lexicon: Lexicon | None = None):
        self.scanner = Scanner(lexicon)

    @property
    def buffer(self) -> str:
        return self.scanner.buf

    @property
    def mode(self) -> str:
        return "accumulating" if self.scanner.buf else "idle"

    @property
    def indent_stack(self) -> list[int]:
        return list(self.scanner.indents)

    @property
    def closed(self) -> bool:
        return self.scanner.closed

    def feed(self, token_text: str) -> list[Terminal]:
        return self.scanner.feed(token_text)

    def flush(self) -> list[Terminal]:
        return self.scanner.close()

    def provisional(self) -> list[Terminal]:
        return self.scanner.provisional()

    def clone(self) -> TokenAdapter:
        other = TokenAdapter.__new__(TokenAdapter)
        other.scanner = self.scanner.clone()
        return other


def feed_token(adapter: TokenAdapter, token_text: str) -> list[Terminal]:
    return adapter.feed(token_text)


Allowed = Callable[[Sequence[Terminal]], Collection[str]]


def _piece_options(text: str, i: int, lexicon: Lexicon) -> list[Terminal]:
    c = text[i]
    n = len(text)
    if c == "\n":
        return [Terminal("NEWLINE", "\n", i, i + 1)]
    if c.isidentifier():
        j = _NAME_TAIL_RE.match(text, i + 1).end()
        word = text[i:j]
        if j < n and text[j] in _QUOTES and word.lower() in STRING_PREFIXES:
            try:
                return [Terminal("STRING", text[i : _string_end(text, j, True)], i, _string_end(text, j, True))]
            except LexError:
                return []
        return [Terminal(lexicon.word_type(word), word, i, j)]
    if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
        m = _NUMBER_RE.match(text, i)
        return [Terminal("NUMBER", m.group(), i, m.end())]
    if c in _QUOTES:
        try:
            end = _string_end(text, i, True)
        except LexError:
            return []
        return [Terminal("STRING", text[i:end], i, end)]
    return [Terminal(op, op, i, i + len(op)) for op in lexicon.ops_at(c) if text.startswith(op, i)]


def split_token(
    token_text: str,
    allowed: Allowed | Sequence[Collection[str]],
    lexicon: Lexicon | None = None,
) -> list[Terminal] | None:
    """Decompose one model token into terminals accepted in sequence.

    ``allowed`` gives the acceptable terminal types after each prefix of the
    decomposition, either as a callable over the prefix or as a list of sets
    indexed by prefix length. Longer operators are tried first; shorter
    splits are used only when the longer one leads to a dead end. Returns
    ``None`` when no full decomposition is acceptable. Blanks are skipped
    and a newline may also be skipped when NEWLINE is not acceptable.
    """
    lexicon = lexicon or python_lexicon()
    if callable(allowed):
        allowed_fn = allowed
    else:
        sets = list(allowed)

        def allowed_fn(prefix: Sequence[Terminal]) -> Collection[str]:
            return sets[len(prefix)] if len(prefix) < len(sets) else ()

    def search(i: int, prefix: list[Terminal]) -> list[Terminal] | None:
        while i < len(token_text) and token_text[i] in " \t\f\r":
            i += 1
        if i == len(token_text):
            return prefix
        ok = allowed_fn(prefix)
        for term in _piece_options(token_text, i, lexicon):
            if term.type in ok:
                found = search(term.end, prefix + [term])
                if found is not None:
                    return found
        if token_text[i] == "\n":
            return search(i + 1, prefix)
        return None

    return search(0, [])
