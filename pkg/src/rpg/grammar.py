"""EBNF grammar files in the CPython ``Grammar/Grammar`` dialect.

A grammar file is a sequence of rules ``name: expression``. Continuation
lines are indented (or sit inside an open bracket), ``#`` starts a comment,
literals are single-quoted, and the expression operators are ``|``,
juxtaposition, ``[...]``, ``(...)``, ``*`` and ``+``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterator, Union

# Token classes produced by the lexer rather than spelled as literals.
TERMINAL_CLASSES = frozenset(
    {
        "NAME",
        "NUMBER",
        "STRING",
        "NEWLINE",
        "INDENT",
        "DEDENT",
        "ENDMARKER",
        "TYPE_COMMENT",
        "ASYNC",
        "AWAIT",
    }
)

DEFAULT_START = "file_input"

# Extra entry points of the shipped Python grammar. Only used for the
# reachability check; ``encoding_decl`` is documented there as unused.
PYTHON_ROOTS = ("file_input", "single_input", "eval_input", "func_type_input", "encoding_decl")


class GrammarError(Exception):
    """Raised for malformed grammar text."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f"{line}:{column}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass(frozen=True, order=True)
class Symbol:
    kind: str  # nonterminal | keyword | operator | class
    text: str

    @property
    def is_terminal(self) -> bool:
        return self.kind != "nonterminal"

    @property
    def key(self) -> str:
        """The name the lexer and the automaton use for this symbol."""
        return self.text


# Expression tree -----------------------------------------------------------


@dataclass(frozen=True)
class Ref:
    """A reference to a nonterminal or a terminal class (``NAME``)."""

    name: str


@dataclass(frozen=True)
class Lit:
    """A quoted literal, either a keyword or an operator."""

    text: str


@dataclass(frozen=True)
class Seq:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Alt:
    options: tuple["Expr", ...]


@dataclass(frozen=True)
class Opt:
    item: "Expr"


@dataclass(frozen=True)
class Star:
    item: "Expr"


@dataclass(frozen=True)
class Plus:
    item: "Expr"


Expr = Union[Ref, Lit, Seq, Alt, Opt, Star, Plus]


@dataclass(frozen=True)
class Production:
    lhs: str
    rhs: Expr
    line: int = field(default=0, compare=False)


def literal_kind(text: str) -> str:
    return "keyword" if re.fullmatch(r"[A-Za-z_]\w*", text) else "operator"


def iter_leaves(expr: Expr) -> Iterator[Ref | Lit]:
    if isinstance(expr, (Ref, Lit)):
        yield expr
    elif isinstance(expr, Seq):
        for item in expr.items:
            yield from iter_leaves(item)
    elif isinstance(expr, Alt):
        for item in expr.options:
            yield from iter_leaves(item)
    else:
        yield from iter_leaves(expr.item)


@dataclass(frozen=True)
class GrammarSpec:
    """A context-free grammar: nonterminals, terminals, productions, start."""

    productions: tuple[Production, ...]
    start: str = DEFAULT_START
    roots: tuple[str, ...] = ()
    rules: dict[str, Production] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", {p.lhs: p for p in self.productions})
        if self.start not in self.rules:
            raise GrammarError(f"start symbol {self.start!r} is not defined")

    @property
    def nonterminals(self) -> frozenset[Symbol]:
        return frozenset(Symbol("nonterminal", p.lhs) for p in self.productions)

    @property
    def terminals(self) -> frozenset[Symbol]:
        found = set()
        for prod in self.productions:
            for leaf in iter_leaves(prod.rhs):
                if isinstance(leaf, Lit):
                    found.add(Symbol(literal_kind(leaf.text), leaf.text))
                elif leaf.name in TERMINAL_CLASSES:
                    found.add(Symbol("class", leaf.name))
        return frozenset(found)

    @property
    def keywords(self) -> frozenset[str]:
        return frozenset(s.text for s in self.terminals if s.kind == "keyword")

    @property
    def operators(self) -> frozenset[str]:
        return frozenset(s.text for s in self.terminals if s.kind == "operator")

    @property
    def statement_classes(self) -> tuple[frozenset[str], frozenset[str]]:
        return statement_classes(self)

    def with_start(self, start: str) -> GrammarSpec:
        return GrammarSpec(self.productions, start=start, roots=self.roots)


# Parsing --------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\f]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\r?\n)
  | (?P<name>[A-Za-z_]\w*)
  | (?P<string>'(?:[^'\\\n]|\\.)*')
  | (?P<op>[:|\[\]()*+])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise GrammarError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            toks.append(_Tok("nl", "\n", line, pos - line_start + 1))
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("nl", "\n", line, pos - line_start + 1))
    return toks


def _split_rules(toks: list[_Tok]) -> list[list[_Tok]]:
    """Group tokens into rules; a rule starts at column 1 outside brackets."""
    rules: list[list[_Tok]] = []
    depth = 0
    opener: _Tok | None = None
    for tok in toks:
        if tok.kind == "nl":
            continue
        if tok.col == 1 and depth == 0:
            rules.append([])
        elif not rules:
            raise GrammarError("continuation line before any rule", tok.line, tok.col)
        if tok.text in "([" and tok.kind == "op":
            if depth == 0:
                opener = tok
            depth += 1
        elif tok.text in ")]" and tok.kind == "op":
            depth -= 1
            if depth < 0:
                raise GrammarError(f"unbalanced {tok.text!r}", tok.line, tok.col)
        rules[-1].append(tok)
    if depth > 0 and opener is not None:
        raise GrammarError(f"unbalanced {opener.text!r}", opener.line, opener.col)
    return rules


class _RuleParser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def expect(self, text: str) -> _Tok:
        tok = self.peek()
        if tok is None or tok.text != text or tok.kind != "op":
            where = tok or self.toks[-1]
            got = repr(tok.text) if tok else "end of rule"
            raise GrammarError(f"expected {text!r}, got {got}", where.line, where.col)
        self.i += 1
        return tok

    def parse_rule(self) -> Production:
        head = self.peek()
        if head is None or head.kind != "name":
            raise GrammarError("rule must start with a name", head.line if head else None, head.col if head else None)
        self.i += 1
        self.expect(":")
        rhs = self.parse_alt()
        tok = self.peek()
        if tok is not None:
            raise GrammarError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return Production(head.text, rhs, head.line)

    def parse_alt(self) -> Expr:
        options = [self.parse_seq()]
        while (tok := self.peek()) is not None and tok.kind == "op" and tok.text == "|":
            self.i += 1
            options.append(self.parse_seq())
        if len(options) == 1:
            return options[0]
        flat: list[Expr] = []
        for opt in options:
            flat.extend(opt.options if isinstance(opt, Alt) else (opt,))
        return Alt(tuple(flat))

    def parse_seq(self) -> Expr:
        items: list[Expr] = []
        while (tok := self.peek()) is not None and not (tok.kind == "op" and tok.text in "|)]"):
            item = self.parse_item()
            items.extend(item.items if isinstance(item, Seq) else (item,))
        if not items:
            where = self.peek() or self.toks[-1]
            raise GrammarError("empty alternative", where.line, where.col)
        return items[0] if len(items) == 1 else Seq(tuple(items))

    def parse_item(self) -> Expr:
        tok = self.peek()
        assert tok is not None
        if tok.kind == "op" and tok.text == "[":
            self.i += 1
            inner = self.parse_alt()
            self.expect("]")
            atom: Expr = Opt(inner)
        else:
            atom = self.parse_atom()
        nxt = self.peek()
        if nxt is not None and nxt.kind == "op" and nxt.text in "*+":
            self.i += 1
            return Star(atom) if nxt.text == "*" else Plus(atom)
        return atom

    def parse_atom(self) -> Expr:
        tok = self.peek()
        assert tok is not None
        self.i += 1
        if tok.kind == "name":
            return Ref(tok.text)
        if tok.kind == "string":
            text = tok.text[1:-1].encode().decode("unicode_escape")
            if not text:
                raise GrammarError("empty literal", tok.line, tok.col)
            return Lit(text)
        if tok.kind == "op" and tok.text == "(":
            inner = self.parse_alt()
            self.expect(")")
            return inner
        raise GrammarError(f"unexpected {tok.text!r}", tok.line, tok.col)


def parse_grammar(source_text: str, start: str = DEFAULT_START, roots: tuple[str, ...] = ()) -> GrammarSpec:
    """Parse grammar text into a :class:`GrammarSpec`.

    Raises :class:`GrammarError` with a line/column for syntax errors,
    duplicate rule names and unbalanced brackets.
    """
    productions: list[Production] = []
    seen: dict[str, int] = {}
    for rule_toks in _split_rules(_tokenize(source_text)):
        prod = _RuleParser(rule_toks).parse_rule()
        if prod.lhs in seen:
            raise GrammarError(
                f"duplicate definition of {prod.lhs!r} (first at line {seen[prod.lhs]})", prod.line, 1
            )
        seen[prod.lhs] = prod.line
        productions.append(prod)
    if not productions:
        raise GrammarError("grammar has no rules")
    return GrammarSpec(tuple(productions), start=start, roots=roots)


def load_grammar(path: str | Path, start: str = DEFAULT_START) -> GrammarSpec:
    return parse_grammar(Path(path).read_text(encoding="utf-8"), start=start)


@lru_cache(maxsize=8)
def python_grammar(start: str = DEFAULT_START) -> GrammarSpec:
    """The shipped Python grammar."""
    text = resources.files("rpg").joinpath("assets/python.gram").read_text(encoding="utf-8")
    return parse_grammar(text, start=start, roots=PYTHON_ROOTS)


# Serialization ---------------------------------------------------------------


def _fmt(expr: Expr, parent: str = "alt") -> str:
    if isinstance(expr, Ref):
        return expr.name
    if isinstance(expr, Lit):
        return "'" + expr.text.replace("\\", "\\\\").replace("'", "\\'") + "'"
    if isinstance(expr, Alt):
        body = " | ".join(_fmt(o, "alt") for o in expr.options)
        return body if parent == "alt" else f"({body})"
    if isinstance(expr, Seq):
        body = " ".join(_fmt(i, "seq") for i in expr.items)
        return body if parent in ("alt", "seq") else f"({body})"
    if isinstance(expr, Opt):
        return f"[{_fmt(expr.item)}]"
    suffix = "*" if isinstance(expr, Star) else "+"
    return _fmt(expr.item, "rep") + suffix


def serialize_grammar(spec: GrammarSpec) -> str:
    return "".join(f"{p.lhs}: {_fmt(p.rhs)}\n" for p in spec.productions)


# Validation ------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # undefined | unreachable | unproductive
    symbol: str
    message: str


def _children(expr: Expr) -> tuple[Expr, ...]:
    if isinstance(expr, Seq):
        return expr.items
    if isinstance(expr, Alt):
        return expr.options
    if isinstance(expr, (Opt, Star, Plus)):
        return (expr.item,)
    return ()


def _derives_terminals(expr: Expr, productive: set[str]) -> bool:
    if isinstance(expr, Lit):
        return True
    if isinstance(expr, Ref):
        return expr.name in TERMINAL_CLASSES or expr.name in productive
    if isinstance(expr, (Opt, Star)):
        return True
    if isinstance(expr, Plus):
        return _derives_terminals(expr.item, productive)
    if isinstance(expr, Seq):
        return all(_derives_terminals(i, productive) for i in expr.items)
    return any(_derives_terminals(o, productive) for o in _children(expr))


def _undefined(spec: GrammarSpec) -> list[Ref]:
    return [
        leaf
        for prod in spec.productions
        for leaf in iter_leaves(prod.rhs)
        if isinstance(leaf, Ref) and leaf.name not in spec.rules and leaf.name not in TERMINAL_CLASSES
    ]


def validate_grammar(spec: GrammarSpec, roots: tuple[str, ...] | None = None) -> list[Diagnostic]:
    """Check symbol closure, reachability from the roots, and productivity."""
    rules = spec.rules
    diags: list[Diagnostic] = []
    for prod in spec.productions:
        for leaf in iter_leaves(prod.rhs):
            if isinstance(leaf, Ref) and leaf.name not in rules and leaf.name not in TERMINAL_CLASSES:
                diags.append(Diagnostic("undefined", leaf.name, f"{prod.lhs} references undefined symbol {leaf.name}"))

    entry = [spec.start, *(roots if roots is not None else spec.roots)]
    reached: set[str] = set()
    todo = [r for r in entry if r in rules]
    while todo:
        name = todo.pop()
        if name in reached:
            continue
        reached.add(name)
        for leaf in iter_leaves(rules[name].rhs):
            if isinstance(leaf, Ref) and leaf.name in rules and leaf.name not in reached:
                todo.append(leaf.name)
    for prod in spec.productions:
        if prod.lhs not in reached:
            diags.append(Diagnostic("unreachable", prod.lhs, f"{prod.lhs} is not reachable from {spec.start}"))

    # undefined names are already reported; count them as productive so the
    # rules using them are not flagged a second time
    productive: set[str] = {leaf.name for leaf in _undefined(spec)}
    changed = True
    while changed:
        changed = False
        for prod in spec.productions:
            if prod.lhs not in productive and _derives_terminals(prod.rhs, productive):
                productive.add(prod.lhs)
                changed = True
    for prod in spec.productions:
        if prod.lhs not in productive:
            diags.append(Diagnostic("unproductive", prod.lhs, f"{prod.lhs} derives no terminal string"))
    return diags


# Statement classes -----------------------------------------------------------


def _alternative_names(expr: Expr, rule: str) -> list[str]:
    options = expr.options if isinstance(expr, Alt) else (expr,)
    names = []
    for opt in options:
        if not isinstance(opt, Ref):
            raise GrammarError(f"{rule} alternatives must be plain rule names")
        names.append(opt.name)
    return names


def statement_classes(spec: GrammarSpec) -> tuple[frozenset[str], frozenset[str]]:
    """Split statement-level nonterminals into (simple, compound).

    Simple statements are the alternatives of ``small_stmt`` with
    ``flow_stmt`` expanded into its members; compound statements are the
    alternatives of ``compound_stmt``.
    """
    rules = spec.rules
    for needed in ("small_stmt", "compound_stmt"):
        if needed not in rules:
            raise GrammarError(f"grammar has no {needed!r} rule")
    simple: list[str] = []
    for name in _alternative_names(rules["small_stmt"].rhs, "small_stmt"):
        if name == "flow_stmt" and "flow_stmt" in rules:
            simple.extend(_alternative_names(rules["flow_stmt"].rhs, "flow_stmt"))
        else:
            simple.append(name)
    compound = _alternative_names(rules["compound_stmt"].rhs, "compound_stmt")
    return frozenset(simple), frozenset(compound)
