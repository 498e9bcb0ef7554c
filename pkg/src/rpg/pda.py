"""Deterministic pushdown automaton over a grammar, and rule-label reduction.

Every rule is compiled to a DFA (EBNF -> NFA -> subset construction ->
state merging), in the style of CPython's pgen. The automaton's stack holds
one frame per active rule; a frame is ``(rule, dfa_state)`` plus the arc it
last took. Consuming a terminal yields a :class:`ReductionLabel`: the
element of the innermost statement-level rule that the terminal belongs
to, identified by that rule's DFA state and the element symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

from .grammar import (
    TERMINAL_CLASSES,
    Alt,
    Expr,
    GrammarError,
    GrammarSpec,
    Lit,
    Opt,
    Plus,
    Ref,
    Seq,
    Star,
    python_grammar,
    statement_classes,
)
from .lexer import Terminal

MODULE = "module"
_SHIFT = 0
_PUSH = 1


class PDAConstructionError(GrammarError):
    pass


class NoTransition(Exception):
    """The terminal cannot be consumed in the current configuration."""

    def __init__(self, terminal: str, expected: frozenset[str]):
        super().__init__(f"unexpected {terminal!r}; expected one of {sorted(expected)[:12]}")
        self.terminal = terminal
        self.expected = expected


@dataclass(frozen=True, order=True)
class ReductionLabel:
    """A consumed terminal's grammar-rule context ``(q, z)``.

    ``q`` is the statement-level rule and its DFA state, ``z`` the element
    (terminal or nonterminal) instantiated from that state. ``display`` is
    for humans only and takes no part in comparisons.
    """

    rule: str
    state: int
    element: str
    display: str = field(default="", compare=False)

    @property
    def q(self) -> tuple[str, int]:
        return (self.rule, self.state)

    @property
    def z(self) -> str:
        return self.element

    def __str__(self) -> str:
        return self.display or self.element


RAW = ReductionLabel("", -1, "<raw>", "<raw>")


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # left-factored | shift-preferred | conflict
    rule: str
    terminals: frozenset[str]
    message: str


# -- EBNF to DFA ----------------------------------------------------------------


class _NFA:
    def __init__(self) -> None:
        self.arcs: list[list[tuple[str | None, int]]] = []

    def new(self) -> int:
        self.arcs.append([])
        return len(self.arcs) - 1

    def build(self, expr: Expr) -> tuple[int, int]:
        if isinstance(expr, (Ref, Lit)):
            a, z = self.new(), self.new()
            self.arcs[a].append((expr.name if isinstance(expr, Ref) else expr.text, z))
            return a, z
        if isinstance(expr, Seq):
            a, z = self.build(expr.items[0])
            for item in expr.items[1:]:
                b, y = self.build(item)
                self.arcs[z].append((None, b))
                z = y
            return a, z
        if isinstance(expr, Alt):
            a, z = self.new(), self.new()
            for opt in expr.options:
                b, y = self.build(opt)
                self.arcs[a].append((None, b))
                self.arcs[y].append((None, z))
            return a, z
        a, z = self.build(expr.item)
        if isinstance(expr, (Star, Opt)):
            self.arcs[a].append((None, z))
        if isinstance(expr, (Star, Plus)):
            self.arcs[z].append((None, a))
        return a, z

    def closure(self, states: Iterable[int]) -> frozenset[int]:
        seen = set(states)
        todo = list(seen)
        while todo:
            s = todo.pop()
            for label, t in self.arcs[s]:
                if label is None and t not in seen:
                    seen.add(t)
                    todo.append(t)
        return frozenset(seen)


@dataclass
class DFAState:
    arcs: dict[str, int]
    final: bool


def _make_dfa(expr: Expr) -> list[DFAState]:
    nfa = _NFA()
    start, finish = nfa.build(expr)
    subsets = [nfa.closure([start])]
    index = {subsets[0]: 0}
    states: list[DFAState] = []
    i = 0
    while i < len(subsets):
        subset = subsets[i]
        moves: dict[str, set[int]] = {}
        for s in sorted(subset):
            for label, t in nfa.arcs[s]:
                if label is not None:
                    moves.setdefault(label, set()).add(t)
        arcs = {}
        for label, targets in moves.items():
            nxt = nfa.closure(targets)
            if nxt not in index:
                index[nxt] = len(subsets)
                subsets.append(nxt)
            arcs[label] = index[nxt]
        states.append(DFAState(arcs, finish in subset))
        i += 1
    return _simplify(states)


def _simplify(states: list[DFAState]) -> list[DFAState]:
    """Merge states with identical finality and arcs until none remain."""
    changed = True
    while changed:
        changed = False
        for i in range(len(states)):
            for j in range(i + 1, len(states)):
                if states[i].final == states[j].final and states[i].arcs == states[j].arcs:
                    del states[j]
                    for st in states:
                        for label, t in st.arcs.items():
                            if t == j:
                                st.arcs[label] = i
                            elif t > j:
                                st.arcs[label] = t - 1
                    changed = True
                    break
            if changed:
                break
    return states


# -- automaton ------------------------------------------------------------------


def _nullable(expr: Expr) -> bool:
    if isinstance(expr, (Opt, Star)):
        return True
    if isinstance(expr, Seq):
        return all(_nullable(i) for i in expr.items)
    if isinstance(expr, Alt):
        return any(_nullable(o) for o in expr.options)
    if isinstance(expr, Plus):
        return _nullable(expr.item)
    return False


class PDAConfig:
    """The compiled automaton for one grammar; immutable once built.

    In pushdown-automaton terms: states Q are ``(rule, dfa_state)`` pairs,
    the input alphabet is :attr:`terminals`, stack symbols are frames
    ``(rule, dfa_state)``, the initial state is ``(start, 0)`` over an empty
    stack bottom, and accepting states are the final DFA states of the
    start rule reached with nothing else on the stack.
    """

    def __init__(self, spec: GrammarSpec, anchors: Iterable[str] | None = None, strict: bool = False):
        self.spec = spec
        rules = spec.rules
        self.rule_names: list[str] = [p.lhs for p in spec.productions]
        self.rule_index = {name: i for i, name in enumerate(self.rule_names)}
        literals = {leaf for p in spec.productions for leaf in _literals(p.rhs)}
        clash = literals & set(rules)
        if clash:
            raise PDAConstructionError(f"literal and rule share a name: {sorted(clash)}")
        for p in spec.productions:
            if _nullable(p.rhs):
                raise PDAConstructionError(f"rule {p.lhs!r} derives the empty string")

        self.dfas = [_make_dfa(rules[name].rhs) for name in self.rule_names]
        for name, dfa in zip(self.rule_names, self.dfas):
            for st in dfa:
                for label in st.arcs:
                    if label not in rules and label not in TERMINAL_CLASSES and label not in literals:
                        raise PDAConstructionError(f"{name} references undefined symbol {label!r}")
        self.literals = frozenset(literals)
        self.first = self._first_sets()
        self.follow = self._follow_sets()
        self.diagnostics: list[Diagnostic] = []
        self._left_factoring_notes()
        self.tables: list[list[dict[str, tuple]]] = []
        self.keys: list[list[frozenset[str]]] = []
        self.finals: list[list[bool]] = []
        self.dead_ends: list[list[bool]] = []
        self._build_tables(strict)

        if anchors is None:
            try:
                simple, compound = statement_classes(spec)
                anchors = simple | compound
            except GrammarError:
                anchors = ()
        self.anchors = frozenset(a for a in anchors if a in self.rule_index)
        self.anchor_flags = [name in self.anchors for name in self.rule_names]
        self.start_index = self.rule_index[spec.start]
        self._labels: dict[tuple[int, int, str], ReductionLabel] = {}

    # -- seven-tuple view --

    @property
    def states(self) -> frozenset[tuple[str, int]]:
        return frozenset((n, s) for n, dfa in zip(self.rule_names, self.dfas) for s in range(len(dfa)))

    @property
    def terminals(self) -> frozenset[str]:
        return frozenset(k for row in self.keys for ks in row for k in ks)

    @property
    def initial_state(self) -> tuple[str, int]:
        return (self.spec.start, 0)

    @property
    def accepting(self) -> frozenset[tuple[str, int]]:
        dfa = self.dfas[self.start_index]
        return frozenset((self.spec.start, s) for s, st in enumerate(dfa) if st.final)

    def transition(self, state: tuple[str, int], terminal: str) -> tuple | None:
        """The table move for ``terminal`` from ``state``: ``("shift", target)``,
        ``("push", rule, target)``, or ``None`` (pop if final, else error)."""
        r = self.rule_index[state[0]]
        act = self.tables[r][state[1]].get(terminal)
        if act is None:
            return None
        if act[0] == _SHIFT:
            return ("shift", act[1])
        return ("push", self.rule_names[act[1]], act[2])

    # -- construction helpers --

    def _first_sets(self) -> dict[str, frozenset[str]]:
        first: dict[str, frozenset[str]] = {}
        busy: set[str] = set()

        def calc(name: str) -> frozenset[str]:
            if name in first:
                return first[name]
            if name in busy:
                raise PDAConstructionError(f"left recursion through {name!r}")
            busy.add(name)
            out: set[str] = set()
            for label in self.dfas[self.rule_index[name]][0].arcs:
                out |= calc(label) if label in self.rule_index else {label}
            busy.discard(name)
            first[name] = frozenset(out)
            return first[name]

        for name in self.rule_names:
            calc(name)
        return first

    def _label_first(self, label: str) -> frozenset[str]:
        return self.first[label] if label in self.rule_index else frozenset((label,))

    def _follow_sets(self) -> dict[str, set[str]]:
        follow: dict[str, set[str]] = {n: set() for n in self.rule_names}
        changed = True
        while changed:
            changed = False
            for name, dfa in zip(self.rule_names, self.dfas):
                for st in dfa:
                    for label, t in st.arcs.items():
                        if label not in self.rule_index:
                            continue
                        nxt = set()
                        for lab2 in dfa[t].arcs:
                            nxt |= self._label_first(lab2)
                        if dfa[t].final:
                            nxt |= follow[name]
                        if not nxt <= follow[label]:
                            follow[label] |= nxt
                            changed = True
        return follow

    def _expr_first(self, expr: Expr) -> set[str]:
        if isinstance(expr, Lit):
            return {expr.text}
        if isinstance(expr, Ref):
            return set(self._label_first(expr.name))
        if isinstance(expr, Seq):
            out: set[str] = set()
            for item in expr.items:
                out |= self._expr_first(item)
                if not _nullable(item):
                    break
            return out
        if isinstance(expr, Alt):
            return set().union(*(self._expr_first(o) for o in expr.options))
        return self._expr_first(expr.item)

    def _left_factoring_notes(self) -> None:
        def visit(rule: str, expr: Expr) -> None:
            if isinstance(expr, Alt):
                seen: set[str] = set()
                for opt in expr.options:
                    f = self._expr_first(opt)
                    overlap = f & seen
                    if overlap:
                        self.diagnostics.append(
                            Diagnostic(
                                "left-factored",
                                rule,
                                frozenset(overlap),
                                f"alternatives of {rule} share first terminals {sorted(overlap)}; "
                                "merged into one path, longest match preferred",
                            )
                        )
                    seen |= f
            for child in _children(expr):
                visit(rule, child)

        for p in self.spec.productions:
            visit(p.lhs, p.rhs)

    def _build_tables(self, strict: bool) -> None:
        for r, (name, dfa) in enumerate(zip(self.rule_names, self.dfas)):
            rows, keys, finals, dead = [], [], [], []
            for st in dfa:
                row: dict[str, tuple] = {}
                for label, t in st.arcs.items():
                    if label in self.rule_index:
                        act = (_PUSH, self.rule_index[label], t, label)
                        firsts = self.first[label]
                    else:
                        act = (_SHIFT, t, label)
                        firsts = frozenset((label,))
                    clash = firsts & row.keys()
                    if clash:
                        msg = f"{name}: arcs overlap on {sorted(clash)}; first arc kept"
                        if strict:
                            raise PDAConstructionError(msg)
                        self.diagnostics.append(Diagnostic("conflict", name, frozenset(clash), msg))
                    for term in firsts - clash:
                        row[term] = act
                if st.final and st.arcs:
                    overlap = row.keys() & self.follow[name]
                    if overlap:
                        self.diagnostics.append(
                            Diagnostic(
                                "shift-preferred",
                                name,
                                frozenset(overlap),
                                f"{name} may end or continue on {sorted(overlap)[:6]}; continuing",
                            )
                        )
                rows.append(row)
                keys.append(frozenset(row))
                finals.append(st.final)
                dead.append(st.final and not st.arcs)
            self.tables.append(rows)
            self.keys.append(keys)
            self.finals.append(finals)
            self.dead_ends.append(dead)

    def label(self, rule: int, state: int, element: str) -> ReductionLabel:
        key = (rule, state, element)
        lab = self._labels.get(key)
        if lab is None:
            display = element if element in self.rule_index or element in TERMINAL_CLASSES else f"'{element}'"
            lab = ReductionLabel(self.rule_names[rule], state, element, display)
            self._labels[key] = lab
        return lab

    def session(self) -> PDASession:
        return PDASession(self)


def _literals(expr: Expr) -> Iterable[str]:
    if isinstance(expr, Lit):
        yield expr.text
    for child in _children(expr):
        yield from _literals(child)


def _children(expr: Expr) -> tuple[Expr, ...]:
    if isinstance(expr, Seq):
        return expr.items
    if isinstance(expr, Alt):
        return expr.options
    if isinstance(expr, (Opt, Star, Plus)):
        return (expr.item,)
    return ()


def build_pda(spec: GrammarSpec, anchors: Iterable[str] | None = None, strict: bool = False) -> PDAConfig:
    """Compile ``spec`` into a deterministic automaton.

    ``anchors`` are the statement-level rules labels are attributed to; they
    default to the grammar's statement classes when it has them. With
    ``strict`` an irreducible arc overlap raises instead of being recorded.
    """
    return PDAConfig(spec, anchors, strict)


@lru_cache(maxsize=4)
def python_pda(start: str = "file_input") -> PDAConfig:
    return build_pda(python_grammar(start))


# -- running sessions -------------------------------------------------------------


class Frame(NamedTuple):
    rule: int
    state: int
    via_state: int
    via: str | None
    instance: int


class PDASession:
    """A live parse: a stack of frames, bottom first."""

    def __init__(self, config: PDAConfig):
        self.config = config
        self.stack: list[Frame] = [Frame(config.start_index, 0, -1, None, 0)]
        self.steps = 0
        self.accepted = False
        self._instances = 1
        self.last_statement: tuple[str, int] = (MODULE, 0)

    def clone(self) -> PDASession:
        other = PDASession.__new__(PDASession)
        other.__dict__.update(self.__dict__)
        other.stack = list(self.stack)
        return other

    @property
    def state(self) -> tuple[str, int] | None:
        if not self.stack:
            return None
        top = self.stack[-1]
        return (self.config.rule_names[top.rule], top.state)

    def step(self, terminal: Terminal | str) -> ReductionLabel:
        """Consume one terminal and return its reduction label.

        Raises :class:`NoTransition` (leaving the session untouched) when
        the terminal is impossible here.
        """
        t = terminal if isinstance(terminal, str) else terminal.type
        cfg = self.config
        stack = list(self.stack)
        instances = self._instances
        while True:
            if not stack:
                raise NoTransition(t, frozenset())
            top = stack[-1]
            act = cfg.tables[top.rule][top.state].get(t)
            if act is None:
                if cfg.finals[top.rule][top.state]:
                    stack.pop()
                    continue
                raise NoTransition(t, candidate_terminals(self))
            if act[0] == _PUSH:
                _, child, target, name = act
                stack[-1] = Frame(top.rule, target, top.state, name, top.instance)
                stack.append(Frame(child, 0, -1, None, instances))
                instances += 1
                continue
            stack[-1] = Frame(top.rule, act[1], top.state, t, top.instance)
            break

        anchor = stack[0]
        for frame in reversed(stack):
            if cfg.anchor_flags[frame.rule]:
                anchor = frame
                break
        label = cfg.label(anchor.rule, anchor.via_state, anchor.via)
        if cfg.anchor_flags[anchor.rule]:
            self.last_statement = (cfg.rule_names[anchor.rule], anchor.instance)
        else:
            self.last_statement = (MODULE, 0)

        while stack and cfg.dead_ends[stack[-1].rule][stack[-1].state]:
            stack.pop()
        self.stack = stack
        self._instances = instances
        self.steps += 1
        if not stack:
            self.accepted = True
        return label


def step(session: PDASession, terminal: Terminal | str) -> ReductionLabel:
    return session.step(terminal)


def candidate_terminals(session: PDASession) -> frozenset[str]:
    """Exactly the terminal types :meth:`PDASession.step` would accept."""
    cfg = session.config
    out: set[str] = set()
    for frame in reversed(session.stack):
        out |= cfg.keys[frame.rule][frame.state]
        if not cfg.finals[frame.rule][frame.state]:
            break
    return frozenset(out)


def is_accepting(session: PDASession) -> bool:
    """True when the parse is complete, or would be after ENDMARKER."""
    if session.accepted:
        return True
    cfg = session.config
    if session.stack and all(cfg.finals[f.rule][f.state] for f in session.stack):
        return True
    if "ENDMARKER" in candidate_terminals(session):
        probe = session.clone()
        probe.step("ENDMARKER")
        return probe.accepted or all(cfg.finals[f.rule][f.state] for f in probe.stack)
    return False


# -- reduction ----------------------------------------------------------------------


@dataclass(frozen=True)
class ReducedSequence:
    """Merged label sequence. ``origins[i]`` is the half-open range of
    consumed terminal indices covered by ``labels[i]``; ``statements[i]`` is
    the ``(statement class, instance id)`` the label was attributed to."""

    labels: tuple[ReductionLabel, ...]
    origins: tuple[tuple[int, int], ...] = ()
    statements: tuple[tuple[str, int], ...] = ()

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __getitem__(self, i):
        return self.labels[i]


def reduce_stream(
    labels: Sequence[ReductionLabel],
    statements: Sequence[tuple[str, int]] | None = None,
) -> ReducedSequence:
    """Collapse runs of equal adjacent labels."""
    if isinstance(labels, ReducedSequence):
        statements = labels.statements or None
        labels = labels.labels
    merged: list[ReductionLabel] = []
    origins: list[tuple[int, int]] = []
    stmts: list[tuple[str, int]] = []
    for i, lab in enumerate(labels):
        if merged and merged[-1] == lab:
            origins[-1] = (origins[-1][0], i + 1)
            continue
        merged.append(lab)
        origins.append((i, i + 1))
        if statements is not None:
            stmts.append(statements[i])
    return ReducedSequence(tuple(merged), tuple(origins), tuple(stmts))


class Reducer:
    """Feeds terminals through a session and keeps the merged sequence.

    On an impossible terminal the reducer switches to pass-through: the
    grammar state freezes, later terminals get the :data:`RAW` label, and
    :attr:`failed` records where it happened.
    """

    def __init__(self, config: PDAConfig):
        self.session = config.session()
        self.labels: list[ReductionLabel] = []
        self.origins: list[list[int]] = []
        self.statements: list[tuple[str, int]] = []
        self.count = 0
        self.failed: int | None = None

    def clone(self) -> Reducer:
        other = Reducer.__new__(Reducer)
        other.__dict__.update(self.__dict__)
        other.session = self.session.clone()
        other.labels = list(self.labels)
        other.origins = [list(o) for o in self.origins]
        other.statements = list(self.statements)
        return other

    def label_for(self, terminal: Terminal) -> tuple[ReductionLabel, tuple[str, int]]:
        if self.failed is None:
            try:
                lab = self.session.step(terminal)
                return lab, self.session.last_statement
            except NoTransition:
                self.failed = self.count
        return RAW, (MODULE, 0)

    def push(self, terminal: Terminal) -> ReductionLabel:
        lab, stmt = self.label_for(terminal)
        if self.labels and self.labels[-1] == lab:
            self.origins[-1][1] = self.count + 1
        else:
            self.labels.append(lab)
            self.origins.append([self.count, self.count + 1])
            self.statements.append(stmt)
        self.count += 1
        return lab

    def extend(self, terminals: Iterable[Terminal]) -> None:
        for t in terminals:
            self.push(t)

    @property
    def accepted(self) -> bool:
        return self.failed is None and is_accepting(self.session)

    def reduced(self) -> ReducedSequence:
        return ReducedSequence(tuple(self.labels), tuple(tuple(o) for o in self.origins), tuple(self.statements))


def reduce_terminals(terminals: Iterable[Terminal], config: PDAConfig | None = None) -> ReducedSequence:
    """Offline reduction; raises :class:`NoTransition` on a parse error,
    with the failing terminal index in ``exc.index``."""
    config = config or python_pda()
    session = config.session()
    labels, stmts = [], []
    for i, term in enumerate(terminals):
        try:
            labels.append(session.step(term))
        except NoTransition as exc:
            exc.index = i  # type: ignore[attr-defined]
            exc.offset = term.start if isinstance(term, Terminal) else None  # type: ignore[attr-defined]
            raise
        stmts.append(session.last_statement)
    return reduce_stream(labels, stmts)


def statement_projection(seq: ReducedSequence) -> list[tuple[str, int]]:
    """Statement-class instances in order of appearance, adjacent repeats of
    the same instance merged. Labels outside any statement are dropped."""
    out: list[tuple[str, int]] = []
    for stmt in seq.statements:
        if stmt[0] == MODULE:
            continue
        if not out or out[-1] != stmt:
            out.append(stmt)
    return out


def statement_instances(seq: ReducedSequence) -> list[tuple[str, tuple[ReductionLabel, ...]]]:
    """Each statement instance with its own merged label subsequence."""
    grouped: dict[tuple[str, int], list[ReductionLabel]] = {}
    for lab, stmt in zip(seq.labels, seq.statements):
        if stmt[0] == MODULE:
            continue
        labs = grouped.setdefault(stmt, [])
        if not labs or labs[-1] != lab:
            labs.append(lab)
    return [(stmt[0], tuple(labs)) for stmt, labs in grouped.items()]
