"""Mock models and a scenario runner for comparing decoders at desk scale.

``ScriptedModel`` maps history suffixes to next-token distributions.
``SelfReinforcingModel`` wraps one and raises an anchor token's probability
with every earlier occurrence of that token, which traps greedy decoding in
a loop. The elif-trap builder scripts units of the form::

    elif check(x, N):
        y = [N]

after an ``if`` header, so the loop is structural (``N`` changes each time)
rather than a literal copy.
"""

from __future__ import annotations

import json
import operator
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .baselines import SamplerConfig, parse_sampler
from .detector import trailing_repetition
from .lexer import Lexicon, python_lexicon
from .metrics import MetricReport, format_records, format_table, summarize
from .model import ModelError, ScoredVocab, Vocab
from .pda import PDAConfig, python_pda
from .penalizer import DecodeSession, GenerationResult, PenaltyConfig, decode

EOS = "<eos>"
Dist = Mapping[int, float]
Rule = tuple[tuple[int | None, ...], "Dist | Callable[[Sequence[int]], Dist]"]


class ScriptedModel:
    """Next-token distributions chosen by the longest matching history suffix.

    A rule pattern is a tuple of token ids where ``None`` matches any token.
    The value is a distribution or a callable of the history returning one.
    Among equally long matches the first listed rule wins.
    """

    def __init__(self, vocab: Vocab, rules: Sequence[Rule], default: Dist | None = None):
        self.vocab = vocab
        self.rules = sorted(rules, key=lambda r: -len(r[0]))
        self.default = dict(default) if default is not None else {vocab.eos_id: 1.0}

    def distribution(self, history: Sequence[int]) -> dict[int, float]:
        for pattern, value in self.rules:
            k = len(pattern)
            if k > len(history):
                continue
            tail = history[len(history) - k :]
            if all(p is None or p == h for p, h in zip(pattern, tail)):
                return dict(value(history) if callable(value) else value)
        return dict(self.default)

    def __call__(self, history: Sequence[int]) -> ScoredVocab:
        dist = self.distribution(history)
        total = sum(dist.values())
        if total <= 0:
            raise ModelError("scripted distribution has no mass")
        return ScoredVocab({t: p / total for t, p in dist.items() if p > 0}, self.vocab.eos_id)


class SelfReinforcingModel:
    """Wrap ``base`` so that whenever it offers ``anchor``, the anchor's
    probability is ``min(cap, p0 * boost**r)`` with ``r`` the number of
    anchors already in the history, the rest rescaled to fill the remainder."""

    def __init__(self, base: ScriptedModel, anchor: int, boost: float, cap: float, p0: float | None = None):
        if boost <= 1:
            raise ValueError("boost must exceed 1")
        if not 0 < cap < 1:
            raise ValueError("cap must lie in (0, 1)")
        self.base = base
        self.vocab = base.vocab
        self.anchor = anchor
        self.boost = boost
        self.cap = cap
        self.p0 = p0

    def anchor_probability(self, repetitions: int, p0: float) -> float:
        return min(self.cap, p0 * self.boost**repetitions)

    def __call__(self, history: Sequence[int]) -> ScoredVocab:
        dist = self.base(history).entries
        if self.anchor not in dist:
            return ScoredVocab(dict(dist), self.vocab.eos_id)
        p0 = self.p0 if self.p0 is not None else dist[self.anchor]
        r = sum(1 for t in history if t == self.anchor)
        pa = self.anchor_probability(r, p0)
        rest = 1.0 - dist[self.anchor]
        out = {t: (p / rest) * (1.0 - pa) for t, p in dist.items() if t != self.anchor and rest > 0}
        out[self.anchor] = pa if rest > 0 else 1.0
        return ScoredVocab(out, self.vocab.eos_id)


# -- elif trap ----------------------------------------------------------------

_TRAP_TEXTS = (
    EOS, "x", " =", " 0", "\n", "if", "elif", "else", " check", "(", ",", "):", ":\n",
    "    ", "y", " [", "]", " []",
) + tuple(f" {d}" for d in range(10)) + tuple(str(d) for d in range(10))


def trap_vocab() -> Vocab:
    return Vocab(_TRAP_TEXTS, 0)


def elif_trap_model(
    p0: float = 0.5,
    boost: float = 1.05,
    cap: float = 0.75,
    eos_share: float = 0.7,
    after_else: str = "eos",
) -> SelfReinforcingModel:
    """The elif-trap model.

    At each unit boundary the base model offers ``elif`` (the anchor, base
    probability ``p0``), EOS and ``else`` in ratio ``eos_share : 1 -
    eos_share``. After an ``else`` branch it ends (``after_else="eos"``) or
    opens a fresh ``if`` chain (``"if"``), which keeps generation going
    forever when ``eos_share`` is 0.
    """
    vocab = trap_vocab()
    t = {text: i for i, text in enumerate(vocab.texts)}

    def number(history: Sequence[int]) -> int:
        opens = sum(1 for h in history if h in (t["if"], t["elif"]))
        return 10 + (opens - 1) % 90

    def tens(history):
        return {t[f" {number(history) // 10}"]: 1.0}

    def units(history):
        return {t[str(number(history) % 10)]: 1.0}

    def tens_bare(history):
        return {t[str(number(history) // 10)]: 1.0}

    boundary = {t["elif"]: p0, t[EOS]: eos_share * (1 - p0), t["else"]: (1 - eos_share) * (1 - p0)}
    rules: list[Rule] = [
        ((t["x"], t[" ="]), {t[" 0"]: 1.0}),
        ((t[" 0"],), {t["\n"]: 1.0}),
        ((t[" 0"], t["\n"]), {t["if"]: 1.0}),
        ((t["if"],), {t[" check"]: 1.0}),
        ((t["elif"],), {t[" check"]: 1.0}),
        ((t[" check"],), {t["("]: 1.0}),
        ((t["("],), {t["x"]: 1.0}),
        ((t["("], t["x"]), {t[","]: 1.0}),
        ((t[","],), tens),
        ((t[","], None), units),
        ((t[","], None, None), {t["):"]: 1.0}),
        ((t["):"],), {t["\n"]: 1.0}),
        ((t["):"], t["\n"]), {t["    "]: 1.0}),
        ((t["else"],), {t[":\n"]: 1.0}),
        ((t[":\n"],), {t["    "]: 1.0}),
        ((t["    "],), {t["y"]: 1.0}),
        ((t["y"],), {t[" ="]: 1.0}),
        ((t["y"], t[" ="]), {t[" ["]: 1.0}),
        ((t["else"], t[":\n"], t["    "], t["y"], t[" ="]), {t[" []"]: 1.0}),
        ((t[" ["],), tens_bare),
        ((t[" ["], None), units),
        ((t[" ["], None, None), {t["]"]: 1.0}),
        ((t["]"],), {t["\n"]: 1.0}),
        ((t["]"], t["\n"]), boundary),
        ((t[" []"],), {t["\n"]: 1.0}),
        ((t[" []"], t["\n"]), {t["if"]: 1.0} if after_else == "if" else {t[EOS]: 1.0}),
    ]
    base = ScriptedModel(vocab, rules, default={t[EOS]: 1.0})
    return SelfReinforcingModel(base, t["elif"], boost, cap, p0)


def trap_prompt(units: int = 0) -> list[int]:
    """``x = 0`` and an ``if`` header with its body, plus ``units`` elif arms."""
    vocab = trap_vocab()
    t = {text: i for i, text in enumerate(vocab.texts)}
    out = [t["x"], t[" ="], t[" 0"], t["\n"]]
    for u in range(units + 1):
        n = 10 + u
        head = t["if"] if u == 0 else t["elif"]
        out += [head, t[" check"], t["("], t["x"], t[","], t[f" {n // 10}"], t[str(n % 10)], t["):"], t["\n"]]
        out += [t["    "], t["y"], t[" ="], t[" ["], t[str(n // 10)], t[str(n % 10)], t["]"], t["\n"]]
    return out


# -- repetition-free programs ---------------------------------------------------

_PROGRAMS = (
    "import os\n"
    "def area(r, scale=2):\n"
    "    return r * r * scale\n"
    "class Box:\n"
    "    pass\n"
    "assert area(1) > 0, 'bad'\n",
    "from math import pi\n"
    "try:\n"
    "    del pi\n"
    "except NameError as e:\n"
    "    raise\n"
    "while False:\n"
    "    break\n",
    "global total\n"
    "with open('f') as h:\n"
    "    print(h.read())\n"
    "for k in range(3):\n"
    "    continue\n"
    "lambda q: q\n",
)


def _word_pieces(text: str) -> list[str]:
    """Word-level pieces: indentation alone, other blanks glued to the next
    piece, identifiers, numbers and strings whole, operators per character."""
    pieces: list[str] = []
    i, n = 0, len(text)
    while i < n:
        j = i
        while j < n and text[j] == " ":
            j += 1
        if j > i and (i == 0 or text[i - 1] == "\n"):
            pieces.append(text[i:j])
            i = j
            continue
        k = j
        if text[k].isalnum() or text[k] == "_":
            while k < n and (text[k].isalnum() or text[k] == "_"):
                k += 1
        elif text[k] in "'\"":
            k = text.index(text[k], k + 1) + 1
        else:
            k += 1
        pieces.append(text[i:k])
        i = k
    return pieces


def repetition_free_model(variant: int = 0, margin: float = 0.6, seed: int = 0) -> tuple[ScriptedModel, list[int]]:
    """A model that writes one fixed repetition-free program, giving the
    scripted next piece probability ``margin`` (jittered by ``seed``) and
    spreading the rest over a few distractors. Returns the model and the
    scripted token ids (program followed by EOS)."""
    text = _PROGRAMS[variant % len(_PROGRAMS)]
    pieces = _word_pieces(text)
    texts = [EOS] + sorted(set(pieces))
    vocab = Vocab(tuple(texts), 0)
    ids = [texts.index(p) for p in pieces] + [0]
    rng = random.Random(seed)
    rules: list[Rule] = []
    for pos, tok in enumerate(ids):
        # the full prefix makes each rule unique to its position
        pattern = tuple(ids[:pos])
        main = min(0.95, margin + rng.uniform(-0.05, 0.05))
        others = [o for o in rng.sample(range(len(texts)), 3) if o != tok][:2]
        dist = {tok: main}
        for o in others:
            dist[o] = (1 - main) / len(others)
        rules.append((pattern, dist))
    return ScriptedModel(vocab, rules), ids


# -- scenarios ------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    model: dict
    budget: int = 1024
    samplers: tuple[str, ...] = ("greedy", "rpg")
    seeds: tuple[int, ...] = (0,)
    lam: float = 0.9
    min_count: int = 2
    expect: tuple[dict, ...] = ()

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise ValueError("budget must be positive")


def build_model(spec: Mapping, seed: int = 0):
    """Instantiate a scenario model; returns ``(model, prompt token ids)``."""
    kind = spec.get("kind")
    if kind == "elif-trap":
        rng = random.Random(seed)
        jitter = float(spec.get("jitter", 0.0))
        p0 = float(spec.get("p0", 0.5)) + (rng.uniform(-jitter, jitter) if jitter else 0.0)
        model = elif_trap_model(
            p0=p0,
            boost=float(spec.get("boost", 1.05)),
            cap=float(spec.get("cap", 0.75)),
            eos_share=float(spec.get("eos_share", 0.7)),
            after_else=spec.get("after_else", "eos"),
        )
        return model, trap_prompt(int(spec.get("prompt_units", 0)))
    if kind == "repetition-free":
        model, _ = repetition_free_model(seed, float(spec.get("margin", 0.6)), seed)
        return model, []
    if kind == "scripted":
        texts = tuple(spec["vocab"])
        vocab = Vocab(texts, texts.index(spec.get("eos", EOS)))
        index = {s: i for i, s in enumerate(texts)}
        rules = [
            (tuple(None if p is None else index[p] for p in r["after"]), {index[k]: float(v) for k, v in r["next"].items()})
            for r in spec.get("rules", [])
        ]
        default = {index[k]: float(v) for k, v in spec["default"].items()} if "default" in spec else None
        model = ScriptedModel(vocab, rules, default)
        if "anchor" in spec:
            model = SelfReinforcingModel(model, index[spec["anchor"]], float(spec["boost"]), float(spec["cap"]))
        return model, [index[p] for p in spec.get("prompt", [])]
    raise ValueError(f"unknown model kind {kind!r}")


def decoder_for(name: str, scenario: Scenario, seed: int) -> PenaltyConfig | SamplerConfig:
    if name == "rpg" or name.startswith("rpg:"):
        lam = float(name.split(":", 1)[1]) if ":" in name else scenario.lam
        return PenaltyConfig(lam=lam, min_count=scenario.min_count, seed=seed)
    return parse_sampler(name, seed)


@dataclass
class SamplerRuns:
    name: str
    report: MetricReport | None
    runs: list[GenerationResult]
    errors: list[str] = field(default_factory=list)


@dataclass
class ScenarioReport:
    scenario: Scenario
    rows: list[SamplerRuns]

    def row(self, name: str) -> SamplerRuns:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def table(self) -> str:
        return format_table([(r.name, r.report) for r in self.rows if r.report is not None])

    def records(self) -> str:
        return format_records([(r.name, r.report) for r in self.rows if r.report is not None])


def _trace_record(seed: int, result: GenerationResult) -> dict:
    return {
        "seed": seed,
        "tokens": result.tokens,
        "text": result.text,
        "ended_with_eos": result.ended_with_eos,
        "accepted": result.accepted,
        "error": result.error,
        "merged": [str(x) for x in result.merged.labels],
        "trace": [[s.token, s.count, s.pn, s.flipped] for s in result.trace],
    }


def run_scenario(
    scenario: Scenario,
    out_dir: str | Path | None = None,
    samplers: Sequence[str] | None = None,
    pda: PDAConfig | None = None,
    n: int = 4,
    lexicon: Lexicon | None = None,
    model_factory: Callable[[Mapping, int], tuple] | None = None,
) -> ScenarioReport:
    """Decode every seed with every sampler and summarize each sampler."""
    pda = pda or python_pda()
    names = list(samplers or scenario.samplers)
    for name in names:
        decoder_for(name, scenario, 0)  # reject bad specs before any work
    rows = []
    for name in names:
        runs, errors = [], []
        for seed in scenario.seeds:
            try:
                model, prompt = (model_factory or build_model)(scenario.model, seed)
                decoder = decoder_for(name, scenario, seed)
                result = decode(model, prompt, decoder, scenario.budget, pda, lexicon)
            except Exception as exc:  # one failed run must not sink the scenario
                errors.append(f"seed {seed}: {exc}")
                continue
            if result.error:
                errors.append(f"seed {seed}: {result.error}")
            runs.append((seed, result))
        report = summarize([r for _, r in runs], n) if runs else None
        rows.append(SamplerRuns(name, report, [r for _, r in runs], errors))
        if out_dir is not None:
            target = Path(out_dir) / scenario.name / name.replace(":", "_")
            target.mkdir(parents=True, exist_ok=True)
            for seed, result in runs:
                (target / f"seed-{seed}.json").write_text(json.dumps(_trace_record(seed, result)))
    report = ScenarioReport(scenario, rows)
    if out_dir is not None:
        base = Path(out_dir) / scenario.name
        base.mkdir(parents=True, exist_ok=True)
        (base / "report.json").write_text(report.records())
        (base / "report.txt").write_text(report.table() + "\n")
    return report


def lambda_sweep(scenario: Scenario, lambdas: Sequence[float], **kwargs) -> list[tuple[float, MetricReport]]:
    """One penalized-decoding report per decay factor."""
    for lam in lambdas:
        if not 0 < lam < 1:
            raise ValueError(f"lambda {lam} outside (0, 1)")
    rows = []
    for lam in lambdas:
        rep = run_scenario(replace(scenario, lam=lam), samplers=["rpg"], **kwargs)
        rows.append((lam, rep.rows[0].report))
    return rows


def prompt_repetition_count(scenario: Scenario, seed: int = 0, pda: PDAConfig | None = None) -> int:
    """Occurrence count of the trailing repetition in the prompt alone."""
    model, prompt = build_model(scenario.model, seed)
    session = DecodeSession(model.vocab, pda or python_pda(), python_lexicon())
    for t in prompt:
        session.feed(t)
    found = trailing_repetition(session.view_labels())
    return found[1] if found else 0


# -- expectations ---------------------------------------------------------------

_OPS = {"identical": operator.eq, "==": operator.eq, "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


def _metric_of(result: GenerationResult, metric: str) -> float:
    from .metrics import statement_shapes, tr_n, tr_s

    if metric == "egp":
        return float(result.ended_with_eos)
    if metric == "ccp":
        return float(result.accepted)
    if metric == "gen_len":
        return float(result.gen_len)
    if metric == "tr_n":
        return tr_n(result.merged)
    if metric == "tr_s":
        return tr_s(statement_shapes(result.merged))
    raise ValueError(f"unknown per-run metric {metric!r}")


def check_expectations(report: ScenarioReport) -> list[tuple[str, bool]]:
    """Evaluate the scenario's predicates. Each predicate names a sampler,
    a metric, an operator and either a number or another sampler's metric
    (``{"sampler": ..., "metric": ...}``). Op ``identical`` requires the
    same token trajectory as the named sampler on every seed. With ``"per_seed": true`` the
    comparison must hold for every seed's run; ``"budget"`` as a value
    stands for the scenario budget."""
    out = []
    for pred in report.scenario.expect:
        name, metric, op = pred["sampler"], pred["metric"], _OPS[pred["op"]]
        value = pred["value"]
        desc = f"{name}.{metric} {pred['op']} {value if not isinstance(value, dict) else value['sampler'] + '.' + value.get('metric', metric)}"
        row = report.row(name)
        if pred["op"] == "identical":
            other = report.row(value["sampler"])
            ok = len(row.runs) == len(other.runs) and all(a.tokens == b.tokens for a, b in zip(row.runs, other.runs))
        elif pred.get("per_seed"):
            if isinstance(value, dict):
                other = report.row(value["sampler"])
                m2 = value.get("metric", metric)
                pairs = [(_metric_of(a, metric), _metric_of(b, m2)) for a, b in zip(row.runs, other.runs)]
                ok = len(row.runs) == len(other.runs) and all(op(x, y) for x, y in pairs)
            else:
                target = report.scenario.budget if value == "budget" else float(value)
                ok = all(op(_metric_of(r, metric), target) for r in row.runs)
        else:
            left = getattr(row.report, metric)
            if isinstance(value, dict):
                right = getattr(report.row(value["sampler"]).report, value.get("metric", metric))
            else:
                right = report.scenario.budget if value == "budget" else float(value)
            ok = op(left, right)
        out.append((desc, bool(ok) and not row.errors))
    return out


def scenario_from_dict(data: Mapping) -> Scenario:
    seeds = data.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    return Scenario(
        name=data["name"],
        model=dict(data["model"]),
        budget=int(data.get("budget", 1024)),
        samplers=tuple(data.get("samplers", ("greedy", "rpg"))),
        seeds=tuple(int(s) for s in seeds),
        lam=float(data.get("lambda", 0.9)),
        min_count=int(data.get("min_count", 2)),
        expect=tuple(data.get("expect", ())),
    )


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def builtin_scenario(name: str) -> Scenario:
    ref = resources.files("rpg") / "assets" / "scenarios" / f"{name}.json"
    return scenario_from_dict(json.loads(ref.read_text()))


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    prompt_text: str
    reference_text: str | None = None


class CorpusError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def load_corpus(path: str | Path) -> list[CorpusRecord]:
    """Read JSON-lines records ``{id, prompt_text, reference_text?}``; blank lines are skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(rec, dict):
                raise CorpusError("record is not an object", lineno)
            if not isinstance(rec.get("prompt_text"), str):
                raise CorpusError("missing prompt_text", lineno)
            ref = rec.get("reference_text")
            if ref is not None and not isinstance(ref, str):
                raise CorpusError("reference_text is not a string", lineno)
            out.append(CorpusRecord(str(rec.get("id", lineno)), rec["prompt_text"], ref))
    return out
