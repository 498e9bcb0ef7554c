"""Command-line interface: ``rpg reduce | detect | metrics | simulate``.

Exit codes: 0 success (or nothing found), 1 repetition found or a scenario
expectation failed, 2 parse failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .detector import find_consecutive_repetitions
from .grammar import DEFAULT_START, GrammarError, load_grammar, python_grammar
from .harness import (
    CorpusError,
    builtin_scenario,
    check_expectations,
    lambda_sweep,
    load_corpus,
    load_scenario,
    run_scenario,
)
from .lexer import LexError, Lexicon, lex, python_lexicon
from .metrics import MetricReport, format_records, format_table, statement_shapes, tr_n_checked, tr_s
from .model import PipeModel, Vocab
from .pda import NoTransition, PDAConfig, Reducer, build_pda, python_pda, reduce_terminals

EXIT_OK, EXIT_FOUND, EXIT_PARSE, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _engine(args) -> tuple[PDAConfig, Lexicon]:
    path = args.grammar or os.environ.get("RPG_GRAMMAR")
    try:
        if path:
            if not Path(path).is_file():
                raise UsageError(f"grammar file not found: {path}")
            spec = load_grammar(path, args.start)
            return build_pda(spec), Lexicon.from_grammar(spec)
        if args.start != DEFAULT_START:
            return build_pda(python_grammar(args.start)), python_lexicon()
        return python_pda(), python_lexicon()
    except GrammarError as exc:
        raise UsageError(f"grammar: {exc}") from exc


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {path}")
    return p.read_text(encoding="utf-8")


def _line_col(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _reduce_file(args, out) -> tuple[object, str] | int:
    text = _read(args.file)
    pda, lexicon = _engine(args)
    try:
        terms = lex(text, lexicon)
        return reduce_terminals(terms, pda), text
    except LexError as exc:
        line, col = _line_col(text, exc.start)
        print(f"{args.file}:{line}:{col}: offset {exc.start}: lexical error: {exc}", file=sys.stderr)
    except NoTransition as exc:
        offset = getattr(exc, "offset", None) or 0
        line, col = _line_col(text, offset)
        print(f"{args.file}:{line}:{col}: offset {offset}: syntax error: {exc}", file=sys.stderr)
    return EXIT_PARSE


def cmd_reduce(args, out=None) -> int:
    out = out or sys.stdout
    got = _reduce_file(args, out)
    if isinstance(got, int):
        return got
    seq, _ = got
    if args.format == "structured":
        recs = [{"label": str(lab), "rule": lab.rule, "state": lab.state, "tokens": list(o)} for lab, o in zip(seq.labels, seq.origins)]
        print(json.dumps({"labels": recs, "accepted": True}, indent=2), file=out)
    else:
        for lab, (a, b) in zip(seq.labels, seq.origins):
            print(f"{lab}\t{a}-{b}", file=out)
    return EXIT_OK


def cmd_detect(args, out=None) -> int:
    out = out or sys.stdout
    got = _reduce_file(args, out)
    if isinstance(got, int):
        return got
    seq, _ = got
    found = find_consecutive_repetitions(seq.labels)
    if args.format == "structured":
        recs = []
        for pat in found:
            rec = pat.to_record()
            rec["tokens"] = [seq.origins[pat.start][0], seq.origins[pat.end - 1][1]]
            recs.append(rec)
        print(json.dumps(recs, indent=2), file=out)
    else:
        for pat in found:
            a, b = seq.origins[pat.start][0], seq.origins[pat.end - 1][1]
            unit = " ".join(str(x) for x in pat.labels)
            print(f"period={pat.period} count={pat.count} start={pat.start} trailing={pat.trailing} tokens={a}-{b}\t{unit}", file=out)
    return EXIT_FOUND if found else EXIT_OK


def cmd_metrics(args, out=None) -> int:
    out = out or sys.stdout
    path = Path(args.corpus)
    if not path.is_file():
        raise UsageError(f"corpus not found: {args.corpus}")
    try:
        records = load_corpus(path)
    except CorpusError as exc:
        raise UsageError(f"{args.corpus}: {exc}") from exc
    if not records:
        raise UsageError("corpus is empty")
    pda, lexicon = _engine(args)
    rows = []
    for rec in records:
        code = rec.prompt_text + (rec.reference_text or "")
        reducer = Reducer(pda)
        accepted = False
        count = 0
        try:
            terms = lex(code, lexicon)
            reducer.extend(terms)
            count = len(terms)
            accepted = reducer.accepted
        except LexError:
            pass
        seq = reducer.reduced()
        trn, defined = tr_n_checked(seq, args.n)
        rows.append((rec.id, accepted, trn, defined, tr_s(statement_shapes(seq)), count))
    report = MetricReport(
        egp=None,
        tr_n=sum(r[2] for r in rows) / len(rows),
        n=args.n,
        tr_s=sum(r[4] for r in rows) / len(rows),
        ccp=sum(1 for r in rows if r[1]) / len(rows),
        gen_len_mean=sum(r[5] for r in rows) / len(rows),
        wall_time_mean_seconds=None,
        sample_count=len(rows),
        tr_n_undefined=sum(1 for r in rows if not r[3]),
    )
    if args.format == "structured":
        samples = [{"id": i, "accepted": a, "tr_n": t, "tr_n_defined": d, "tr_s": s, "terminals": c} for i, a, t, d, s, c in rows]
        print(json.dumps({"samples": samples, "aggregate": report.to_record()}, indent=2), file=out)
    else:
        width = max(len(r[0]) for r in rows)
        print(f"{'id'.ljust(width)}  accepted  TR-N   TR-S   terminals", file=out)
        for i, a, t, d, s, c in rows:
            print(f"{i.ljust(width)}  {'yes' if a else 'no':>8}  {t:.3f}{' ' if d else '*'} {s:.3f}  {c:>9}", file=out)
        print(file=out)
        print(format_table([("corpus", report)]), file=out)
    return EXIT_OK


def _scenario(ref: str):
    p = Path(ref)
    if p.is_file():
        return load_scenario(p)
    try:
        return builtin_scenario(ref)
    except FileNotFoundError:
        raise UsageError(f"no scenario file or built-in scenario named {ref!r}") from None


def cmd_simulate(args, out=None) -> int:
    out = out or sys.stdout
    try:
        scenario = _scenario(args.scenario)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad scenario: {exc}") from exc
    changes = {}
    if args.budget is not None:
        changes["budget"] = args.budget
    if args.lam is not None:
        changes["lam"] = args.lam
    if args.min_count is not None:
        changes["min_count"] = args.min_count
    if args.seed:
        changes["seeds"] = tuple(args.seed)
    if args.sampler:
        changes["samplers"] = tuple(args.sampler)
    try:
        scenario = replace(scenario, **changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    pda, lexicon = _engine(args)
    out_dir = args.out or os.environ.get("RPG_OUT")

    factory = None
    pipes: list[PipeModel] = []
    if args.model_cmd:
        spec = scenario.model
        if "vocab" not in spec:
            raise UsageError("--model-cmd needs a scenario whose model lists its vocab")
        texts = tuple(spec["vocab"])
        vocab = Vocab(texts, texts.index(spec.get("eos", "<eos>")))
        prompt = [texts.index(p) for p in spec.get("prompt", [])]

        def factory(_spec, _seed):
            model = PipeModel(args.model_cmd, vocab)
            pipes.append(model)
            return model, prompt
    elif scenario.model.get("kind") not in ("elif-trap", "repetition-free", "scripted"):
        raise UsageError(f"unknown model kind {scenario.model.get('kind')!r}")

    try:
        if args.sweep:
            lambdas = [float(x) for x in args.sweep.split(",")]
            rows = lambda_sweep(scenario, lambdas, pda=pda, lexicon=lexicon, model_factory=factory, n=args.n)
            named = [(f"rpg:{lam:g}", rep) for lam, rep in rows if rep is not None]
            print(format_records(named) if args.format == "structured" else format_table(named), file=out)
            return EXIT_OK
        report = run_scenario(scenario, out_dir, pda=pda, lexicon=lexicon, model_factory=factory, n=args.n)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    finally:
        for p in pipes:
            p.close()

    checks = check_expectations(report) if not args.sampler else []
    if args.format == "structured":
        print(json.dumps({
            "scenario": scenario.name,
            "rows": json.loads(report.records()),
            "errors": {r.name: r.errors for r in report.rows if r.errors},
            "expectations": [{"check": d, "ok": ok} for d, ok in checks],
        }, indent=2), file=out)
    else:
        print(f"scenario {scenario.name}: {len(scenario.seeds)} seed(s), budget {scenario.budget}", file=out)
        print(report.table(), file=out)
        for r in report.rows:
            for e in r.errors:
                print(f"error [{r.name}] {e}", file=out)
        for desc, ok in checks:
            print(f"{'PASS' if ok else 'FAIL'}  {desc}", file=out)
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_FOUND


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grammar", help="grammar file (default: $RPG_GRAMMAR or the bundled Python grammar)")
    common.add_argument("--start", default=DEFAULT_START, help="start symbol (default: %(default)s)")
    common.add_argument("--format", choices=("table", "structured"), default="table")

    parser = _Parser(prog="rpg", description="Grammar-based repetition detection and penalized decoding.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reduce", parents=[common], help="print the merged rule-label trace of a source file")
    p.add_argument("file")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("detect", parents=[common], help="report consecutive structural repetitions")
    p.add_argument("file")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("metrics", parents=[common], help="TR-N, TR-S and CCP over a JSON-lines corpus")
    p.add_argument("corpus")
    p.add_argument("--n", type=int, default=4, help="n-gram size for TR-N")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("simulate", parents=[common], help="run a decoding scenario against mock or piped models")
    p.add_argument("scenario", help="scenario file or built-in name (elif-trap, elif-trap-endless, repetition-free, synthetic-prompt)")
    p.add_argument("--sampler", action="append", help="greedy, temp:T, topk:K, topp:P, ctrl:THETA[:T], rpg or rpg:LAMBDA (repeatable)")
    p.add_argument("--lambda", dest="lam", type=float, help="decay factor for rpg (default 0.9)")
    p.add_argument("--min-count", type=int)
    p.add_argument("--budget", type=int, help="max new tokens (default 1024)")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--sweep", help="comma-separated lambdas; prints one rpg row per value")
    p.add_argument("--out", help="trace directory (default: $RPG_OUT)")
    p.add_argument("--model-cmd", help="external model speaking JSON lines on stdin/stdout")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rpg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
