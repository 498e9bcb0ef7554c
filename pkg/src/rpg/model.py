"""The model interface the decoder talks to: history in, distribution out."""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence


class ModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class Vocab:
    texts: tuple[str, ...]
    eos_id: int

    def __len__(self) -> int:
        return len(self.texts)

    def text(self, token_id: int) -> str:
        return "" if token_id == self.eos_id else self.texts[token_id]

    def detokenize(self, ids: Sequence[int]) -> str:
        return "".join(self.text(i) for i in ids)

    def id_of(self, text: str) -> int:
        return self.texts.index(text)


@dataclass(frozen=True)
class ScoredVocab:
    """Sparse next-token distribution; ids missing from ``entries`` have probability 0."""

    entries: Mapping[int, float]
    eos_id: int

    def validate(self, tol: float = 1e-6) -> None:
        if not self.entries:
            raise ModelError("empty distribution")
        total = 0.0
        for tid, p in self.entries.items():
            if not (p >= 0.0 and math.isfinite(p)):
                raise ModelError(f"invalid probability {p!r} for token {tid}")
            total += p
        if abs(total - 1.0) > tol:
            raise ModelError(f"probabilities sum to {total}, not 1")


class LanguageModel(Protocol):
    vocab: Vocab

    def __call__(self, history: Sequence[int]) -> ScoredVocab: ...


class PipeModel:
    """An external process speaking one JSON object per line.

    Request: ``{"history": [ids]}``. Response:
    ``{"probabilities": {"id": p, ...}, "eos_id": id}``.
    """

    def __init__(self, command: str | Sequence[str], vocab: Vocab):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.vocab = vocab
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
        )

    def __call__(self, history: Sequence[int]) -> ScoredVocab:
        assert self.proc.stdin and self.proc.stdout
        try:
            self.proc.stdin.write(json.dumps({"history": list(history)}) + "\n")
            self.proc.stdin.flush()
            line = self.proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ModelError(f"model process failed: {exc}") from exc
        if not line:
            raise ModelError("model process closed its output")
        try:
            msg = json.loads(line)
            probs = {int(k): float(v) for k, v in msg["probabilities"].items()}
            eos = int(msg.get("eos_id", self.vocab.eos_id))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise ModelError(f"malformed model response: {line.strip()[:200]}") from exc
        return ScoredVocab(probs, eos)

    def close(self) -> None:
        if self.proc.poll() is None:
            if self.proc.stdin:
                self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self) -> PipeModel:
        return self

    def __exit__(self, *exc) -> None:
        self.close()
