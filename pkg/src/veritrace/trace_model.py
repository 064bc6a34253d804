"""Domain types and canonical file format for token-level log-probability traces.

A trace captures what an inference engine reports while force-scoring an
existing answer: for every answer token, the log-probability it assigned to
the token actually present, that token's rank among the engine's top-k
candidates, and the top-k candidate log-probabilities themselves. Traces from
several engines for the same answer are bundled into an :class:`EnsembleTrace`.

All log-probabilities are natural log (nats) throughout the package.

Wire format (one JSON object per line)::

    {"answer_id": str, "question_id": str, "variant_id": str,
     "label": "fact"|"hallucination"|null,
     "models": [{"model_id": str, "k": int,
                 "steps": [{"tok": int, "lp": float, "rank": int,
                            "top": [[token_id, logprob], ...]}]}]}

Ingesting API responses: OpenAI-style ``logprobs.content[*].top_logprobs``
entries map onto one ``TokenStep`` per position (token string -> integer id
via a per-run vocabulary, see ``providers.TokenVocabulary``); engines that
expose per-position prompt log-probabilities (e.g. a ``prompt_logprobs``
field) map each scored position the same way.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import TraceFormatError

PROB_SUM_TOLERANCE = 1e-6
LABELS = ("fact", "hallucination")


@dataclass(frozen=True)
class TopCandidate:
    """One candidate token at one generation step."""

    token_id: int
    logprob: float

    def __post_init__(self):
        if self.token_id < 0:
            raise TraceFormatError(f"token_id must be >= 0, got {self.token_id}")
        if not math.isfinite(self.logprob) or self.logprob > 0.0:
            raise TraceFormatError(f"logprob must be <= 0, got {self.logprob}")


@dataclass(frozen=True)
class TokenStep:
    """One forced-inference step: the generated token plus top-k candidates.

    ``rank`` is 1-based among the candidates; a generated token outside the
    top-k window carries the sentinel rank k+1.
    """

    generated_token_id: int
    generated_logprob: float
    rank: int
    top: tuple[TopCandidate, ...]

    def __post_init__(self):
        if not self.top:
            raise TraceFormatError("step must carry at least one top candidate")
        if self.rank < 1:
            raise TraceFormatError(f"rank must be >= 1, got {self.rank}")
        if not math.isfinite(self.generated_logprob) or self.generated_logprob > 0.0:
            raise TraceFormatError(
                f"logprob must be <= 0, got {self.generated_logprob}"
            )
        prev = None
        total = 0.0
        for i, cand in enumerate(self.top):
            if prev is not None:
                if cand.logprob > prev.logprob or (
                    cand.logprob == prev.logprob and cand.token_id <= prev.token_id
                ):
                    raise TraceFormatError(
                        "top candidates must be sorted by logprob descending, "
                        f"token_id ascending on ties (violated at position {i})"
                    )
            total += math.exp(cand.logprob)
            prev = cand
        if total > 1.0 + PROB_SUM_TOLERANCE:
            raise TraceFormatError(
                f"top candidate probabilities sum to {total:.9f} > 1"
            )
        for i, cand in enumerate(self.top):
            if cand.token_id == self.generated_token_id:
                if self.rank != i + 1:
                    raise TraceFormatError(
                        f"generated token found at position {i + 1} but rank is {self.rank}"
                    )
                if abs(cand.logprob - self.generated_logprob) > 1e-9:
                    raise TraceFormatError(
                        "generated_logprob disagrees with its top-candidate entry"
                    )
                break


@dataclass(frozen=True)
class ModelTrace:
    """All steps one engine produced while force-scoring one answer."""

    model_id: str
    steps: tuple[TokenStep, ...]
    k: int = 50

    def __post_init__(self):
        if not self.model_id:
            raise TraceFormatError("model_id must be non-empty")
        if not self.steps:
            raise TraceFormatError("trace must carry at least one step")
        if self.k < 1:
            raise TraceFormatError(f"k must be >= 1, got {self.k}")
        for i, step in enumerate(self.steps):
            if len(step.top) > self.k:
                raise TraceFormatError(
                    f"step {i} carries {len(step.top)} candidates, k={self.k}"
                )


@dataclass(frozen=True)
class EnsembleTrace:
    """Per-answer bundle of aligned per-model traces.

    ``variant_id`` indexes question rephrasings, "0" for the original wording.
    """

    answer_id: str
    question_id: str
    variant_id: str
    model_traces: tuple[ModelTrace, ...]
    label: Optional[str] = None

    def __post_init__(self):
        if not self.answer_id:
            raise TraceFormatError("answer_id must be non-empty")
        if not self.model_traces:
            raise TraceFormatError("ensemble must carry at least one model trace")
        if self.label is not None and self.label not in LABELS:
            raise TraceFormatError(
                f"label must be one of {LABELS} or null, got {self.label!r}"
            )
        seen = set()
        for trace in self.model_traces:
            if trace.model_id in seen:
                raise TraceFormatError(f"duplicate model_id {trace.model_id!r}")
            seen.add(trace.model_id)

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(t.model_id for t in self.model_traces)

    def trace_for(self, model_id: str) -> ModelTrace:
        for trace in self.model_traces:
            if trace.model_id == model_id:
                return trace
        raise KeyError(model_id)


def step_to_json(step: TokenStep) -> dict:
    return {
        "tok": step.generated_token_id,
        "lp": step.generated_logprob,
        "rank": step.rank,
        "top": [[c.token_id, c.logprob] for c in step.top],
    }


def trace_to_json(trace: EnsembleTrace) -> dict:
    return {
        "answer_id": trace.answer_id,
        "question_id": trace.question_id,
        "variant_id": trace.variant_id,
        "label": trace.label,
        "models": [
            {
                "model_id": mt.model_id,
                "k": mt.k,
                "steps": [step_to_json(s) for s in mt.steps],
            }
            for mt in trace.model_traces
        ],
    }


def _require(obj: dict, key: str, line, path: str):
    if key not in obj:
        raise TraceFormatError(f"missing field '{key}'", line=line, field=path)
    return obj[key]


def step_from_json(obj: dict, line=None, path: str = "") -> TokenStep:
    try:
        top = tuple(
            TopCandidate(token_id=int(t[0]), logprob=float(t[1]))
            for t in _require(obj, "top", line, path + ".top")
        )
        return TokenStep(
            generated_token_id=int(_require(obj, "tok", line, path)),
            generated_logprob=float(_require(obj, "lp", line, path)),
            rank=int(_require(obj, "rank", line, path)),
            top=top,
        )
    except TraceFormatError as exc:
        if not exc.field and path:
            raise TraceFormatError(
                str(exc), line=line if exc.line is None else exc.line, field=path
            ) from exc
        raise
    except (TypeError, ValueError, IndexError) as exc:
        raise TraceFormatError(str(exc), line=line, field=path) from exc


def trace_from_json(obj: dict, line=None) -> EnsembleTrace:
    if not isinstance(obj, dict):
        raise TraceFormatError("record must be a JSON object", line=line)
    models = _require(obj, "models", line, "models")
    if not isinstance(models, list):
        raise TraceFormatError("'models' must be a list", line=line, field="models")
    traces = []
    for mi, m in enumerate(models):
        mpath = f"models[{mi}]"
        if not isinstance(m, dict):
            raise TraceFormatError("model entry must be an object", line=line, field=mpath)
        steps = _require(m, "steps", line, mpath + ".steps")
        if not isinstance(steps, list):
            raise TraceFormatError("'steps' must be a list", line=line, field=mpath + ".steps")
        parsed = tuple(
            step_from_json(s, line=line, path=f"{mpath}.steps[{si}]")
            for si, s in enumerate(steps)
        )
        try:
            traces.append(
                ModelTrace(
                    model_id=str(_require(m, "model_id", line, mpath)),
                    steps=parsed,
                    k=int(m.get("k", 50)),
                )
            )
        except TraceFormatError as exc:
            if not exc.field:
                raise TraceFormatError(
                    str(exc), line=line if exc.line is None else exc.line, field=mpath
                ) from exc
            raise
    try:
        return EnsembleTrace(
            answer_id=str(_require(obj, "answer_id", line, "answer_id")),
            question_id=str(obj.get("question_id", "")),
            variant_id=str(obj.get("variant_id", "0")),
            model_traces=tuple(traces),
            label=obj.get("label"),
        )
    except TraceFormatError as exc:
        if exc.line is None and line is not None:
            raise TraceFormatError(str(exc), line=line) from exc
        raise


def read_trace_file(path) -> list[EnsembleTrace]:
    """Read a line-delimited trace file, failing fast with line diagnostics."""
    traces = []
    seen: set[tuple[str, str, str]] = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise TraceFormatError(f"cannot open trace file: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"invalid JSON: {exc}", line=lineno) from exc
            trace = trace_from_json(obj, line=lineno)
            for mt in trace.model_traces:
                key = (trace.answer_id, trace.variant_id, mt.model_id)
                if key in seen:
                    raise TraceFormatError(
                        f"duplicate (answer_id, variant_id, model_id) = {key}",
                        line=lineno,
                    )
                seen.add(key)
            traces.append(trace)
    return traces


def iter_trace_file(path) -> Iterable[EnsembleTrace]:
    """Stream traces without loading the whole file; same validation as read."""
    seen: set[tuple[str, str, str]] = set()
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise TraceFormatError(f"cannot open trace file: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"invalid JSON: {exc}", line=lineno) from exc
            trace = trace_from_json(obj, line=lineno)
            for mt in trace.model_traces:
                key = (trace.answer_id, trace.variant_id, mt.model_id)
                if key in seen:
                    raise TraceFormatError(
                        f"duplicate (answer_id, variant_id, model_id) = {key}",
                        line=lineno,
                    )
                seen.add(key)
            yield trace


def write_trace_file(traces: Iterable[EnsembleTrace], path) -> None:
    """Write traces as line-delimited JSON.

    Floats serialize via Python's shortest round-trip repr, so
    read(write(t)) reproduces every numeric field bit-exactly. All records
    are validated before the first byte is written.
    """
    records = []
    seen: set[tuple[str, str]] = set()
    for trace in traces:
        key = (trace.answer_id, trace.variant_id)
        if key in seen:
            raise TraceFormatError(f"duplicate (answer_id, variant_id) = {key}")
        seen.add(key)
        records.append(trace_to_json(trace))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def align_pair(a: ModelTrace, b: ModelTrace, strategy: str = "strict") -> list[tuple[int, int]]:
    """Pair step indices of two traces.

    strict: identity pairing, lengths must match. positional: index i of `a`
    maps to round(i*(len(b)-1)/(len(a)-1)) with half-up rounding; a
    single-step trace on either side pairs against index 0.
    """
    la, lb = len(a.steps), len(b.steps)
    if strategy == "strict":
        if la != lb:
            raise TraceFormatError(f"length mismatch {la} vs {lb}")
        return [(i, i) for i in range(la)]
    if strategy == "positional":
        if la == 1:
            return [(0, 0)]
        scale = (lb - 1) / (la - 1)
        return [(i, int(math.floor(i * scale + 0.5))) for i in range(la)]
    raise TraceFormatError(f"unknown alignment strategy {strategy!r}")
