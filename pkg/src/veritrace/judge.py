"""Database-driven fact checking.

An answer is decomposed into statements (paragraph, sentence, or atomic
claim granularity), each statement is checked twice against a retrieved
context document - once for deducibility (factual analysis) and once for
deducibility of its negation (counterfactual analysis) - and the boolean
pair maps to a four-category verdict:

    (supported, not contradicted) -> Fact,           score 1
    (contradicted, not supported) -> Hallucination,  score 0
    (both)                        -> JudgmentError,  score 0.5
    (neither)                     -> CoverageGap,    score 0.5

Per-statement provider failures are recorded as a fifth internal outcome
``Error`` (excluded from the mean score) without aborting the batch.
"""
from __future__ import annotations

import json
import logging
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .errors import ContextNotFoundError, ProviderError, VeritraceError

logger = logging.getLogger(__name__)

GRANULARITIES = ("paragraph", "sentence", "atomic_claim")

# Tokens that end with '.' without terminating a sentence.
ABBREVIATIONS = frozenset(
    {
        "dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "no", "vs", "etc",
        "e.g", "i.e", "al", "fig", "figs", "eq", "eqs", "approx", "ca", "cf",
        "dept", "est", "inc", "ltd", "vol", "pp", "ed", "eds", "resp", "min",
        "max", "mg", "kg", "ml",
    }
)


@dataclass(frozen=True)
class Statement:
    """One checkable unit with its origin span in the parent answer.

    For paragraph and sentence granularity, ``text`` equals the answer slice
    at ``span``. Atomic claims are provider-generated rewrites, so their
    ``span`` points at the source sentence instead.
    """

    text: str
    granularity: str
    span: tuple[int, int]

    def __post_init__(self):
        if not self.text.strip():
            raise VeritraceError("statement text must be non-empty")
        if self.granularity not in GRANULARITIES:
            raise VeritraceError(f"unknown granularity {self.granularity!r}")
        if self.span[0] < 0 or self.span[1] < self.span[0]:
            raise VeritraceError(f"invalid span {self.span}")


@dataclass(frozen=True)
class JudgeCall:
    decision: bool
    justification: str
    raw: dict = field(default_factory=dict)


class VerdictCategory(str, Enum):
    FACT = "Fact"
    HALLUCINATION = "Hallucination"
    JUDGMENT_ERROR = "JudgmentError"
    COVERAGE_GAP = "CoverageGap"
    ERROR = "Error"  # provider failure; internal outcome, carries no score


_SCORES = {
    VerdictCategory.FACT: 1.0,
    VerdictCategory.HALLUCINATION: 0.0,
    VerdictCategory.JUDGMENT_ERROR: 0.5,
    VerdictCategory.COVERAGE_GAP: 0.5,
}


@dataclass(frozen=True)
class Verdict:
    category: VerdictCategory
    score: float
    supported: bool
    contradicted: bool


def categorize(supported: bool, contradicted: bool) -> Verdict:
    """Map the (supported, contradicted) pair to its verdict."""
    if supported and not contradicted:
        category = VerdictCategory.FACT
    elif contradicted and not supported:
        category = VerdictCategory.HALLUCINATION
    elif supported and contradicted:
        category = VerdictCategory.JUDGMENT_ERROR
    else:
        category = VerdictCategory.COVERAGE_GAP
    return Verdict(
        category=category,
        score=_SCORES[category],
        supported=supported,
        contradicted=contradicted,
    )


# ---------------------------------------------------------------------------
# Statement decomposition
# ---------------------------------------------------------------------------

_TERMINAL = ".?!"


def _is_decimal_dot(text: str, i: int) -> bool:
    return (
        text[i] == "."
        and i > 0
        and text[i - 1].isdigit()
        and i + 1 < len(text)
        and text[i + 1].isdigit()
    )


def _is_abbreviation(text: str, i: int) -> bool:
    if text[i] != ".":
        return False
    j = i - 1
    while j >= 0 and (text[j].isalpha() or text[j] == "."):
        j -= 1
    word = text[j + 1 : i].lower()
    if not word:
        return False
    if len(word.replace(".", "")) == 1:
        return True  # single-letter initial such as "A." or "J."
    return word in ABBREVIATIONS


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Spans of sentences, each including its terminal punctuation.

    Boundaries are runs of [.?!] not inside decimal numbers or known
    abbreviations, followed by whitespace + an uppercase/digit/quote opener
    or end of text. Trailing quotes and brackets stay with their sentence.
    """
    spans = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch in _TERMINAL:
            if ch == "." and (_is_decimal_dot(text, i) or _is_abbreviation(text, i)):
                i += 1
                continue
            j = i
            while j + 1 < n and text[j + 1] in _TERMINAL:
                j += 1
            while j + 1 < n and text[j + 1] in "\"')]}":
                j += 1
            k = j + 1
            while k < n and text[k].isspace():
                k += 1
            if k >= n or text[k].isupper() or text[k].isdigit() or text[k] in "\"'([{":
                seg_start = start
                while seg_start <= j and text[seg_start].isspace():
                    seg_start += 1
                if seg_start <= j:
                    spans.append((seg_start, j + 1))
                start = k
                i = k
                continue
            i = j + 1
            continue
        i += 1
    seg_start = start
    while seg_start < n and text[seg_start].isspace():
        seg_start += 1
    rest = text[seg_start:].rstrip()
    if rest:
        spans.append((seg_start, seg_start + len(rest)))
    return spans


def _normalize_claim(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().rstrip(".").lower()


def decompose(answer: str, level: str, decomposer=None) -> list[Statement]:
    """Split an answer into statements at the requested granularity.

    atomic_claim granularity sends each sentence to the decomposer provider
    and deduplicates the returned claims by normalized text; a provider
    failure falls back to sentence granularity for that sentence, with a
    warning.
    """
    if not answer or not answer.strip():
        raise VeritraceError("answer must be non-empty")
    if level not in GRANULARITIES:
        raise VeritraceError(f"unknown granularity {level!r}")
    if level == "paragraph":
        stripped = answer.strip()
        start = len(answer) - len(answer.lstrip())
        return [Statement(text=answer[start : start + len(stripped)],
                          granularity="paragraph", span=(start, start + len(stripped)))]
    sentence_spans = split_sentences(answer)
    sentences = [
        Statement(text=answer[s:e], granularity="sentence", span=(s, e))
        for s, e in sentence_spans
    ]
    if level == "sentence":
        return sentences
    if decomposer is None:
        raise VeritraceError("atomic_claim granularity requires a decomposer provider")
    statements: list[Statement] = []
    seen: set[str] = set()
    for sent in sentences:
        try:
            claims = decomposer.decompose(sent.text)
        except ProviderError as exc:
            logger.warning(
                "claim decomposition failed for sentence at %s (%s); "
                "falling back to sentence granularity",
                sent.span,
                exc,
            )
            statements.append(sent)
            continue
        for claim in claims:
            key = _normalize_claim(claim)
            if not key or key in seen:
                continue
            seen.add(key)
            statements.append(
                Statement(text=claim, granularity="atomic_claim", span=sent.span)
            )
    return statements


# ---------------------------------------------------------------------------
# Factual / counterfactual checks
# ---------------------------------------------------------------------------


def _checked_call(provider, statement: Statement, context: str, mode: str, retries: int) -> JudgeCall:
    if not context or not context.strip():
        raise VeritraceError("empty context")
    attempts = retries + 1
    last: Optional[Exception] = None
    for attempt in range(attempts):
        try:
            decision, justification = provider.judge(statement.text, context, mode)
            return JudgeCall(decision=bool(decision), justification=justification,
                             raw={"mode": mode, "attempt": attempt + 1})
        except ProviderError as exc:
            last = exc
            logger.debug("judge call failed (attempt %d/%d): %s", attempt + 1, attempts, exc)
    raise ProviderError(f"judge provider failed after {attempts} attempts: {last}")


def factual_check(statement: Statement, context: str, provider, retries: int = 3) -> JudgeCall:
    """True iff the provider can deduce the statement from the context."""
    return _checked_call(provider, statement, context, "factual", retries)


def counterfactual_check(statement: Statement, context: str, provider, retries: int = 3) -> JudgeCall:
    """True iff the provider can deduce the statement's negation from the context."""
    return _checked_call(provider, statement, context, "counterfactual", retries)


@dataclass
class StatementResult:
    statement: Statement
    category: VerdictCategory
    verdict: Optional[Verdict] = None
    factual: Optional[JudgeCall] = None
    counterfactual: Optional[JudgeCall] = None
    error: Optional[str] = None


@dataclass
class AnswerJudgement:
    results: list[StatementResult]
    mean_score: float
    histogram: dict[str, int]

    def to_json(self) -> dict:
        return {
            "mean_score": self.mean_score,
            "histogram": self.histogram,
            "statements": [
                {
                    "text": r.statement.text,
                    "span": list(r.statement.span),
                    "granularity": r.statement.granularity,
                    "category": r.category.value,
                    "score": r.verdict.score if r.verdict else None,
                    "error": r.error,
                }
                for r in self.results
            ],
        }


def judge_answer(
    answer: str,
    context: str,
    level: str,
    provider,
    decomposer=None,
    retries: int = 3,
    max_concurrency: int = 4,
    transcript=None,
) -> AnswerJudgement:
    """Decompose, run dual checks per statement, and aggregate.

    Statements are judged concurrently up to ``max_concurrency``; results
    keep statement order. Per-statement provider failures become Error
    outcomes and are excluded from the mean score.
    """
    statements = decompose(answer, level, decomposer)

    def run_one(statement: Statement) -> StatementResult:
        t0 = time.monotonic()
        try:
            fact_call = factual_check(statement, context, provider, retries)
            counter_call = counterfactual_check(statement, context, provider, retries)
        except ProviderError as exc:
            _log_transcript(transcript, statement, None, None, time.monotonic() - t0, str(exc))
            return StatementResult(
                statement=statement, category=VerdictCategory.ERROR, error=str(exc)
            )
        verdict = categorize(fact_call.decision, counter_call.decision)
        _log_transcript(transcript, statement, fact_call, counter_call, time.monotonic() - t0, None)
        return StatementResult(
            statement=statement,
            category=verdict.category,
            verdict=verdict,
            factual=fact_call,
            counterfactual=counter_call,
        )

    if max_concurrency > 1 and len(statements) > 1:
        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            results = list(pool.map(run_one, statements))
    else:
        results = [run_one(s) for s in statements]

    histogram = {c.value: 0 for c in VerdictCategory}
    scores = []
    for r in results:
        histogram[r.category.value] += 1
        if r.verdict is not None:
            scores.append(r.verdict.score)
    mean_score = sum(scores) / len(scores) if scores else 0.0
    return AnswerJudgement(results=results, mean_score=mean_score, histogram=histogram)


_transcript_lock = threading.Lock()


def _log_transcript(transcript, statement, fact_call, counter_call, latency, error):
    if transcript is None:
        return
    record = {
        "statement": statement.text,
        "span": list(statement.span),
        "factual": None if fact_call is None else
            {"decision": fact_call.decision, "justification": fact_call.justification},
        "counterfactual": None if counter_call is None else
            {"decision": counter_call.decision, "justification": counter_call.justification},
        "latency_s": round(latency, 6),
        "error": error,
    }
    with _transcript_lock:
        transcript.write(json.dumps(record, separators=(",", ":")) + "\n")


def answer_category(judgement: AnswerJudgement) -> VerdictCategory:
    """Collapse per-statement outcomes to one answer-level category.

    Severity precedence: any Hallucination dominates, then JudgmentError,
    then CoverageGap; an answer is a Fact only when every scored statement
    is. All-Error answers map to Error.
    """
    hist = judgement.histogram
    for category in (
        VerdictCategory.HALLUCINATION,
        VerdictCategory.JUDGMENT_ERROR,
        VerdictCategory.COVERAGE_GAP,
        VerdictCategory.FACT,
    ):
        if hist.get(category.value, 0) > 0:
            return category
    return VerdictCategory.ERROR


# ---------------------------------------------------------------------------
# Context store
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContextDocument:
    key: str
    text: str
    score: float = 1.0


class DocumentStore:
    """Context documents keyed by id: either ``store/<key>.txt`` files or one
    JSON map file {key: text}."""

    def __init__(self, documents: dict[str, str]):
        self._documents = dict(documents)

    @classmethod
    def from_path(cls, path) -> "DocumentStore":
        p = Path(path)
        if p.is_dir():
            docs = {f.stem: f.read_text(encoding="utf-8") for f in sorted(p.glob("*.txt"))}
            return cls(docs)
        if p.is_file():
            with open(p, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            if not isinstance(payload, dict):
                raise VeritraceError(f"context store {p} must be a JSON object")
            return cls({str(k): str(v) for k, v in payload.items()})
        raise VeritraceError(f"context store not found: {p}")

    def keys(self) -> list[str]:
        return sorted(self._documents)

    def get(self, key: str) -> Optional[str]:
        return self._documents.get(key)

    def items(self):
        return sorted(self._documents.items())


_WORD = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> set[str]:
    return set(_WORD.findall(text.lower()))


def retrieve_context(store: DocumentStore, key: str, fallback: bool = False) -> ContextDocument:
    """Exact-key lookup, optionally falling back to best token overlap.

    The fallback score is |query tokens ∩ document tokens| / |query tokens|;
    a zero-overlap corpus still raises ContextNotFoundError.
    """
    text = store.get(key)
    if text is not None:
        return ContextDocument(key=key, text=text, score=1.0)
    if not fallback:
        raise ContextNotFoundError(f"no context document for key {key!r}")
    query = _tokens(key)
    if not query:
        raise ContextNotFoundError(f"no context document for key {key!r}")
    best: Optional[ContextDocument] = None
    for doc_key, doc_text in store.items():
        overlap = len(query & _tokens(doc_text)) / len(query)
        if overlap > 0 and (best is None or overlap > best.score):
            best = ContextDocument(key=doc_key, text=doc_text, score=overlap)
    if best is None:
        raise ContextNotFoundError(f"no overlapping context document for {key!r}")
    return best
