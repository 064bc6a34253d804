"""Feature extraction: ensemble traces -> fixed-schema feature vectors.

Per model, every step yields independent features (Shannon entropy of the
top-k distribution, generated-token rank, generated-token logprob, and the
top-k probabilities); per ordered model pair, a series of step-wise KL
divergences captures cross-model disagreement. Each token-indexed series is
reduced to five standardized population moments (mean, variance, skewness,
raw kurtosis, hyperskewness), giving one compact vector per answer.

Vector corpus wire format (one JSON object per line)::

    {"answer_id": str, "schema_id": str, "label": str|null,
     "values": [float, ...], "warnings": [str, ...]}
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import SchemaMismatchError, TraceFormatError, VeritraceError
from .trace_model import EnsembleTrace, ModelTrace, TopCandidate, align_pair

MOMENT_NAMES = ("mean", "var", "skew", "kurt", "hskew")
DEFAULT_EPSILON = 1e-10


@dataclass(frozen=True)
class FeatureConfig:
    """Extraction knobs shared by all operations.

    residual: how to treat the probability mass outside the top-k when
    computing entropy. "bucket" (default) collapses it into one pseudo-token;
    "renormalize" rescales the observed candidates to sum to 1.
    """

    residual: str = "bucket"
    alignment: str = "strict"
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.residual not in ("bucket", "renormalize"):
            raise VeritraceError(f"unknown residual mode {self.residual!r}")
        if self.alignment not in ("strict", "positional"):
            raise VeritraceError(f"unknown alignment strategy {self.alignment!r}")
        if self.epsilon <= 0:
            raise VeritraceError("epsilon must be > 0")


@dataclass(frozen=True)
class TokenFeatureMatrix:
    """Per-token independent features for one model trace (T rows)."""

    model_id: str
    columns: tuple[str, ...]
    values: np.ndarray  # (T, 3 + k)


@dataclass(frozen=True)
class KlSeries:
    """Step-wise KL(P||Q) for one ordered model pair."""

    pair: tuple[str, str]
    values: np.ndarray


@dataclass(frozen=True)
class FeatureSchema:
    """Frozen naming and ordering of one feature layout.

    schema_id is a stable hash of the name list, so persisted models reject
    vectors produced under a different layout.
    """

    names: tuple[str, ...]
    model_ids: tuple[str, ...]
    k: int
    pairs: tuple[tuple[str, str], ...]

    @property
    def schema_id(self) -> str:
        digest = hashlib.sha256("\n".join(self.names).encode("utf-8")).hexdigest()
        return digest[:16]

    def __len__(self):
        return len(self.names)


@dataclass
class FeatureVector:
    answer_id: str
    schema_id: str
    values: np.ndarray
    label: Optional[str] = None
    warnings: list[str] = field(default_factory=list)


def base_feature_names(k: int) -> tuple[str, ...]:
    return ("entropy_nats", "rank", "generated_logprob") + tuple(
        f"p_top_{i}" for i in range(1, k + 1)
    )


def _candidate_arrays(top: Sequence[TopCandidate]):
    lps = np.array([c.logprob for c in top], dtype=np.float64)
    return lps


def token_entropy(top: Sequence[TopCandidate], residual: str = "bucket") -> float:
    """Shannon entropy in nats of one step's top-k distribution.

    bucket mode treats the unobserved residual mass r = max(0, 1 - sum p) as
    one extra pseudo-token; renormalize mode rescales to full mass. The
    0*ln(0) term is taken as 0.
    """
    if not top:
        raise VeritraceError("candidate list must be non-empty")
    if residual not in ("bucket", "renormalize"):
        raise VeritraceError(f"unknown residual mode {residual!r}")
    lps = _candidate_arrays(top)
    total = float(np.exp(lps).sum())
    if total > 1.0 + 1e-6:
        raise VeritraceError(f"probabilities sum to {total:.9f} > 1")
    row = lps[None, :]
    counts = np.array([len(top)], dtype=np.int64)
    return float(_kernels.entropy_rows(row, counts, residual == "bucket")[0])


def _sorted_by_id(top: Sequence[TopCandidate]):
    pairs = sorted((c.token_id, c.logprob) for c in top)
    ids = np.array([p[0] for p in pairs], dtype=np.int64)
    lps = np.array([p[1] for p in pairs], dtype=np.float64)
    return ids, lps


def pairwise_kl(
    p: Sequence[TopCandidate], q: Sequence[TopCandidate], epsilon: float = DEFAULT_EPSILON
) -> float:
    """KL(P||Q) in nats over the union support of two candidate lists.

    Entries missing from one side are floored at epsilon and both
    distributions are renormalized over the union, so the result is
    nonnegative up to float rounding.
    """
    if epsilon <= 0:
        raise VeritraceError("epsilon must be > 0")
    if not p or not q:
        raise VeritraceError("candidate lists must be non-empty")
    ids_p, lps_p = _sorted_by_id(p)
    ids_q, lps_q = _sorted_by_id(q)
    out = _kernels.kl_aligned(
        ids_p[None, :],
        lps_p[None, :],
        np.array([len(p)], dtype=np.int64),
        ids_q[None, :],
        lps_q[None, :],
        np.array([len(q)], dtype=np.int64),
        np.zeros(1, dtype=np.int64),
        np.zeros(1, dtype=np.int64),
        float(epsilon),
    )
    return float(out[0])


def standardized_moments(series: Sequence[float]) -> tuple[float, float, float, float, float]:
    """(mean, var, skew, kurt, hskew) with population central moments.

    Kurtosis is raw (m4/m2^2, not excess). A constant series (m2 < 1e-12)
    gets zeros for the three standardized moments.
    """
    arr = np.asarray(series, dtype=np.float64)
    if arr.size == 0:
        raise VeritraceError("series must be non-empty")
    out = _kernels.moments_columns(arr[:, None])
    return tuple(float(v) for v in out[0])


def token_features(trace: ModelTrace, residual: str = "bucket") -> TokenFeatureMatrix:
    """One row per step: entropy, rank, generated logprob, p_top_1..p_top_k.

    Steps exposing fewer than k candidates get zero-padded probability
    columns so matrices stay rectangular.
    """
    t = len(trace.steps)
    k = trace.k
    lps = np.full((t, k), -np.inf)
    counts = np.empty(t, dtype=np.int64)
    values = np.zeros((t, 3 + k))
    for i, step in enumerate(trace.steps):
        n = len(step.top)
        counts[i] = n
        for c in range(n):
            lps[i, c] = step.top[c].logprob
        values[i, 1] = float(step.rank)
        values[i, 2] = step.generated_logprob
    values[:, 0] = _kernels.entropy_rows(lps, counts, residual == "bucket")
    probs = np.exp(lps)
    probs[~np.isfinite(lps)] = 0.0
    values[:, 3:] = probs
    return TokenFeatureMatrix(
        model_id=trace.model_id, columns=base_feature_names(k), values=values
    )


def _id_sorted_arrays(trace: ModelTrace):
    t = len(trace.steps)
    k = max(len(s.top) for s in trace.steps)
    ids = np.full((t, k), _kernels.ID_PAD, dtype=np.int64)
    lps = np.full((t, k), -np.inf)
    counts = np.empty(t, dtype=np.int64)
    for i, step in enumerate(trace.steps):
        sid, slp = _sorted_by_id(step.top)
        counts[i] = sid.shape[0]
        ids[i, : sid.shape[0]] = sid
        lps[i, : sid.shape[0]] = slp
    return ids, lps, counts


def interaction_features(
    trace: EnsembleTrace,
    strategy: str = "strict",
    epsilon: float = DEFAULT_EPSILON,
    pairs: Optional[Sequence[tuple[str, str]]] = None,
) -> list[KlSeries]:
    """Step-wise KL series for every ordered model pair (both directions).

    The default pair order is all ordered pairs of the sorted model ids.
    """
    if len(trace.model_traces) < 2:
        raise VeritraceError("interaction features need at least 2 model traces")
    if pairs is None:
        pairs = ordered_pairs(sorted(trace.model_ids))
    cache = {mt.model_id: _id_sorted_arrays(mt) for mt in trace.model_traces}
    out = []
    for pid, qid in pairs:
        p_trace = trace.trace_for(pid)
        q_trace = trace.trace_for(qid)
        pairs_idx = align_pair(p_trace, q_trace, strategy)
        idx_p = np.array([a for a, _ in pairs_idx], dtype=np.int64)
        idx_q = np.array([b for _, b in pairs_idx], dtype=np.int64)
        ids_p, lps_p, cnt_p = cache[pid]
        ids_q, lps_q, cnt_q = cache[qid]
        values = _kernels.kl_aligned(
            ids_p, lps_p, cnt_p, ids_q, lps_q, cnt_q, idx_p, idx_q, float(epsilon)
        )
        out.append(KlSeries(pair=(pid, qid), values=values))
    return out


def ordered_pairs(model_ids: Sequence[str]) -> tuple[tuple[str, str], ...]:
    """All ordered pairs (p, q), p != q, in lexicographic order."""
    return tuple((p, q) for p in model_ids for q in model_ids if p != q)


def feature_schema(
    model_ids: Sequence[str],
    k: int,
    pairs: Optional[Sequence[tuple[str, str]]] = None,
) -> FeatureSchema:
    """Deterministic feature layout for a model set.

    Per model (sorted by id): every base feature x 5 moments; then per
    ordered pair (given order): 5 KL moments.
    """
    if len(set(model_ids)) != len(model_ids):
        raise VeritraceError("model_ids must be unique")
    ordered_models = tuple(sorted(model_ids))
    if pairs is None:
        pairs = ordered_pairs(ordered_models)
    pairs = tuple((p, q) for p, q in pairs)
    names = []
    bases = base_feature_names(k)
    for mid in ordered_models:
        for base in bases:
            for moment in MOMENT_NAMES:
                names.append(f"{mid}.{base}.{moment}")
    for pid, qid in pairs:
        for moment in MOMENT_NAMES:
            names.append(f"kl.{pid}->{qid}.{moment}")
    return FeatureSchema(names=tuple(names), model_ids=ordered_models, k=k, pairs=pairs)


def assemble_feature_vector(
    trace: EnsembleTrace,
    schema: FeatureSchema,
    config: FeatureConfig = FeatureConfig(),
) -> FeatureVector:
    """Fill one vector in schema order.

    The trace must cover every model in the schema (extra models are
    ignored). A pair whose alignment fails under the strict strategy is
    filled with zeros and recorded in the vector's warning list.
    """
    available = set(trace.model_ids)
    missing = [m for m in schema.model_ids if m not in available]
    if missing:
        raise SchemaMismatchError(
            f"trace {trace.answer_id!r} lacks models {missing} required by schema"
        )
    warnings: list[str] = []
    values = np.zeros(len(schema))
    pos = 0
    for mid in schema.model_ids:
        mt = trace.trace_for(mid)
        if mt.k != schema.k:
            raise SchemaMismatchError(
                f"model {mid!r} has k={mt.k}, schema expects k={schema.k}"
            )
        matrix = token_features(mt, config.residual)
        moments = _kernels.moments_columns(matrix.values)
        n_cols = moments.shape[0]
        values[pos : pos + n_cols * 5] = moments.ravel()
        pos += n_cols * 5
    cache = {mt.model_id: _id_sorted_arrays(mt) for mt in trace.model_traces}
    for pid, qid in schema.pairs:
        p_trace = trace.trace_for(pid)
        q_trace = trace.trace_for(qid)
        try:
            pairs_idx = align_pair(p_trace, q_trace, config.alignment)
        except TraceFormatError as exc:
            warnings.append(f"kl.{pid}->{qid}: {exc}")
            pos += 5
            continue
        idx_p = np.array([a for a, _ in pairs_idx], dtype=np.int64)
        idx_q = np.array([b for _, b in pairs_idx], dtype=np.int64)
        ids_p, lps_p, cnt_p = cache[pid]
        ids_q, lps_q, cnt_q = cache[qid]
        series = _kernels.kl_aligned(
            ids_p, lps_p, cnt_p, ids_q, lps_q, cnt_q, idx_p, idx_q, float(config.epsilon)
        )
        values[pos : pos + 5] = _kernels.moments_columns(series[:, None])[0]
        pos += 5
    if not np.all(np.isfinite(values)):
        bad = int(np.argmin(np.isfinite(values)))
        raise VeritraceError(
            f"non-finite feature value at {schema.names[bad]!r} for {trace.answer_id!r}"
        )
    return FeatureVector(
        answer_id=trace.answer_id,
        schema_id=schema.schema_id,
        values=values,
        label=trace.label,
        warnings=warnings,
    )


def variants_as_ensemble(traces: Sequence[EnsembleTrace], model_id: str) -> EnsembleTrace:
    """Bundle one model's traces across question rephrasings.

    Each variant becomes a pseudo-member named ``{model_id}@v{variant_id}``,
    so cross-variant KL uses the same machinery as cross-model KL.
    """
    if len(traces) < 2:
        raise VeritraceError("need at least 2 variants")
    answer_ids = {t.answer_id for t in traces}
    if len(answer_ids) != 1:
        raise VeritraceError(f"variants span multiple answers: {sorted(answer_ids)}")
    members = []
    for t in sorted(traces, key=lambda t: t.variant_id):
        mt = t.trace_for(model_id)
        members.append(
            ModelTrace(model_id=f"{model_id}@v{t.variant_id}", steps=mt.steps, k=mt.k)
        )
    base = traces[0]
    return EnsembleTrace(
        answer_id=base.answer_id,
        question_id=base.question_id,
        variant_id="*",
        model_traces=tuple(members),
        label=base.label,
    )


def extract_corpus(
    traces: Iterable[EnsembleTrace],
    schema: FeatureSchema,
    config: FeatureConfig = FeatureConfig(),
) -> Iterable[FeatureVector]:
    for trace in traces:
        yield assemble_feature_vector(trace, schema, config)


def write_feature_corpus(vectors: Iterable[FeatureVector], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in vectors:
            rec = {
                "answer_id": v.answer_id,
                "schema_id": v.schema_id,
                "label": v.label,
                "values": [float(x) for x in v.values],
                "warnings": list(v.warnings),
            }
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def read_feature_corpus(path) -> list[FeatureVector]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise VeritraceError(f"line {lineno}: invalid JSON: {exc}") from exc
            for key in ("answer_id", "schema_id", "values"):
                if key not in rec:
                    raise VeritraceError(f"line {lineno}: missing field '{key}'")
            out.append(
                FeatureVector(
                    answer_id=rec["answer_id"],
                    schema_id=rec["schema_id"],
                    values=np.asarray(rec["values"], dtype=np.float64),
                    label=rec.get("label"),
                    warnings=list(rec.get("warnings", [])),
                )
            )
    return out
