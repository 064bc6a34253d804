"""Synthetic phenotype trace generation.

Three hallucination phenotypes with distinct token-level signatures, plus a
contamination phenotype that is statistically indistinguishable from the
factual one:

  factual       sharply peaked distributions (top-1 mass in [0.85, 0.99]),
                nearly identical across models; labeled fact
  confused      near-uniform top-k (per-token entropy within 10% of ln k),
                low cross-model divergence; labeled hallucination
  confabulated  sharply peaked per model, but each model peaks on a
                different token (high pairwise KL); labeled hallucination
  contamination factual-shaped statistics, labeled hallucination - only a
                database check can catch it, so it is excluded from
                classifier-training corpora and exercised in arbitration
                fixtures

Generation is fully seeded: one spec + seed reproduces identical traces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import VeritraceError
from ..trace_model import EnsembleTrace, ModelTrace, TokenStep, TopCandidate

PHENOTYPES = ("factual", "confused", "confabulated", "contamination")
_VOCAB = 32000
_PEAK_JITTER = 0.02  # logit noise between models for shared-peak phenotypes
_FLAT_ALPHA = 80.0  # dirichlet concentration for near-uniform distributions

_PHENOTYPE_REGIMES = {
    "factual": ("low", "low"),
    "contamination": ("low", "low"),
    "confused": ("high", "low"),
    "confabulated": ("low", "high"),
}
_PHENOTYPE_LABELS = {
    "factual": "fact",
    "confused": "hallucination",
    "confabulated": "hallucination",
    "contamination": "hallucination",
}


@dataclass(frozen=True)
class PhenotypeSpec:
    phenotype: str
    entropy_level: str
    divergence_level: str
    length_range: tuple[int, int] = (24, 48)
    k: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.phenotype not in PHENOTYPES:
            raise VeritraceError(f"unknown phenotype {self.phenotype!r}")
        expected = _PHENOTYPE_REGIMES[self.phenotype]
        if (self.entropy_level, self.divergence_level) != expected:
            raise VeritraceError(
                f"invalid regime ordering for {self.phenotype!r}: expected "
                f"(entropy, divergence) = {expected}, got "
                f"({self.entropy_level!r}, {self.divergence_level!r})"
            )
        lo, hi = self.length_range
        if lo < 1 or hi < lo:
            raise VeritraceError(f"invalid length_range {self.length_range}")
        if self.k < 2:
            raise VeritraceError("k must be >= 2")

    @classmethod
    def for_phenotype(
        cls,
        phenotype: str,
        seed: int = 0,
        k: int = 50,
        length_range: tuple[int, int] = (24, 48),
    ) -> "PhenotypeSpec":
        if phenotype not in _PHENOTYPE_REGIMES:
            raise VeritraceError(f"unknown phenotype {phenotype!r}")
        entropy_level, divergence_level = _PHENOTYPE_REGIMES[phenotype]
        return cls(
            phenotype=phenotype,
            entropy_level=entropy_level,
            divergence_level=divergence_level,
            length_range=length_range,
            k=k,
            seed=seed,
        )

    @property
    def label(self) -> str:
        return _PHENOTYPE_LABELS[self.phenotype]


def _steps_from_probs(ids, probs, generated_pos):
    """Build one TokenStep from parallel id/prob arrays (probs sum to <= 1)."""
    order = sorted(range(len(ids)), key=lambda i: (-probs[i], ids[i]))
    top = tuple(
        TopCandidate(token_id=int(ids[i]), logprob=float(min(0.0, math.log(probs[i]))))
        for i in order
    )
    rank = order.index(generated_pos) + 1
    return TokenStep(
        generated_token_id=int(ids[generated_pos]),
        generated_logprob=top[rank - 1].logprob,
        rank=rank,
        top=top,
    )


def _shared_peak_step(rng, k, n_models):
    """Per-model distributions peaked on the same token; tiny logit jitter."""
    ids = rng.choice(_VOCAB, size=k, replace=False)
    p1 = rng.uniform(0.85, 0.99)
    tail = rng.dirichlet(np.ones(k - 1)) * (1.0 - p1)
    base = np.concatenate([[p1], tail])
    steps = []
    for _ in range(n_models):
        logits = np.log(np.maximum(base, 1e-300)) + rng.normal(0.0, _PEAK_JITTER, size=k)
        probs = np.exp(logits - logits.max())
        probs /= probs.sum()
        steps.append(_steps_from_probs(ids, probs, generated_pos=0))
    return steps


def _flat_step(rng, k, n_models):
    """Near-uniform distributions; the scored token is sampled from model 0."""
    ids = rng.choice(_VOCAB, size=k, replace=False)
    mass = rng.uniform(0.90, 0.98)
    per_model = [rng.dirichlet(np.full(k, _FLAT_ALPHA)) * mass for _ in range(n_models)]
    gen_pos = int(rng.choice(k, p=per_model[0] / per_model[0].sum()))
    return [_steps_from_probs(ids, probs, gen_pos) for probs in per_model]


def _disagreeing_peak_step(rng, k, n_models):
    """Each model peaks on its own token; the answer follows model 0's peak."""
    if n_models > k:
        raise VeritraceError(f"confabulated phenotype needs k >= n_models, got k={k}")
    ids = rng.choice(_VOCAB, size=k, replace=False)
    steps = []
    for m in range(n_models):
        p1 = rng.uniform(0.85, 0.99)
        tail = rng.dirichlet(np.ones(k - 1)) * (1.0 - p1)
        probs = np.empty(k)
        probs[m] = p1
        probs[np.arange(k) != m] = tail
        steps.append(_steps_from_probs(ids, probs, generated_pos=0))
    return steps


_STEP_BUILDERS = {
    "factual": _shared_peak_step,
    "contamination": _shared_peak_step,
    "confused": _flat_step,
    "confabulated": _disagreeing_peak_step,
}


def generate_synthetic_traces(
    spec: PhenotypeSpec,
    n_models: int = 3,
    n_answers: int = 100,
    id_prefix: str | None = None,
) -> list[EnsembleTrace]:
    """Seeded corpus of ensemble traces for one phenotype."""
    if n_models < 2:
        raise VeritraceError("need at least 2 models for interaction features")
    rng = np.random.default_rng(spec.seed)
    build_step = _STEP_BUILDERS[spec.phenotype]
    prefix = id_prefix if id_prefix is not None else spec.phenotype
    model_ids = [f"m{m:02d}" for m in range(n_models)]
    traces = []
    lo, hi = spec.length_range
    for a in range(n_answers):
        t = int(rng.integers(lo, hi + 1))
        per_model_steps: list[list[TokenStep]] = [[] for _ in range(n_models)]
        for _ in range(t):
            step_set = build_step(rng, spec.k, n_models)
            for m in range(n_models):
                per_model_steps[m].append(step_set[m])
        traces.append(
            EnsembleTrace(
                answer_id=f"{prefix}-{a:05d}",
                question_id=f"q-{prefix}-{a:05d}",
                variant_id="0",
                model_traces=tuple(
                    ModelTrace(model_id=model_ids[m], steps=tuple(per_model_steps[m]), k=spec.k)
                    for m in range(n_models)
                ),
                label=spec.label,
            )
        )
    return traces


def generate_mixture(
    mix: dict[str, int],
    n_models: int = 3,
    k: int = 50,
    seed: int = 0,
    length_range: tuple[int, int] = (24, 48),
) -> list[EnsembleTrace]:
    """Concatenated corpora for several phenotypes under one master seed.

    Each phenotype draws from its own derived seed, so adding one phenotype
    does not shift another's stream.
    """
    traces = []
    for offset, (phenotype, count) in enumerate(sorted(mix.items())):
        if count < 1:
            raise VeritraceError(f"phenotype count must be >= 1, got {phenotype}={count}")
        spec = PhenotypeSpec.for_phenotype(
            phenotype, seed=seed + 1000 * (offset + 1), k=k, length_range=length_range
        )
        traces.extend(generate_synthetic_traces(spec, n_models=n_models, n_answers=count))
    return traces
