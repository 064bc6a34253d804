"""Shared fixtures and independent oracles.

The oracle functions here are deliberately naive (direct summation, O(n^2)
pair counting, two-pass moments) and never call into the package's kernel
code, so they stay valid reference points for the optimized paths.
"""
import math

import numpy as np
import pytest

from veritrace.trace_model import (
    EnsembleTrace,
    ModelTrace,
    TokenStep,
    TopCandidate,
)

# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def oracle_entropy(probs, mode="bucket"):
    """Direct-summation entropy in nats over explicit probabilities."""
    total = math.fsum(probs)
    if mode == "renormalize":
        probs = [p / total for p in probs]
    ent = -math.fsum(p * math.log(p) for p in probs if p > 0.0)
    if mode == "bucket":
        resid = max(0.0, 1.0 - total)
        if resid > 0.0:
            ent -= resid * math.log(resid)
    return ent


def oracle_kl(p_map, q_map, epsilon=1e-10):
    """Union-support KL(P||Q) with epsilon flooring and renormalization."""
    union = sorted(set(p_map) | set(q_map))
    p_raw = [p_map.get(tid, epsilon) for tid in union]
    q_raw = [q_map.get(tid, epsilon) for tid in union]
    sp, sq = math.fsum(p_raw), math.fsum(q_raw)
    return math.fsum(
        (p / sp) * (math.log(p / sp) - math.log(q / sq)) for p, q in zip(p_raw, q_raw)
    )


def oracle_moments(series):
    """Two-pass population moments: mean, m2, skew, raw kurtosis, hyperskew."""
    n = len(series)
    mean = math.fsum(series) / n
    m2 = math.fsum((x - mean) ** 2 for x in series) / n
    m3 = math.fsum((x - mean) ** 3 for x in series) / n
    m4 = math.fsum((x - mean) ** 4 for x in series) / n
    m5 = math.fsum((x - mean) ** 5 for x in series) / n
    if m2 < 1e-12:
        return (mean, m2, 0.0, 0.0, 0.0)
    return (mean, m2, m3 / m2**1.5, m4 / m2**2, m5 / m2**2.5)


def oracle_auc(scores, labels):
    """O(n^2) pairwise concordance with half credit for ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# random trace construction
# ---------------------------------------------------------------------------


def random_step(rng, k, out_of_window_prob=0.1):
    """One valid TokenStep with a random top-k distribution."""
    n_cands = int(rng.integers(1, k + 1))
    ids = rng.choice(10_000, size=n_cands, replace=False)
    mass = float(rng.uniform(0.5, 1.0))
    probs = rng.dirichlet(np.ones(n_cands)) * mass
    order = sorted(range(n_cands), key=lambda i: (-probs[i], ids[i]))
    top = tuple(
        TopCandidate(token_id=int(ids[i]), logprob=float(math.log(probs[i])))
        for i in order
    )
    if rng.random() < out_of_window_prob:
        outside = int(rng.integers(10_000, 20_000))
        return TokenStep(
            generated_token_id=outside,
            generated_logprob=float(math.log(rng.uniform(1e-6, (1.0 - mass) + 1e-6))),
            rank=k + 1,
            top=top,
        )
    pos = int(rng.integers(0, n_cands))
    return TokenStep(
        generated_token_id=top[pos].token_id,
        generated_logprob=top[pos].logprob,
        rank=pos + 1,
        top=top,
    )


def random_model_trace(rng, model_id, k=10, n_steps=None):
    n_steps = n_steps or int(rng.integers(1, 12))
    steps = tuple(random_step(rng, k) for _ in range(n_steps))
    return ModelTrace(model_id=model_id, steps=steps, k=k)


def random_ensemble_trace(rng, answer_id, n_models=2, k=10, equal_lengths=True):
    n_steps = int(rng.integers(1, 12)) if equal_lengths else None
    traces = tuple(
        random_model_trace(rng, f"m{m:02d}", k=k, n_steps=n_steps)
        for m in range(n_models)
    )
    label = ["fact", "hallucination", None][int(rng.integers(0, 3))]
    return EnsembleTrace(
        answer_id=answer_id,
        question_id=f"q-{answer_id}",
        variant_id="0",
        model_traces=traces,
        label=label,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_step(prob_pairs, generated_idx=0):
    """TokenStep from explicit (token_id, prob) pairs, most probable first."""
    ordered = sorted(prob_pairs, key=lambda p: (-p[1], p[0]))
    top = tuple(
        TopCandidate(token_id=tid, logprob=math.log(prob)) for tid, prob in ordered
    )
    gen_tid = prob_pairs[generated_idx][0]
    rank = next(i + 1 for i, c in enumerate(top) if c.token_id == gen_tid)
    return TokenStep(
        generated_token_id=gen_tid,
        generated_logprob=top[rank - 1].logprob,
        rank=rank,
        top=top,
    )
