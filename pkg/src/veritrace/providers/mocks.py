"""Deterministic mock providers.

Every higher-level module tests against these; they are also wired into the
CLI for fixture-driven judging, so no test ever needs a live endpoint.
"""
from __future__ import annotations

import hashlib
import math
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ProviderError
from ..trace_model import ModelTrace, TokenStep, TopCandidate
from .config import TokenVocabulary


def _normalize(text: str) -> str:
    return " ".join(text.split()).strip().rstrip(".").lower()


class MockJudgeProvider:
    """Exact-set judge.

    ``facts`` holds statements deducible from the context; ``contradicted``
    holds statements whose registered negation is deducible. Matching is on
    normalized text, so punctuation and spacing do not matter.
    """

    def __init__(self, facts: Sequence[str] = (), contradicted: Sequence[str] = ()):
        self._facts = {_normalize(s) for s in facts}
        self._contradicted = {_normalize(s) for s in contradicted}

    def judge(self, statement: str, context: str, mode: str) -> tuple[bool, str]:
        key = _normalize(statement)
        if mode == "factual":
            hit = key in self._facts
            return hit, ("deducible from context" if hit else "not deducible from context")
        if mode == "counterfactual":
            hit = key in self._contradicted
            return hit, ("negation deducible from context" if hit else "negation not deducible")
        raise ProviderError(f"unknown judge mode {mode!r}")


class FlakyProvider:
    """Wraps a provider; the first ``fail_times`` calls raise ProviderError."""

    def __init__(self, inner, fail_times: int):
        self._inner = inner
        self._remaining = fail_times
        self.calls = 0

    def judge(self, statement: str, context: str, mode: str):
        self.calls += 1
        if self._remaining > 0:
            self._remaining -= 1
            raise ProviderError("injected transient failure")
        return self._inner.judge(statement, context, mode)


class AlwaysFailJudge:
    def __init__(self):
        self.calls = 0

    def judge(self, statement: str, context: str, mode: str):
        self.calls += 1
        raise ProviderError("injected permanent failure")


class MockDecomposer:
    """Scripted claim decomposition: a mapping or a callable per sentence."""

    def __init__(
        self,
        mapping: Optional[dict[str, list[str]]] = None,
        fn: Optional[Callable[[str], list[str]]] = None,
    ):
        self._mapping = {_normalize(k): v for k, v in (mapping or {}).items()}
        self._fn = fn

    def decompose(self, sentence: str) -> list[str]:
        key = _normalize(sentence)
        if key in self._mapping:
            return list(self._mapping[key])
        if self._fn is not None:
            return list(self._fn(sentence))
        return [sentence]


class FailingDecomposer:
    def decompose(self, sentence: str) -> list[str]:
        raise ProviderError("decomposer unavailable")


class MockChatProvider:
    """Returns scripted answers in order; raises when the script runs out."""

    def __init__(self, answers: Sequence[str]):
        self._answers = list(answers)
        self._cursor = 0

    def chat_generate(self, prompt: str, n_samples: int = 1, temperature: float = 1.0) -> list[str]:
        if n_samples < 1:
            raise ProviderError("n_samples must be >= 1")
        if self._cursor + n_samples > len(self._answers):
            raise ProviderError("mock chat script exhausted")
        out = self._answers[self._cursor : self._cursor + n_samples]
        self._cursor += n_samples
        return out


class ScriptedLogprobClient:
    """single_token_classify from a script of (token, logprob, top) entries."""

    def __init__(self, steps: Sequence[TokenStep]):
        self._steps = list(steps)
        self._cursor = 0

    def single_token_classify(self, question: str, text: str, vocab=None) -> TokenStep:
        if self._cursor >= len(self._steps):
            raise ProviderError("mock classification script exhausted")
        step = self._steps[self._cursor]
        self._cursor += 1
        return step


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class MockInferenceEngine:
    """Deterministic forced-inference engine over whitespace tokenization.

    Each answer token gets a sharply peaked distribution derived from a
    stable hash of (model_id, position, token), so traces are bit-identical
    across runs without any scripting.
    """

    def __init__(self, model_id: str, k: int = 20, vocab: Optional[TokenVocabulary] = None):
        self.model_id = model_id
        self.k = k
        self.vocab = vocab or TokenVocabulary()

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def forced_inference_trace(self, prompt: str, answer: str) -> ModelTrace:
        tokens = self.tokenize(answer)
        if not tokens:
            raise ProviderError("empty continuation")
        steps = []
        for pos, token in enumerate(tokens):
            rng = np.random.default_rng(_stable_seed(self.model_id, pos, token))
            token_id = self.vocab.id_for(token)
            others = [self.vocab.id_for(f"{token}~alt{i}") for i in range(self.k - 1)]
            p1 = float(rng.uniform(0.7, 0.95))
            tail = rng.dirichlet(np.ones(self.k - 1)) * (1.0 - p1)
            ids = [token_id] + others
            probs = np.concatenate([[p1], tail])
            order = sorted(range(len(ids)), key=lambda i: (-probs[i], ids[i]))
            top = tuple(
                TopCandidate(token_id=ids[i], logprob=float(min(0.0, math.log(probs[i]))))
                for i in order
            )
            rank = order.index(0) + 1
            steps.append(
                TokenStep(
                    generated_token_id=token_id,
                    generated_logprob=top[rank - 1].logprob,
                    rank=rank,
                    top=top,
                )
            )
        return ModelTrace(model_id=self.model_id, steps=tuple(steps), k=self.k)
