"""OpenAI-compatible HTTP client with logprob extraction.

One wire dialect is supported: ``/chat/completions`` with logprob options
(plus the legacy ``/completions`` echo mode for continuation scoring).
Other engines integrate offline through the trace file format instead.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import requests

from ..errors import CapabilityError, ProviderError
from ..trace_model import ModelTrace, TokenStep, TopCandidate
from .config import ProviderConfig, TokenVocabulary

logger = logging.getLogger(__name__)


@dataclass
class ProviderCapabilities:
    chat: bool = False
    top_logprobs: bool = False
    continuation_scoring: bool = False


def _step_from_top_logprobs(
    vocab: TokenVocabulary, token: str, logprob: float, top: Sequence[tuple[str, float]]
) -> TokenStep:
    """Build a TokenStep from an API top-logprobs entry.

    The generated token is injected into the candidate set if the window
    missed it; rank falls back to the k+1 sentinel when it is absent.
    """
    entries = {t: lp for t, lp in top}
    k = max(len(entries), 1)
    entries.setdefault(token, logprob)
    candidates = sorted(
        ((vocab.id_for(t), min(0.0, lp)) for t, lp in entries.items()),
        key=lambda pair: (-pair[1], pair[0]),
    )
    token_id = vocab.id_for(token)
    rank = k + 1
    for i, (tid, _) in enumerate(candidates):
        if tid == token_id:
            rank = i + 1
            break
    return TokenStep(
        generated_token_id=token_id,
        generated_logprob=min(0.0, logprob),
        rank=rank,
        top=tuple(TopCandidate(token_id=tid, logprob=lp) for tid, lp in candidates),
    )


class OpenAiCompatClient:
    """Synchronous client; retries transport failures with exponential backoff."""

    def __init__(self, config: ProviderConfig, session: Optional[requests.Session] = None,
                 transcript=None):
        self.config = config
        self._session = session or requests.Session()
        self._transcript = transcript

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = self.config.auth_token()
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        url = self.config.endpoint.rstrip("/") + path
        attempts = self.config.retries + 1
        last_error: Optional[str] = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.config.backoff * (2 ** (attempt - 1)))
            try:
                response = self._session.post(
                    url, json=payload, headers=self._headers(), timeout=self.config.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
                logger.debug("attempt %d/%d failed: %s", attempt + 1, attempts, exc)
                continue
            if response.status_code >= 500:
                last_error = f"server error {response.status_code}"
                continue
            if response.status_code >= 400:
                raise ProviderError(
                    f"{url} rejected the request: {response.status_code} {response.text[:200]}"
                )
            try:
                return response.json()
            except json.JSONDecodeError as exc:
                raise ProviderError(f"{url} returned invalid JSON: {exc}") from exc
        raise ProviderError(f"{url} failed after {attempts} attempts: {last_error}")

    def _log(self, kind: str, prompt, response_text: str, latency: float):
        if self._transcript is None:
            return
        record = {
            "kind": kind,
            "model": self.config.model,
            "prompt": prompt,
            "response": response_text,
            "latency_s": round(latency, 6),
        }
        self._transcript.write(json.dumps(record, separators=(",", ":")) + "\n")

    def chat_generate(self, prompt: str, n_samples: int = 1, temperature: float = 1.0) -> list[str]:
        """n independent chat completions, order preserved."""
        if n_samples < 1:
            raise ProviderError("n_samples must be >= 1")
        answers = []
        for _ in range(n_samples):
            t0 = time.monotonic()
            payload = {
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": temperature,
            }
            body = self._post("/chat/completions", payload)
            try:
                text = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"malformed chat response: {exc}") from exc
            self._log("chat", prompt, text, time.monotonic() - t0)
            answers.append(text)
        return answers

    def single_token_classify(
        self, question: str, text: str, vocab: TokenVocabulary,
        system: str = "Answer with a single token: yes or no.",
    ) -> TokenStep:
        """First generated step of a one-token yes/no classification."""
        payload = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": f"{question}\n\n{text}"},
            ],
            "max_tokens": 1,
            "temperature": 0.0,
            "logprobs": True,
            "top_logprobs": self.config.top_logprobs,
        }
        t0 = time.monotonic()
        body = self._post("/chat/completions", payload)
        try:
            content = body["choices"][0]["logprobs"]["content"]
            entry = content[0]
            top = [(t["token"], float(t["logprob"])) for t in entry["top_logprobs"]]
            step = _step_from_top_logprobs(vocab, entry["token"], float(entry["logprob"]), top)
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("logprobs not returned by endpoint") from exc
        self._log("classify", question, entry["token"], time.monotonic() - t0)
        return step

    def forced_inference_trace(self, prompt: str, answer: str, vocab: TokenVocabulary) -> ModelTrace:
        """Per-position logprobs over a supplied continuation via echo mode."""
        if not answer:
            raise ProviderError("empty continuation")
        payload = {
            "model": self.config.model,
            "prompt": prompt + answer,
            "max_tokens": 0,
            "echo": True,
            "logprobs": self.config.top_logprobs,
        }
        t0 = time.monotonic()
        body = self._post("/completions", payload)
        try:
            lp = body["choices"][0]["logprobs"]
            tokens = lp["tokens"]
            token_logprobs = lp["token_logprobs"]
            top_logprobs = lp["top_logprobs"]
            offsets = lp["text_offset"]
        except (KeyError, IndexError, TypeError) as exc:
            raise CapabilityError(
                "endpoint does not expose per-position logprobs over a supplied continuation"
            ) from exc
        steps = []
        for token, logprob, top, offset in zip(tokens, token_logprobs, top_logprobs, offsets):
            if offset < len(prompt) or logprob is None:
                continue  # prompt region, or the first token of the document
            top_pairs = [(t, float(v)) for t, v in (top or {}).items()]
            steps.append(_step_from_top_logprobs(vocab, token, float(logprob), top_pairs))
        if not steps:
            raise CapabilityError("no scored continuation positions returned")
        self._log("forced_inference", prompt, f"<{len(steps)} steps>", time.monotonic() - t0)
        return ModelTrace(
            model_id=self.config.model, steps=tuple(steps), k=self.config.top_logprobs
        )

    def probe_capabilities(self) -> ProviderCapabilities:
        """Feature-flag the endpoint up front instead of failing mid-run."""
        caps = ProviderCapabilities()
        vocab = TokenVocabulary()
        try:
            self.chat_generate("ping", n_samples=1)
            caps.chat = True
        except ProviderError:
            return caps
        try:
            self.single_token_classify("Answer yes or no: is water wet?", "", vocab)
            caps.top_logprobs = True
        except ProviderError:
            pass
        try:
            self.forced_inference_trace("The sky is", " blue", vocab)
            caps.continuation_scoring = True
        except ProviderError:
            pass
        return caps
