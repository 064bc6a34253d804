"""Provider configuration and the token-string vocabulary."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from ..errors import VeritraceError


@dataclass(frozen=True)
class ProviderConfig:
    """Connection settings for one endpoint.

    ``auth_env`` names the environment variable holding the credential; the
    secret itself is read at call time and never stored or serialized.
    """

    endpoint: str
    model: str
    auth_env: str = ""
    timeout: float = 30.0
    retries: int = 3
    backoff: float = 0.25
    top_logprobs: int = 20

    def __post_init__(self):
        if self.timeout <= 0:
            raise VeritraceError("timeout must be > 0")
        if self.retries < 0:
            raise VeritraceError("retries must be >= 0")
        if not 1 <= self.top_logprobs <= 50:
            raise VeritraceError("top_logprobs must be in [1, 50]")

    def auth_token(self) -> Optional[str]:
        if not self.auth_env:
            return None
        return os.environ.get(self.auth_env)

    def to_dict(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "model": self.model,
            "auth_env": self.auth_env,
            "timeout": self.timeout,
            "retries": self.retries,
            "backoff": self.backoff,
            "top_logprobs": self.top_logprobs,
        }


class TokenVocabulary:
    """Stable string -> integer token-id assignment for API ingestion.

    Engines expose token strings, not ids; ids are assigned in first-seen
    order, so one shared vocabulary per extraction run keeps ids consistent
    across models and variants.
    """

    def __init__(self):
        self._ids: dict[str, int] = {}

    def id_for(self, token: str) -> int:
        if token not in self._ids:
            self._ids[token] = len(self._ids)
        return self._ids[token]

    def __len__(self):
        return len(self._ids)
