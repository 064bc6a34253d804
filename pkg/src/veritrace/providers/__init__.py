"""Provider contracts: live OpenAI-compatible client plus deterministic mocks."""
from .config import ProviderConfig, TokenVocabulary
from .http_client import OpenAiCompatClient, ProviderCapabilities
from .mocks import (
    AlwaysFailJudge,
    FailingDecomposer,
    FlakyProvider,
    MockChatProvider,
    MockDecomposer,
    MockInferenceEngine,
    MockJudgeProvider,
    ScriptedLogprobClient,
)

__all__ = [
    "ProviderConfig",
    "TokenVocabulary",
    "OpenAiCompatClient",
    "ProviderCapabilities",
    "AlwaysFailJudge",
    "FailingDecomposer",
    "FlakyProvider",
    "MockChatProvider",
    "MockDecomposer",
    "MockInferenceEngine",
    "MockJudgeProvider",
    "ScriptedLogprobClient",
]
