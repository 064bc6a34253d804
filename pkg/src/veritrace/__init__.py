"""veritrace: model-agnostic hallucination verification.

Token-level log-probability traces from an ensemble of language models are
turned into information-theoretic feature vectors, classified as fact vs.
hallucination, cross-checked against a database-driven factual and
counterfactual judge, arbitrated on disagreement, and ranked for selective
compute escalation.
"""
from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
