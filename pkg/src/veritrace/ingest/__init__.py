"""Trial parsing, prompt assets, corpus loading, and synthetic generation."""
from .datasets import load_labeled_dataset
from .prompts import render_prompt, template_ids, template_slots
from .synth import (
    PHENOTYPES,
    PhenotypeSpec,
    generate_mixture,
    generate_synthetic_traces,
)
from .trials import TrialRecord, has_results, load_trial, load_trial_directory, parse_trial

__all__ = [
    "load_labeled_dataset",
    "render_prompt",
    "template_ids",
    "template_slots",
    "PHENOTYPES",
    "PhenotypeSpec",
    "generate_mixture",
    "generate_synthetic_traces",
    "TrialRecord",
    "has_results",
    "load_trial",
    "load_trial_directory",
    "parse_trial",
]
