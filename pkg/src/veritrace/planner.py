"""Selective-intervention planning over hallucination-probability rankings.

Items are ranked by predicted hallucination probability; percentile bins
report accuracy as a function of risk, and an intervention plan escalates
the top fraction (majority voting over extra samples, web verification, or
human review) while accepting the rest. All tie-breaks are by id ascending
so plans replay identically.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import VeritraceError

ACTION_KINDS = ("majority_vote", "human_review", "web_verify", "accept")


@dataclass(frozen=True)
class RankedItem:
    id: str
    hallucination_probability: float
    correct: Optional[bool] = None
    candidates: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.hallucination_probability <= 1.0:
            raise VeritraceError(
                f"probability must be in [0, 1], got {self.hallucination_probability}"
            )


def percentile_bins(items: Sequence[RankedItem], n_bins: int) -> list[int]:
    """Bin index per input item, ascending by probability.

    After sorting by (probability, id), bin b holds sorted positions
    [floor(N*b/B), floor(N*(b+1)/B)); sizes differ by at most one.
    """
    n = len(items)
    if n_bins < 1:
        raise VeritraceError("n_bins must be >= 1")
    if n < n_bins:
        raise VeritraceError(f"need at least {n_bins} items for {n_bins} bins, got {n}")
    order = sorted(range(n), key=lambda i: (items[i].hallucination_probability, items[i].id))
    boundaries = [n * b // n_bins for b in range(n_bins + 1)]
    bins = [0] * n
    for b in range(n_bins):
        for pos in range(boundaries[b], boundaries[b + 1]):
            bins[order[pos]] = b
    return bins


def accuracy_by_bin(items: Sequence[RankedItem], n_bins: int) -> list[dict]:
    """Rows of {bin, count, accuracy} over percentile bins."""
    for item in items:
        if item.correct is None:
            raise VeritraceError(f"item {item.id!r} is missing its correctness flag")
    bins = percentile_bins(items, n_bins)
    counts = [0] * n_bins
    correct = [0] * n_bins
    for item, b in zip(items, bins):
        counts[b] += 1
        if item.correct:
            correct[b] += 1
    return [
        {"bin": b, "count": counts[b], "accuracy": correct[b] / counts[b]}
        for b in range(n_bins)
    ]


def accuracy_table_csv(rows: Sequence[dict]) -> str:
    out = ["bin,count,accuracy"]
    for row in rows:
        out.append(f"{row['bin']},{row['count']},{row['accuracy']!r}")
    return "\n".join(out) + "\n"


def select_top_fraction(items: Sequence[RankedItem], fraction: float) -> list[str]:
    """Ids of the ceil(fraction*N) highest-probability items, descending."""
    if not items:
        raise VeritraceError("no items to select from")
    if not 0.0 < fraction <= 1.0:
        raise VeritraceError(f"fraction must be in (0, 1], got {fraction}")
    n_select = math.ceil(fraction * len(items))
    ranked = sorted(items, key=lambda i: (-i.hallucination_probability, i.id))
    return [item.id for item in ranked[:n_select]]


def majority_vote(answers: Sequence[str]) -> str:
    """Most frequent answer; ties resolve to the earliest first occurrence."""
    if not answers:
        raise VeritraceError("majority_vote needs at least one answer")
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for i, ans in enumerate(answers):
        counts[ans] = counts.get(ans, 0) + 1
        if ans not in first_seen:
            first_seen[ans] = i
    best = max(counts, key=lambda a: (counts[a], -first_seen[a]))
    return best


@dataclass(frozen=True)
class Action:
    kind: str
    samples: int = 0

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise VeritraceError(f"unknown action kind {self.kind!r}")
        if self.kind == "majority_vote" and self.samples < 1:
            raise VeritraceError("majority_vote needs samples >= 1")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "majority_vote":
            out["samples"] = self.samples
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "Action":
        return cls(kind=payload["kind"], samples=payload.get("samples", 0))


@dataclass
class InterventionPlan:
    threshold_fraction: float
    action: Action
    selected: list[str]  # escalated ids, highest probability first
    accepted: list[str]
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "threshold_fraction": self.threshold_fraction,
            "action": self.action.to_json(),
            "selected": self.selected,
            "accepted": self.accepted,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "InterventionPlan":
        return cls(
            threshold_fraction=payload["threshold_fraction"],
            action=Action.from_json(payload["action"]),
            selected=list(payload["selected"]),
            accepted=list(payload["accepted"]),
            provenance=dict(payload.get("provenance", {})),
        )


def build_plan(
    items: Sequence[RankedItem],
    fraction: float,
    action: Action,
    provenance: Optional[dict] = None,
) -> InterventionPlan:
    """Escalate the top fraction with the given action; accept the rest."""
    if action.kind == "accept":
        raise VeritraceError("the escalation action cannot be 'accept'")
    selected = select_top_fraction(items, fraction)
    chosen = set(selected)
    accepted = sorted(item.id for item in items if item.id not in chosen)
    return InterventionPlan(
        threshold_fraction=fraction,
        action=action,
        selected=selected,
        accepted=accepted,
        provenance=provenance or {},
    )


def save_plan(plan: InterventionPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_plan(path) -> InterventionPlan:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return InterventionPlan.from_json(payload)
