"""Stage-3 arbitration: fuse the database verdict with the classifier score.

Decision table (clf label = hallucination iff probability >= threshold):

    db Fact          + clf fact          -> Confirmed
    db Hallucination + clf hallucination -> FlaggedHallucination
    db Hallucination + clf fact          -> EscalatedContaminationSuspect
    db Fact          + clf hallucination -> EscalatedLogicSuspect
    db CoverageGap   + any               -> ClassifierAdjudicated (escalated)
    db JudgmentError + any               -> ClassifierAdjudicated (escalated,
                                            context flagged for database repair)

Escalations land in an append-only review queue; confirmed human labels can
be merged back into training data.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .classifier.dataset import LabeledDataset
from .errors import ReviewQueueError, VeritraceError
from .features import FeatureVector
from .judge import VerdictCategory


class FinalStatus(str, Enum):
    CONFIRMED = "Confirmed"
    FLAGGED_HALLUCINATION = "FlaggedHallucination"
    ESCALATED_CONTAMINATION_SUSPECT = "EscalatedContaminationSuspect"
    ESCALATED_LOGIC_SUSPECT = "EscalatedLogicSuspect"
    CLASSIFIER_ADJUDICATED = "ClassifierAdjudicated"


ESCALATED_STATUSES = frozenset(
    {
        FinalStatus.ESCALATED_CONTAMINATION_SUSPECT,
        FinalStatus.ESCALATED_LOGIC_SUSPECT,
        FinalStatus.CLASSIFIER_ADJUDICATED,
    }
)

HUMAN_LABELS = ("fact", "hallucination", "confusion", "confabulation", "contamination")
# fact -> 0; every hallucination mode -> 1
FEEDBACK_LABEL_CODES = {
    "fact": 0,
    "hallucination": 1,
    "confusion": 1,
    "confabulation": 1,
    "contamination": 1,
}


@dataclass(frozen=True)
class ArbitrationOutcome:
    final_status: FinalStatus
    escalate: bool
    clf_probability: float
    db_category: VerdictCategory
    note: str
    answer_id: str = ""
    instruction: Optional[dict] = None

    def to_json(self) -> dict:
        return {
            "answer_id": self.answer_id,
            "final_status": self.final_status.value,
            "escalate": self.escalate,
            "clf_probability": self.clf_probability,
            "db_category": self.db_category.value,
            "note": self.note,
            "instruction": self.instruction,
        }


def arbitrate(
    db_category: VerdictCategory,
    clf_probability: float,
    threshold: float = 0.5,
    answer_id: str = "",
) -> ArbitrationOutcome:
    """Combine the database category with the classifier probability.

    The threshold boundary is inclusive: probability exactly equal to the
    threshold counts as a hallucination label.
    """
    if not 0.0 <= clf_probability <= 1.0:
        raise VeritraceError(f"clf_probability must be in [0, 1], got {clf_probability}")
    db_category = VerdictCategory(db_category)
    clf_hallucination = clf_probability >= threshold
    clf_label = "hallucination" if clf_hallucination else "fact"
    instruction = None
    if db_category is VerdictCategory.FACT:
        if clf_hallucination:
            status = FinalStatus.ESCALATED_LOGIC_SUSPECT
            note = "database supports the answer but the classifier flags it; possible logic error"
        else:
            status = FinalStatus.CONFIRMED
            note = "database and classifier agree the answer is factual"
    elif db_category is VerdictCategory.HALLUCINATION:
        if clf_hallucination:
            status = FinalStatus.FLAGGED_HALLUCINATION
            note = "database and classifier agree the answer is a hallucination"
            instruction = {
                "action": "regenerate_with_verified_context",
                "reason": "confirmed hallucination",
            }
        else:
            status = FinalStatus.ESCALATED_CONTAMINATION_SUSPECT
            note = (
                "database contradicts the answer but its token statistics look factual; "
                "possible training-data contamination"
            )
    elif db_category in (VerdictCategory.COVERAGE_GAP, VerdictCategory.JUDGMENT_ERROR):
        status = FinalStatus.CLASSIFIER_ADJUDICATED
        note = f"database is inconclusive ({db_category.value}); classifier says {clf_label}"
        if db_category is VerdictCategory.JUDGMENT_ERROR:
            note += "; context document flagged for database repair"
            instruction = {"action": "repair_context_document", "reason": "database self-contradiction"}
    else:
        raise VeritraceError(f"db category {db_category.value!r} cannot be arbitrated")
    return ArbitrationOutcome(
        final_status=status,
        escalate=status in ESCALATED_STATUSES,
        clf_probability=clf_probability,
        db_category=db_category,
        note=note,
        answer_id=answer_id,
        instruction=instruction,
    )


# ---------------------------------------------------------------------------
# Review queue + feedback store: one append-only line-delimited JSON log with
# tagged record types, indexed in memory.
# ---------------------------------------------------------------------------


@dataclass
class ReviewItem:
    item_id: str
    answer_id: str
    final_status: str
    clf_probability: float
    db_category: str
    note: str
    label: str  # "pending" until resolved
    timestamp: str


@dataclass
class FeedbackRecord:
    item_id: str
    answer_id: str
    label: str
    timestamp: str


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


class ReviewQueue:
    """Durable escalation queue; enqueue is idempotent per answer_id."""

    def __init__(self, path, clock: Callable[[], str] = _utcnow):
        self.path = Path(path)
        self._clock = clock
        self._items: dict[str, ReviewItem] = {}
        self._by_answer: dict[str, str] = {}
        self._feedback: dict[str, FeedbackRecord] = {}
        if self.path.exists():
            self._replay()

    def _replay(self):
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    rec = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise ReviewQueueError(f"corrupt queue log at line {lineno}: {exc}") from exc
                kind = rec.get("type")
                if kind == "enqueue":
                    item = ReviewItem(**{k: rec[k] for k in (
                        "item_id", "answer_id", "final_status", "clf_probability",
                        "db_category", "note", "label", "timestamp")})
                    self._items[item.item_id] = item
                    self._by_answer[item.answer_id] = item.item_id
                elif kind == "resolve":
                    fb = FeedbackRecord(**{k: rec[k] for k in (
                        "item_id", "answer_id", "label", "timestamp")})
                    self._feedback[fb.item_id] = fb
                    if fb.item_id in self._items:
                        self._items[fb.item_id].label = fb.label
                else:
                    raise ReviewQueueError(f"unknown queue record type {kind!r} at line {lineno}")

    def _append(self, record: dict):
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def __len__(self):
        return len(self._items)

    def items(self) -> list[ReviewItem]:
        return sorted(self._items.values(), key=lambda i: i.item_id)

    def pending(self) -> list[ReviewItem]:
        return [i for i in self.items() if i.label == "pending"]

    def get(self, item_id: str) -> ReviewItem:
        if item_id not in self._items:
            raise ReviewQueueError(f"unknown review item {item_id!r}")
        return self._items[item_id]

    def enqueue(self, outcome: ArbitrationOutcome, answer_id: str = "") -> ReviewItem:
        """Add an escalated outcome; repeated enqueues return the existing item."""
        if not outcome.escalate:
            raise ReviewQueueError(
                f"outcome {outcome.final_status.value} is not escalated; nothing to review"
            )
        answer_id = answer_id or outcome.answer_id
        if not answer_id:
            raise ReviewQueueError("an answer_id is required to enqueue")
        if answer_id in self._by_answer:
            return self._items[self._by_answer[answer_id]]
        item = ReviewItem(
            item_id=f"rev-{len(self._items):06d}",
            answer_id=answer_id,
            final_status=outcome.final_status.value,
            clf_probability=outcome.clf_probability,
            db_category=outcome.db_category.value,
            note=outcome.note,
            label="pending",
            timestamp=self._clock(),
        )
        self._append({"type": "enqueue", **vars(item)})
        self._items[item.item_id] = item
        self._by_answer[answer_id] = item.item_id
        return item

    def resolve(self, item_id: str, label: str) -> FeedbackRecord:
        """Record the human label for a pending item; one resolution only."""
        if label not in HUMAN_LABELS:
            raise ReviewQueueError(f"label must be one of {HUMAN_LABELS}, got {label!r}")
        item = self.get(item_id)
        if item.label != "pending":
            raise ReviewQueueError(f"item {item_id} already resolved as {item.label!r}")
        record = FeedbackRecord(
            item_id=item_id,
            answer_id=item.answer_id,
            label=label,
            timestamp=self._clock(),
        )
        self._append({"type": "resolve", **vars(record)})
        self._feedback[item_id] = record
        item.label = label
        return record

    def feedback(self) -> list[FeedbackRecord]:
        return sorted(self._feedback.values(), key=lambda r: r.item_id)


def merge_feedback(
    queue: ReviewQueue,
    dataset: LabeledDataset,
    vectors_by_answer: dict[str, FeatureVector],
) -> LabeledDataset:
    """Append human-labeled rows to a dataset.

    Labels map fact -> 0 and every hallucination mode -> 1; merged rows carry
    provenance "human_feedback". Re-merging is idempotent (rows already
    present by answer_id are skipped).
    """
    existing = set(dataset.ids)
    ids = list(dataset.ids)
    rows = [dataset.x]
    labels = list(dataset.y)
    provenance = list(dataset.provenance)
    for record in queue.feedback():
        if record.answer_id in existing:
            continue
        vector = vectors_by_answer.get(record.answer_id)
        if vector is None:
            raise VeritraceError(
                f"no feature vector available for reviewed answer {record.answer_id!r}"
            )
        if vector.schema_id != dataset.schema_id:
            raise VeritraceError(
                f"feedback vector schema {vector.schema_id} != dataset schema {dataset.schema_id}"
            )
        ids.append(record.answer_id)
        rows.append(vector.values[None, :])
        labels.append(FEEDBACK_LABEL_CODES[record.label])
        provenance.append("human_feedback")
        existing.add(record.answer_id)
    return LabeledDataset(
        schema_id=dataset.schema_id,
        ids=ids,
        x=np.vstack(rows),
        y=np.asarray(labels, dtype=np.int64),
        provenance=provenance,
    )
