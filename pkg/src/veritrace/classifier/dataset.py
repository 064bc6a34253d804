"""Labeled feature datasets and the stratified train/test split."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ..errors import SchemaMismatchError, VeritraceError
from ..features import FeatureVector

LABEL_TO_CODE = {"fact": 0, "hallucination": 1}
CODE_TO_LABEL = {0: "fact", 1: "hallucination"}


@dataclass
class LabeledDataset:
    """Rows of (answer_id, feature values, label code) under one schema.

    Label encoding is fixed: fact=0, hallucination=1.
    """

    schema_id: str
    ids: list[str]
    x: np.ndarray  # (N, F)
    y: np.ndarray  # (N,) int
    provenance: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0] or self.x.shape[0] != len(self.ids):
            raise VeritraceError("dataset rows misaligned")
        if not self.provenance:
            self.provenance = [""] * len(self.ids)

    def __len__(self):
        return len(self.ids)

    def class_counts(self) -> dict[str, int]:
        return {
            "fact": int((self.y == 0).sum()),
            "hallucination": int((self.y == 1).sum()),
        }

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            schema_id=self.schema_id,
            ids=[self.ids[i] for i in idx],
            x=self.x[idx],
            y=self.y[idx],
            provenance=[self.provenance[i] for i in idx],
        )

    @classmethod
    def from_vectors(cls, vectors: Iterable[FeatureVector]) -> "LabeledDataset":
        ids, rows, labels = [], [], []
        schema_id: Optional[str] = None
        for v in vectors:
            if schema_id is None:
                schema_id = v.schema_id
            elif v.schema_id != schema_id:
                raise SchemaMismatchError(
                    f"mixed schema_ids in corpus: {schema_id} vs {v.schema_id}"
                )
            if v.label not in LABEL_TO_CODE:
                raise VeritraceError(
                    f"row {v.answer_id!r} has no usable label: {v.label!r}"
                )
            ids.append(v.answer_id)
            rows.append(v.values)
            labels.append(LABEL_TO_CODE[v.label])
        if not ids:
            raise VeritraceError("empty dataset")
        return cls(
            schema_id=schema_id,
            ids=ids,
            x=np.vstack(rows),
            y=np.asarray(labels, dtype=np.int64),
        )


def stratified_split(
    data: LabeledDataset, train_fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Deterministic per-class split.

    Each class contributes round(train_fraction * class_count) rows to the
    training side (half-up rounding); both sides must keep at least one row
    per class.
    """
    if not 0.0 < train_fraction < 1.0:
        raise VeritraceError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    for code in (0, 1):
        members = np.flatnonzero(data.y == code)
        if members.shape[0] < 2:
            raise VeritraceError(
                f"insufficient class support: class {CODE_TO_LABEL[code]!r} has "
                f"{members.shape[0]} rows"
            )
        n_train = int(math.floor(train_fraction * members.shape[0] + 0.5))
        if n_train == 0 or n_train == members.shape[0]:
            raise VeritraceError(
                f"insufficient class support: fraction {train_fraction} leaves an "
                f"empty side for class {CODE_TO_LABEL[code]!r}"
            )
        perm = rng.permutation(members.shape[0])
        shuffled = members[perm]
        train_idx.extend(int(i) for i in shuffled[:n_train])
        test_idx.extend(int(i) for i in shuffled[n_train:])
    train_idx.sort()
    test_idx.sort()
    return data.subset(train_idx), data.subset(test_idx)
