"""Loading labeled feature corpora from disk."""
from __future__ import annotations

import logging

from ..classifier.dataset import LabeledDataset
from ..errors import VeritraceError
from ..features import read_feature_corpus

logger = logging.getLogger(__name__)


def load_labeled_dataset(path) -> LabeledDataset:
    """Read a feature corpus file into a LabeledDataset.

    Every row must carry a label and all rows must share one schema_id.
    """
    vectors = read_feature_corpus(path)
    if not vectors:
        raise VeritraceError(f"empty dataset: {path}")
    for v in vectors:
        if v.label is None:
            raise VeritraceError(f"row {v.answer_id!r} is unlabeled")
    data = LabeledDataset.from_vectors(vectors)
    counts = data.class_counts()
    logger.info(
        "loaded %d rows from %s (fact=%d, hallucination=%d)",
        len(data), path, counts["fact"], counts["hallucination"],
    )
    return data
