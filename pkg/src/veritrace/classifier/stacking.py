"""Stacking ensemble: RF + LR + GBT base learners, logistic-regression meta.

Protocol: base learners produce stratified out-of-fold probability
predictions on the training set; the meta learner is fit on those; base
learners are then refit on the full training set. Everything is seeded, so a
fixed (data, config) pair reproduces the model byte-for-byte.
"""
from __future__ import annotations

import base64
import hashlib
import json
import pickle
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import clone
from sklearn.ensemble import RandomForestClassifier
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold

from ..errors import ModelPersistenceError, SchemaMismatchError, VeritraceError
from ..features import FeatureVector
from .dataset import LabeledDataset
from .gbt import GbtConfig, GradientBoostedTrees
from .metrics import EvalReport, build_report

MODEL_FORMAT = "veritrace-model"
MODEL_VERSION = 1
_BASE_ORDER = ("rf", "lr", "gbt")


@dataclass
class RfConfig:
    n_trees: int = 1000
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    n_jobs: int = -1

    def __post_init__(self):
        if self.n_trees < 1:
            raise VeritraceError("rf n_trees must be positive")


@dataclass
class LrConfig:
    max_iterations: int = 1000

    def __post_init__(self):
        if self.max_iterations < 1:
            raise VeritraceError("lr max_iterations must be positive")


@dataclass
class StackingConfig:
    rf: RfConfig = field(default_factory=RfConfig)
    lr: LrConfig = field(default_factory=LrConfig)
    gbt: GbtConfig = field(default_factory=GbtConfig)
    cv_folds: int = 5
    seed: int = 42

    def __post_init__(self):
        if self.cv_folds < 2:
            raise VeritraceError("cv_folds must be >= 2")

    def to_dict(self) -> dict:
        return {
            "rf": vars(self.rf),
            "lr": vars(self.lr),
            "gbt": vars(self.gbt),
            "cv_folds": self.cv_folds,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "StackingConfig":
        return cls(
            rf=RfConfig(**payload.get("rf", {})),
            lr=LrConfig(**payload.get("lr", {})),
            gbt=GbtConfig(**payload.get("gbt", {})),
            cv_folds=payload.get("cv_folds", 5),
            seed=payload.get("seed", 42),
        )


@dataclass
class TrainedModel:
    schema_id: str
    config: StackingConfig
    rf: RandomForestClassifier
    lr: LogisticRegression
    gbt: GradientBoostedTrees
    meta: LogisticRegression
    metadata: dict = field(default_factory=dict)

    def base_probabilities(self, x: np.ndarray) -> np.ndarray:
        """(N, 3) columns [rf, lr, gbt] of P(hallucination)."""
        x = np.asarray(x, dtype=np.float64)
        return np.column_stack(
            [
                self.rf.predict_proba(x)[:, 1],
                self.lr.predict_proba(x)[:, 1],
                self.gbt.predict_proba(x)[:, 1],
            ]
        )

    def predict_proba_matrix(self, x: np.ndarray) -> np.ndarray:
        """P(hallucination) per row of a raw feature matrix."""
        return self.meta.predict_proba(self.base_probabilities(x))[:, 1]


def _fresh_learners(config: StackingConfig):
    rf = RandomForestClassifier(
        n_estimators=config.rf.n_trees,
        max_depth=config.rf.max_depth,
        min_samples_split=config.rf.min_samples_split,
        min_samples_leaf=config.rf.min_samples_leaf,
        random_state=config.seed,
        n_jobs=config.rf.n_jobs,
    )
    lr = LogisticRegression(max_iter=config.lr.max_iterations, random_state=config.seed)
    gbt_cfg = GbtConfig(**{**vars(config.gbt), "seed": config.seed})
    gbt = GradientBoostedTrees(gbt_cfg)
    return {"rf": rf, "lr": lr, "gbt": gbt}


def _clone_learner(name: str, learner, config: StackingConfig):
    if name == "gbt":
        return GradientBoostedTrees(learner.config)
    return clone(learner)


def train_stacking(train: LabeledDataset, config: StackingConfig = StackingConfig()) -> TrainedModel:
    """Fit the stacking ensemble on a labeled dataset."""
    counts = train.class_counts()
    if counts["fact"] == 0 or counts["hallucination"] == 0:
        raise VeritraceError("training data must contain both classes")
    if len(train) < config.cv_folds:
        raise VeritraceError(
            f"need at least cv_folds={config.cv_folds} rows, got {len(train)}"
        )
    if min(counts.values()) < config.cv_folds:
        raise VeritraceError(
            f"each class needs >= cv_folds={config.cv_folds} rows for stratified "
            f"out-of-fold stacking, got {counts}"
        )
    x, y = train.x, train.y
    learners = _fresh_learners(config)
    folds = StratifiedKFold(n_splits=config.cv_folds, shuffle=True, random_state=config.seed)
    oof = np.zeros((len(train), len(_BASE_ORDER)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for fold_train, fold_test in folds.split(x, y):
            for col, name in enumerate(_BASE_ORDER):
                learner = _clone_learner(name, learners[name], config)
                learner.fit(x[fold_train], y[fold_train])
                oof[fold_test, col] = learner.predict_proba(x[fold_test])[:, 1]
        meta = LogisticRegression()
        meta.fit(oof, y)
        for name in _BASE_ORDER:
            learners[name].fit(x, y)
    return TrainedModel(
        schema_id=train.schema_id,
        config=config,
        rf=learners["rf"],
        lr=learners["lr"],
        gbt=learners["gbt"],
        meta=meta,
        metadata={
            "seed": config.seed,
            "n_train": len(train),
            "class_prior": float(y.mean()),
        },
    )


def predict_proba(model: TrainedModel, vector: FeatureVector) -> float:
    """Probability of hallucination for one feature vector."""
    if vector.schema_id != model.schema_id:
        raise SchemaMismatchError(
            f"vector schema {vector.schema_id} != model schema {model.schema_id}"
        )
    return float(model.predict_proba_matrix(vector.values[None, :])[0])


def predict_dataset(model: TrainedModel, data: LabeledDataset) -> np.ndarray:
    if data.schema_id != model.schema_id:
        raise SchemaMismatchError(
            f"dataset schema {data.schema_id} != model schema {model.schema_id}"
        )
    return model.predict_proba_matrix(data.x)


def evaluate(
    model: TrainedModel, test: LabeledDataset, threshold: float = 0.5, meta: dict | None = None
) -> EvalReport:
    if len(test) == 0:
        raise VeritraceError("empty test set")
    counts = test.class_counts()
    if counts["fact"] == 0 or counts["hallucination"] == 0:
        raise VeritraceError("test data must contain both classes")
    scores = predict_dataset(model, test)
    return build_report(scores, test.y, threshold=threshold, meta=meta)


def _pickle_b64(obj) -> str:
    return base64.b64encode(pickle.dumps(obj, protocol=4)).decode("ascii")


def _unpickle_b64(blob: str):
    return pickle.loads(base64.b64decode(blob.encode("ascii")))


def _payload_checksum(payload: dict) -> str:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def save_model(model: TrainedModel, path) -> None:
    """Persist as versioned, binary-safe JSON with an integrity checksum."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "schema_id": model.schema_id,
        "config": model.config.to_dict(),
        "metadata": model.metadata,
        "learners": {
            "rf": _pickle_b64(model.rf),
            "lr": _pickle_b64(model.lr),
            "meta": _pickle_b64(model.meta),
            "gbt": model.gbt.to_dict(),
        },
    }
    payload["checksum"] = _payload_checksum({k: v for k, v in payload.items()})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))


def load_model(path) -> TrainedModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelPersistenceError(f"corrupt model file: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_FORMAT:
        raise ModelPersistenceError("corrupt model file: unrecognized format")
    if payload.get("version") != MODEL_VERSION:
        raise ModelPersistenceError(
            f"unsupported model file version {payload.get('version')!r}"
        )
    checksum = payload.pop("checksum", None)
    if checksum != _payload_checksum(payload):
        raise ModelPersistenceError(
            "model file checksum mismatch (corrupt, truncated, or edited)"
        )
    learners = payload["learners"]
    try:
        model = TrainedModel(
            schema_id=payload["schema_id"],
            config=StackingConfig.from_dict(payload["config"]),
            rf=_unpickle_b64(learners["rf"]),
            lr=_unpickle_b64(learners["lr"]),
            gbt=GradientBoostedTrees.from_dict(learners["gbt"]),
            meta=_unpickle_b64(learners["meta"]),
            metadata=payload.get("metadata", {}),
        )
    except (KeyError, ValueError, pickle.UnpicklingError) as exc:
        raise ModelPersistenceError(f"corrupt model file: {exc}") from exc
    return model


def model_file_hash(path) -> str:
    """Short content hash of a persisted model, for provenance stamps."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]
