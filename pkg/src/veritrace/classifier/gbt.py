"""Gradient-boosted trees with binary logistic loss.

Histogram-based split finding on quantile-binned features; feature
subsampling happens per tree (each tree sees a seeded random fraction of the
columns). Tree growth and batch prediction run on the kernel backend
(numba by default, numpy fallback).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import VeritraceError

_MARGIN_CLIP = 36.0


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_MARGIN_CLIP, _MARGIN_CLIP)))


@dataclass
class GbtConfig:
    n_estimators: int = 5000
    learning_rate: float = 0.005
    max_depth: int = 3
    feature_subsample_per_tree: float = 0.8
    reg_lambda: float = 1.0
    max_bins: int = 64
    min_gain: float = 1e-12
    seed: int = 42

    def __post_init__(self):
        if self.n_estimators < 1 or self.max_depth < 1 or self.max_bins < 2:
            raise VeritraceError("gbt counts must be positive")
        if self.max_bins > 256:
            raise VeritraceError("max_bins must be <= 256 (uint8 bin storage)")
        if not 0.0 < self.feature_subsample_per_tree <= 1.0:
            raise VeritraceError("feature_subsample_per_tree must be in (0, 1]")
        if self.learning_rate <= 0:
            raise VeritraceError("learning_rate must be > 0")


def _bin_edges(col: np.ndarray, max_bins: int) -> np.ndarray:
    uniq = np.unique(col)
    if uniq.shape[0] <= 1:
        return np.empty(0)
    if uniq.shape[0] <= max_bins:
        return (uniq[:-1] + uniq[1:]) / 2.0
    qs = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    return np.unique(qs)


class GradientBoostedTrees:
    """Binary classifier; predict_proba returns P(class 1)."""

    def __init__(self, config: GbtConfig = GbtConfig()):
        self.config = config
        self._edges: list[np.ndarray] | None = None
        self._feat: np.ndarray | None = None  # flat per-node global feature index
        self._thr: np.ndarray | None = None
        self._val: np.ndarray | None = None
        self._offsets: np.ndarray | None = None
        self._base_margin: float = 0.0
        self.n_features_: int | None = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "GradientBoostedTrees":
        cfg = self.config
        x = np.ascontiguousarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape[0] < 2 or len(np.unique(y)) < 2:
            raise VeritraceError("gbt training needs both classes present")
        n, f = x.shape
        self.n_features_ = f
        edges = [_bin_edges(x[:, j], cfg.max_bins) for j in range(f)]
        self._edges = edges
        xb = np.empty((f, n), dtype=np.uint8)
        for j in range(f):
            xb[j] = np.searchsorted(edges[j], x[:, j], side="left").astype(np.uint8)
        prior = min(max(float(y.mean()), 1e-6), 1.0 - 1e-6)
        self._base_margin = math.log(prior / (1.0 - prior))
        margins = np.full(n, self._base_margin)
        rng = np.random.default_rng(cfg.seed)
        n_sub = max(1, int(round(cfg.feature_subsample_per_tree * f)))
        nn = 2 ** (cfg.max_depth + 1) - 1
        feat_all = np.empty(cfg.n_estimators * nn, dtype=np.int64)
        thr_all = np.empty(cfg.n_estimators * nn)
        val_all = np.empty(cfg.n_estimators * nn)
        offsets = np.arange(cfg.n_estimators + 1, dtype=np.int64) * nn
        n_bins = cfg.max_bins
        for t in range(cfg.n_estimators):
            p = _sigmoid(margins)
            g = p - y
            h = np.maximum(p * (1.0 - p), 1e-12)
            feat_idx = np.sort(rng.choice(f, size=n_sub, replace=False)).astype(np.int64)
            tree_feat, tree_bin, tree_val, node_of = _kernels.grow_tree(
                xb, feat_idx, g, h, n_bins, cfg.reg_lambda, cfg.min_gain, cfg.max_depth
            )
            tree_val = tree_val * cfg.learning_rate
            margins += tree_val[node_of]
            base = t * nn
            for node in range(nn):
                if tree_feat[node] >= 0:
                    gf = int(feat_idx[tree_feat[node]])
                    feat_all[base + node] = gf
                    thr_all[base + node] = edges[gf][tree_bin[node]]
                else:
                    feat_all[base + node] = -1
                    thr_all[base + node] = 0.0
                val_all[base + node] = tree_val[node]
        self._feat = feat_all
        self._thr = thr_all
        self._val = val_all
        self._offsets = offsets
        return self

    def decision_margin(self, x: np.ndarray) -> np.ndarray:
        if self._feat is None:
            raise VeritraceError("model not fitted")
        x = np.ascontiguousarray(x, dtype=np.float64)
        return self._base_margin + _kernels.predict_forest(
            self._feat, self._thr, self._val, self._offsets, x
        )

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """(N, 2) array of [P(class 0), P(class 1)] per row."""
        p1 = _sigmoid(self.decision_margin(x))
        return np.column_stack([1.0 - p1, p1])

    def to_dict(self) -> dict:
        if self._feat is None:
            raise VeritraceError("model not fitted")
        return {
            "config": vars(self.config),
            "base_margin": self._base_margin,
            "n_features": self.n_features_,
            "feat": self._feat.tolist(),
            "thr": self._thr.tolist(),
            "val": self._val.tolist(),
            "offsets": self._offsets.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GradientBoostedTrees":
        model = cls(GbtConfig(**payload["config"]))
        model._base_margin = float(payload["base_margin"])
        model.n_features_ = int(payload["n_features"])
        model._feat = np.asarray(payload["feat"], dtype=np.int64)
        model._thr = np.asarray(payload["thr"], dtype=np.float64)
        model._val = np.asarray(payload["val"], dtype=np.float64)
        model._offsets = np.asarray(payload["offsets"], dtype=np.int64)
        return model
