"""Two-component PCA via SVD of the mean-centered matrix.

Equivalent to eigendecomposition of the sample covariance (ddof=1); the SVD
route is numerically stabler for wide matrices. Component signs are fixed
deterministically (largest-magnitude loading positive) so repeated runs emit
byte-identical coordinates.
"""
from __future__ import annotations

import logging

import numpy as np

from ..errors import VeritraceError

logger = logging.getLogger(__name__)


def pca_projection(x: np.ndarray, components: int = 2):
    """Project rows of x onto the leading principal components.

    Returns (coords (N, components), explained_variance_ratios (components,)).
    Zero-variance input yields zero ratios with a warning instead of failing.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise VeritraceError("pca needs at least 3 rows")
    if x.shape[1] < 2:
        raise VeritraceError("pca needs at least 2 feature columns")
    if components < 1 or components > min(x.shape):
        raise VeritraceError(f"components must be in [1, {min(x.shape)}]")
    centered = x - x.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    total_var = float((s * s).sum()) / (x.shape[0] - 1)
    if total_var <= 0.0:
        logger.warning("pca input has zero variance; ratios set to 0")
        return np.zeros((x.shape[0], components)), np.zeros(components)
    # deterministic sign: flip so each component's largest-|.| loading is positive
    for i in range(components):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
            u[:, i] = -u[:, i]
    coords = u[:, :components] * s[:components]
    eigvals = (s[:components] ** 2) / (x.shape[0] - 1)
    ratios = eigvals / total_var
    return coords, ratios
