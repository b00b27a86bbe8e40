"""Covariance, symmetric eigendecomposition, knee detection, and PC significance.

The eigen spectrum of a segment cluster's covariance matrix is the raw
material of the boundary inference: a small number of dominant
eigenvalues means the byte-value variance is systematic rather than
random, and the corresponding loadings say which byte positions vary
together.

Significance of a principal component is decided against the threshold

    q_s = min(K(lambda), lambda_0 / 10, scree_min)

where K(lambda) is the eigenvalue at the knee of the scree curve (taken
as +inf when no knee exists, so the term drops out of the min).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import AnalysisParams, UsageError

# sensitivity of the knee detector; scree curves are short, so no smoothing
KNEEDLE_SENSITIVITY = 1.0

# eigenvalues within this relative distance of zero are round-off on a
# rank-deficient covariance and get clamped to 0 (a stray 1e-14 must not
# count as a significant PC when the knee pushes q_s to 0)
_EIG_CLAMP_REL = 1e-9


@dataclass(frozen=True)
class PcaResult:
    """Eigen spectrum of one cluster's covariance matrix.

    eigenvalues  descending
    loadings     row i is the unit eigenvector of eigenvalues[i]
    q_s          significance threshold (None until computed)
    knee         index into eigenvalues, or None
    n_sig        number of eigenvalues strictly above q_s
    """

    eigenvalues: np.ndarray
    loadings: np.ndarray
    q_s: Optional[float] = None
    knee: Optional[int] = None
    n_sig: int = 0


def covariance(X: np.ndarray) -> np.ndarray:
    """Sample covariance of the rows of X (denominator rows-1)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise UsageError("covariance needs a 2-d matrix with at least 2 rows")
    centered = X - X.mean(axis=0)
    return centered.T @ centered / (X.shape[0] - 1)


def eig_sym(C: np.ndarray) -> PcaResult:
    """Eigendecomposition of a symmetric matrix, sorted by descending eigenvalue.

    Loading signs are normalized so the largest-magnitude component of
    each eigenvector is positive.  Negative eigenvalues within round-off
    of zero are clamped to 0.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise UsageError("eig_sym needs a square matrix")
    if not np.allclose(C, C.T, atol=1e-9):
        raise UsageError("eig_sym needs a symmetric matrix (within 1e-9)")

    lam, vecs = np.linalg.eigh(C)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    loadings = vecs[:, order].T

    clamp = _EIG_CLAMP_REL * max(1.0, float(abs(lam[0])))
    lam = np.where(np.abs(lam) <= clamp, 0.0, lam)

    for i in range(loadings.shape[0]):
        k = int(np.argmax(np.abs(loadings[i])))
        if loadings[i, k] < 0:
            loadings[i] = -loadings[i]
    return PcaResult(eigenvalues=lam, loadings=loadings)


def kneedle(values) -> Optional[int]:
    """Knee index of a descending positive curve, or None.

    Kneedle with sensitivity 1: x and y normalized to [0,1], difference
    curve d = (1-x) - y for decreasing data; the knee is the maximum of d
    provided it exceeds the sensitivity threshold S/(n-1).
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if n < 3:
        return None
    span = v[0] - v[-1]
    if span <= 0 or v.max() == v.min():
        return None
    x = np.arange(n) / (n - 1)
    y = (v - v.min()) / (v.max() - v.min())
    d = (1.0 - x) - y
    knee = int(np.argmax(d))
    threshold = KNEEDLE_SENSITIVITY / (n - 1)
    return knee if d[knee] > threshold else None


def significance_threshold(eigenvalues) -> float:
    """q_s = min(knee eigenvalue, lambda_0/10, scree_min)."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise UsageError("empty eigenvalue list")
    params = AnalysisParams()
    knee = kneedle(lam)
    knee_value = float(lam[knee]) if knee is not None else np.inf
    return float(min(knee_value, lam[0] / 10.0, params.scree_min))


def analyze_spectrum(eigenvalues, loadings=None, params: AnalysisParams = AnalysisParams()) -> PcaResult:
    """Attach q_s, knee, and the significant-PC count to an eigen spectrum."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        raise UsageError("empty eigenvalue list")
    knee = kneedle(lam)
    knee_value = float(lam[knee]) if knee is not None else np.inf
    q_s = float(min(knee_value, lam[0] / 10.0, params.scree_min))
    n_sig = int(np.sum(lam > q_s))
    if loadings is None:
        loadings = np.empty((0, lam.size))
    return PcaResult(eigenvalues=lam, loadings=np.asarray(loadings, dtype=float),
                     q_s=q_s, knee=knee, n_sig=n_sig)


def pca_prerequisites(eigenvalues, params: AnalysisParams = AnalysisParams()) -> bool:
    """Whether a cluster's variance is concentrated enough for interpretation.

    Passes iff the number of significant PCs does not exceed
    min(max_principals, dim * principal_ratio).
    """
    result = analyze_spectrum(eigenvalues, params=params)
    bound = min(params.max_principals, result.eigenvalues.size * params.principal_ratio)
    return result.n_sig <= bound
