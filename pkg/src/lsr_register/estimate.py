"""Affine fitting: least squares on correspondences, resolution-scaled
RMSE, and a small RANSAC baseline for comparisons.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .features import CorrespondenceSet
from .imagecore import AffineTransform

DEFAULT_RANSAC_TOL = 1.0
DEFAULT_RANSAC_ITERATIONS = 1000
_RANK_THRESHOLD = 1e-9


class InsufficientCorrespondencesError(ValueError):
    pass


class DegenerateConfigurationError(ValueError):
    pass


class RansacFailedError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitResult:
    """Fitted transform with per-correspondence Euclidean residuals."""

    transform: AffineTransform
    residuals: np.ndarray
    rmse: float

    def __post_init__(self):
        res = np.asarray(self.residuals, dtype=np.float64).ravel().copy()
        res.flags.writeable = False
        object.__setattr__(self, "residuals", res)
        if res.size:
            expect = math.sqrt(float(np.mean(res ** 2)))
            if abs(expect - self.rmse) > 1e-12 * max(1.0, expect):
                raise ValueError("rmse inconsistent with residuals")

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.to_dict(),
            "rmse": self.rmse,
            "residuals": [float(r) for r in self.residuals],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _solve3(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a 3x3 system for a (3, m) right-hand side by Gaussian
    elimination with partial pivoting.  Raises on a near-singular pivot.
    """
    a = np.asarray(mat, dtype=np.float64).copy()
    b = np.asarray(rhs, dtype=np.float64).reshape(3, -1).copy()
    for col in range(3):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[pivot, col]) < _RANK_THRESHOLD:
            raise DegenerateConfigurationError("degenerate configuration")
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            b[[col, pivot]] = b[[pivot, col]]
        for row in range(col + 1, 3):
            f = a[row, col] / a[col, col]
            a[row, col:] -= f * a[col, col:]
            b[row] -= f * b[col]
    x = np.zeros_like(b)
    for row in (2, 1, 0):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def _normalizer(points: np.ndarray) -> AffineTransform:
    """Similarity map centering the points with mean distance sqrt(2)."""
    mean = points.mean(axis=0)
    dist = float(np.mean(np.linalg.norm(points - mean, axis=1)))
    s = math.sqrt(2.0) / dist if dist > 0 else 1.0
    return AffineTransform(a=s, b=0.0, tx=-s * mean[0], c=0.0, d=s, ty=-s * mean[1])


def _residuals(t: AffineTransform, cs: CorrespondenceSet) -> np.ndarray:
    return np.linalg.norm(t.apply(cs.ref_points) - cs.sensed_points, axis=1)


def fit_affine_lsm(cs: CorrespondenceSet) -> FitResult:
    """Least-squares affine fit minimizing sum ||T(p_k) - q_k||^2.

    The x and y output coordinates decouple into two 3-unknown normal
    systems sharing one design matrix.  Points are similarity-normalized
    first so the rank test is scale-independent.
    """
    n = len(cs)
    if n < 3:
        raise InsufficientCorrespondencesError("insufficient correspondences")
    np_map = _normalizer(cs.ref_points)
    nq_map = _normalizer(cs.sensed_points)
    p = np_map.apply(cs.ref_points)
    q = nq_map.apply(cs.sensed_points)
    x, y = p[:, 0], p[:, 1]
    design = np.array([
        [float(x @ x), float(x @ y), float(x.sum())],
        [float(x @ y), float(y @ y), float(y.sum())],
        [float(x.sum()), float(y.sum()), float(n)],
    ])
    rhs = np.column_stack([
        [float(x @ q[:, 0]), float(y @ q[:, 0]), float(q[:, 0].sum())],
        [float(x @ q[:, 1]), float(y @ q[:, 1]), float(q[:, 1].sum())],
    ])
    coeffs = _solve3(design, rhs)
    fitted_norm = AffineTransform(
        a=coeffs[0, 0], b=coeffs[1, 0], tx=coeffs[2, 0],
        c=coeffs[0, 1], d=coeffs[1, 1], ty=coeffs[2, 1],
    )
    transform = nq_map.inverse().compose(fitted_norm).compose(np_map)
    res = _residuals(transform, cs)
    return FitResult(transform, res, math.sqrt(float(np.mean(res ** 2))))


def scaled_rmse(fit: FitResult, level: int) -> float:
    """Resolution-compensated error: 2^level times the fit's pixel RMSE."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    return float(2 ** level) * fit.rmse


def _exact_affine(p: np.ndarray, q: np.ndarray) -> AffineTransform:
    """Affine through three point pairs (raises if the p's are collinear)."""
    design = np.column_stack([p, np.ones(3)])
    sol = _solve3(design, q)
    return AffineTransform(
        a=sol[0, 0], b=sol[1, 0], tx=sol[2, 0],
        c=sol[0, 1], d=sol[1, 1], ty=sol[2, 1],
    )


def fit_affine_ransac(
    cs: CorrespondenceSet,
    inlier_tol: float = DEFAULT_RANSAC_TOL,
    iterations: int = DEFAULT_RANSAC_ITERATIONS,
    seed: int = 0,
) -> tuple[FitResult, np.ndarray]:
    """Minimal 3-sample consensus loop with a final least-squares refit.

    Deterministic under ``seed``; the winning consensus is the largest one,
    with earlier trials breaking ties.  Raises RansacFailedError when no
    trial reaches a consensus of three.
    """
    n = len(cs)
    if n < 3:
        raise InsufficientCorrespondencesError("insufficient correspondences")
    if inlier_tol <= 0 or iterations < 1:
        raise ValueError("inlier_tol must be positive and iterations >= 1")
    rng = np.random.default_rng(seed)
    best_mask: np.ndarray | None = None
    best_size = 2
    for _ in range(iterations):
        pick = rng.choice(n, size=3, replace=False)
        try:
            candidate = _exact_affine(cs.ref_points[pick], cs.sensed_points[pick])
        except DegenerateConfigurationError:
            continue
        mask = _residuals(candidate, cs) <= inlier_tol
        size = int(mask.sum())
        if size > best_size:
            best_size, best_mask = size, mask
    if best_mask is None:
        raise RansacFailedError("ransac failed")
    fit = fit_affine_lsm(cs.subset(np.flatnonzero(best_mask)))
    res = _residuals(fit.transform, cs)
    full = FitResult(fit.transform, res, math.sqrt(float(np.mean(res ** 2))))
    return full, best_mask
