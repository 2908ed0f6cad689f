"""Geometrical outlier removal for index-paired correspondence sets.

Every directed edge (i, j) classifies each third point k by which side of
the edge it lies on.  A correct correspondence set under an orientation-
preserving affine transform classifies identically in both images, so the
point with the largest accumulated classification disparity is removed,
repeatedly, until every classification agrees.

Side classifications are signs of 2x2 determinants.  They are computed
with a floating-point fast path guarded by a forward error bound; entries
too close to zero to be certain are re-evaluated in exact rational
arithmetic, so no sign decision ever depends on roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .features import CorrespondenceSet

# Error-bound coefficient for the 2x2 orientation determinant computed from
# coordinate differences: |det_float - det_exact| < C * (|t1| + |t2|) where
# t1, t2 are the two product terms.  C = (3 + 16u) * u with u = 2^-53.
_ERRBOUND_C = (3.0 + 16.0 * 2.0 ** -53) * 2.0 ** -53

_stats = {"sign_evals": 0}


def sign_evaluation_count() -> int:
    """Total side-classification determinants evaluated so far (test hook)."""
    return _stats["sign_evals"]


def _edge_sign_exact(ax, ay, bx, by, cx, cy) -> int:
    det = (Fraction(bx) - Fraction(ax)) * (Fraction(cy) - Fraction(ay)) - (
        Fraction(by) - Fraction(ay)
    ) * (Fraction(cx) - Fraction(ax))
    return (det > 0) - (det < 0)


def edge_sign(a, b, c) -> int:
    """Side of point ``c`` relative to the directed edge ``a`` -> ``b``.

    Returns +1 / -1 / 0 for the sign of the homogeneous 3x3 determinant
    with columns (a, b, c); the result is exact for any float inputs.
    """
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    cx, cy = float(c[0]), float(c[1])
    _stats["sign_evals"] += 1
    detleft = (bx - ax) * (cy - ay)
    detright = (by - ay) * (cx - ax)
    det = detleft - detright
    detsum = abs(detleft) + abs(detright)
    if abs(det) >= _ERRBOUND_C * detsum:
        return (det > 0) - (det < 0)
    return _edge_sign_exact(ax, ay, bx, by, cx, cy)


def _sign_block(pts: np.ndarray, i: int) -> np.ndarray:
    """Signs of det(p_i -> p_j, p_k) for all (j, k), exact like edge_sign.

    Entries with j = k, j = i, or k = i are not classifications (the diff
    tensor zeroes them), so they skip the exact-arithmetic fallback.
    """
    v = pts - pts[i]
    detleft = np.outer(v[:, 0], v[:, 1])
    detright = np.outer(v[:, 1], v[:, 0])
    det = detleft - detright
    detsum = np.abs(detleft) + np.abs(detright)
    signs = np.sign(det).astype(np.int8)
    _stats["sign_evals"] += det.size
    uncertain = np.abs(det) < _ERRBOUND_C * detsum
    np.fill_diagonal(uncertain, False)
    uncertain[i, :] = False
    uncertain[:, i] = False
    for j, k in np.argwhere(uncertain):
        signs[j, k] = _edge_sign_exact(
            pts[i, 0], pts[i, 1], pts[j, 0], pts[j, 1], pts[k, 0], pts[k, 1]
        )
    return signs


@dataclass(frozen=True)
class SignTable:
    """Per-image side classifications sign_x[i, j, k] in {-1, 0, +1}."""

    sign_p: np.ndarray
    sign_q: np.ndarray

    @property
    def n(self) -> int:
        return self.sign_p.shape[0]


@dataclass(frozen=True)
class DisparityLedger:
    """Accumulated classification disagreements.

    per_edge[i, j] counts the k whose side of edge (i, j) differs between
    the two images; per_point[i] sums per_edge over j.
    """

    per_edge: np.ndarray
    per_point: np.ndarray

    def __post_init__(self):
        if not np.array_equal(self.per_point, self.per_edge.sum(axis=1)):
            raise ValueError("per_point must equal the row sums of per_edge")
        if (self.per_edge < 0).any():
            raise ValueError("disparity counts must be nonnegative")


@dataclass(frozen=True)
class RemovalEvent:
    iteration: int
    removed_index: int
    s_value: int


@dataclass(frozen=True)
class GorResult:
    survivors: CorrespondenceSet
    removed_indices: tuple[int, ...]
    survivor_indices: tuple[int, ...]
    degenerate: bool
    events: tuple[RemovalEvent, ...] = field(default=())


def classify(cs: CorrespondenceSet) -> SignTable:
    """Build both side-classification tables for all ordered pairs."""
    n = len(cs)
    if n < 3:
        raise ValueError("insufficient correspondences")
    sign_p = np.empty((n, n, n), dtype=np.int8)
    sign_q = np.empty((n, n, n), dtype=np.int8)
    for i in range(n):
        sign_p[i] = _sign_block(cs.ref_points, i)
        sign_q[i] = _sign_block(cs.sensed_points, i)
    return SignTable(sign_p, sign_q)


def _diff_tensor(table: SignTable) -> np.ndarray:
    """diff[i, j, k] = 1 where the two images classify k differently.

    Entries with j = i or k in {i, j} are forced to zero; they are not
    classifications.
    """
    n = table.n
    diff = (table.sign_p != table.sign_q).astype(np.int8)
    idx = np.arange(n)
    diff[idx, idx, :] = 0
    diff[idx, :, idx] = 0
    diff[:, idx, idx] = 0
    return diff


def ledger_from_diff(diff: np.ndarray, alive: np.ndarray | None = None) -> DisparityLedger:
    """Collapse a diff tensor to per-edge and per-point sums over live indices."""
    if alive is not None:
        diff = diff * alive[None, None, :]
        diff = diff * alive[None, :, None]
        diff = diff * alive[:, None, None]
    per_edge = diff.sum(axis=2, dtype=np.int64)
    return DisparityLedger(per_edge, per_edge.sum(axis=1))


def build_ledger(cs: CorrespondenceSet) -> DisparityLedger:
    return ledger_from_diff(_diff_tensor(classify(cs)))


def brute_force_ledger(cs: CorrespondenceSet) -> DisparityLedger:
    """Reference ledger by direct triple loop with fresh determinants.

    Deliberately shares no state or table with the optimized path; capped
    at N = 12 because of its cubic scalar cost.
    """
    n = len(cs)
    if n > 12:
        raise ValueError("brute-force ledger is capped at N = 12")
    if n < 3:
        raise ValueError("insufficient correspondences")
    p, q = cs.ref_points, cs.sensed_points
    per_edge = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            for k in range(n):
                if k == i or k == j:
                    continue
                sp = edge_sign(p[i], p[j], p[k])
                sq = edge_sign(q[i], q[j], q[k])
                if sp != sq:
                    per_edge[i, j] += 1
    return DisparityLedger(per_edge, per_edge.sum(axis=1))


def remove_outliers(cs: CorrespondenceSet) -> GorResult:
    """Iteratively delete the points with maximal accumulated disparity.

    All determinant signs are evaluated once up front; each removal then
    updates the ledger by integer subtraction only.  Every index tied at
    the maximum is removed in the same iteration.  Stops when all
    classifications agree, or flags ``degenerate`` when fewer than three
    correspondences survive.
    """
    n = len(cs)
    if n < 3:
        raise ValueError("insufficient correspondences")
    diff = _diff_tensor(classify(cs))
    per_edge = diff.sum(axis=2, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    removed: list[int] = []
    events: list[RemovalEvent] = []
    iteration = 0
    degenerate = False
    while True:
        idx = np.flatnonzero(alive)
        if idx.size < 3:
            degenerate = True
            break
        s = per_edge[np.ix_(idx, idx)].sum(axis=1)
        s_max = int(s.max())
        if s_max == 0:
            break
        iteration += 1
        for r in idx[s == s_max]:
            r = int(r)
            events.append(RemovalEvent(iteration, r, s_max))
            alive[r] = False
            removed.append(r)
            per_edge -= diff[:, :, r]
    survivor_idx = tuple(int(i) for i in np.flatnonzero(alive))
    return GorResult(
        survivors=cs.subset(list(survivor_idx)),
        removed_indices=tuple(removed),
        survivor_indices=survivor_idx,
        degenerate=degenerate,
        events=tuple(events),
    )


def removal_events_csv(events) -> str:
    """Diagnostic dump: one row per removal."""
    lines = ["iteration,removed_index,S_value"]
    for e in events:
        lines.append(f"{e.iteration},{e.removed_index},{e.s_value}")
    return "\n".join(lines) + "\n"
