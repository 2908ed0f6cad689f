"""Keypoint extraction on segmentation masks and ratio-test matching.

Keypoints are detected on a lightly blurred copy of the binary mask (hard
binary edges make difference-of-Gaussians ill-conditioned), each annotated
with the mask value at its rounded location.  Matching is an exhaustive
nearest-neighbor ratio test restricted to keypoints with equal mask values,
with a one-to-one cleanup pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .imagecore import GrayImage
from .lsr import SegmentationMask
from .sift import SiftParams, detect_keypoints

DEFAULT_D_RATIO = 0.8
MASK_BLUR_SIGMA = 1.0


@dataclass(frozen=True)
class Keypoint:
    """Sub-pixel detection with the binary mask value at its location."""

    x: float
    y: float
    scale: float
    orientation_deg: float
    mask_value: int

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.mask_value not in (0, 1):
            raise ValueError("mask_value must be 0 or 1")


@dataclass(frozen=True)
class Features:
    """Keypoints plus their (N, 128) descriptor matrix, index-aligned."""

    keypoints: tuple[Keypoint, ...]
    descriptors: np.ndarray

    def __post_init__(self):
        desc = np.asarray(self.descriptors, dtype=np.float64)
        if desc.ndim != 2 or desc.shape[0] != len(self.keypoints):
            raise ValueError("descriptor matrix must have one row per keypoint")
        desc = desc.copy()
        desc.flags.writeable = False
        object.__setattr__(self, "descriptors", desc)
        object.__setattr__(self, "keypoints", tuple(self.keypoints))

    def __len__(self) -> int:
        return len(self.keypoints)


@dataclass(frozen=True)
class CorrespondenceSet:
    """Index-paired point sets: ref_points[i] corresponds to sensed_points[i]."""

    ref_points: np.ndarray
    sensed_points: np.ndarray

    def __post_init__(self):
        ref = np.asarray(self.ref_points, dtype=np.float64).reshape(-1, 2).copy()
        sen = np.asarray(self.sensed_points, dtype=np.float64).reshape(-1, 2).copy()
        if ref.shape != sen.shape:
            raise ValueError("point lists must have equal length")
        ref.flags.writeable = False
        sen.flags.writeable = False
        object.__setattr__(self, "ref_points", ref)
        object.__setattr__(self, "sensed_points", sen)

    def __len__(self) -> int:
        return self.ref_points.shape[0]

    def subset(self, indices) -> "CorrespondenceSet":
        idx = np.asarray(indices, dtype=np.intp)
        return CorrespondenceSet(self.ref_points[idx], self.sensed_points[idx])

    def scaled(self, factor: float) -> "CorrespondenceSet":
        """Both point sets multiplied by ``factor`` (resolution un-scaling)."""
        return CorrespondenceSet(self.ref_points * factor, self.sensed_points * factor)

    def to_csv(self) -> str:
        lines = ["px,py,qx,qy"]
        for (px, py), (qx, qy) in zip(self.ref_points, self.sensed_points):
            lines.append(f"{float(px)!r},{float(py)!r},{float(qx)!r},{float(qy)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "CorrespondenceSet":
        rows = [r for r in text.strip().splitlines()[1:] if r.strip()]
        vals = np.array([[float(v) for v in r.split(",")] for r in rows]).reshape(-1, 4)
        return cls(vals[:, :2], vals[:, 2:])


def detect_and_describe(
    img: GrayImage,
    mask: SegmentationMask,
    params: SiftParams | None = None,
    blur_sigma: float = MASK_BLUR_SIGMA,
) -> Features:
    """Detect keypoints on the blurred mask and tag them with mask values.

    The intensity image is only checked for shape agreement here: the
    descriptors come from the segmentation geometry, which is what makes
    matching robust to radiometric differences between acquisitions.
    """
    if img.shape != mask.shape:
        raise ValueError("image and mask dimensions must agree")
    detection_input = ndimage.gaussian_filter(
        mask.bits.astype(np.float64), blur_sigma, mode="nearest"
    )
    raw, descs = detect_keypoints(detection_input, params)
    h, w = mask.shape
    kps = []
    keep = []
    for i, kp in enumerate(raw):
        xi = min(max(int(round(kp.x)), 0), w - 1)
        yi = min(max(int(round(kp.y)), 0), h - 1)
        if not (0.0 <= kp.x <= w - 1 and 0.0 <= kp.y <= h - 1):
            continue
        kps.append(
            Keypoint(
                x=kp.x, y=kp.y, scale=kp.scale,
                orientation_deg=kp.orientation_deg,
                mask_value=int(mask.bits[yi, xi]),
            )
        )
        keep.append(i)
    return Features(tuple(kps), descs[keep] if keep else descs[:0])


def ratio_match(
    ref: Features, sensed: Features, d_ratio: float = DEFAULT_D_RATIO
) -> CorrespondenceSet:
    """Nearest-neighbor ratio matching within equal-mask-value groups.

    A ref keypoint matches its nearest sensed neighbor iff the nearest and
    second-nearest distances satisfy d1/d2 < d_ratio (with d2 > 0).  When
    several ref keypoints claim one sensed keypoint, the smallest d1 wins;
    remaining ties go to the lowest ref index.
    """
    if not (0.0 < d_ratio < 1.0):
        raise ValueError("d_ratio must lie in (0, 1)")
    empty = np.zeros((0, 2))
    if len(ref) == 0 or len(sensed) == 0:
        return CorrespondenceSet(empty, empty)

    ref_mv = np.array([k.mask_value for k in ref.keypoints])
    sen_mv = np.array([k.mask_value for k in sensed.keypoints])
    claims: dict[int, tuple[float, int]] = {}
    for value in (0, 1):
        r_idx = np.flatnonzero(ref_mv == value)
        s_idx = np.flatnonzero(sen_mv == value)
        if r_idx.size == 0 or s_idx.size < 2:
            continue
        dists = cdist(ref.descriptors[r_idx], sensed.descriptors[s_idx])
        nearest = np.argmin(dists, axis=1)
        d1 = dists[np.arange(r_idx.size), nearest]
        masked = dists.copy()
        masked[np.arange(r_idx.size), nearest] = np.inf
        d2 = masked.min(axis=1)
        ok = (d2 > 0.0) & (d1 < d_ratio * d2)
        for row in np.flatnonzero(ok):
            ri = int(r_idx[row])
            si = int(s_idx[nearest[row]])
            cand = (float(d1[row]), ri)
            if si not in claims or cand < claims[si]:
                claims[si] = cand
    pairs = sorted((ri, si) for si, (_, ri) in claims.items())
    if not pairs:
        return CorrespondenceSet(empty, empty)
    ref_pts = np.array([[ref.keypoints[ri].x, ref.keypoints[ri].y] for ri, _ in pairs])
    sen_pts = np.array([[sensed.keypoints[si].x, sensed.keypoints[si].y] for _, si in pairs])
    return CorrespondenceSet(ref_pts, sen_pts)
