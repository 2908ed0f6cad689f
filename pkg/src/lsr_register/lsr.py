"""Line-support region segmentation.

A line-support region is a connected set of pixels sharing roughly the same
level-line angle.  Regions are grown from high-gradient seeds under an
angular tolerance, approximated by oriented rectangles, and rendered into a
binary mask.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .imagecore import GradientField, GrayImage, compute_gradient_field

DEFAULT_TAU_DEG = 22.5
DEFAULT_FLAT_THRESHOLD = 2.0 / 255.0
DEFAULT_MIN_REGION_SIZE = 20

_NEIGHBORS_8 = (
    (-1, -1), (0, -1), (1, -1),
    (-1, 0), (1, 0),
    (-1, 1), (0, 1), (1, 1),
)


def circular_distance_deg(a, b):
    """Distance between angles in degrees on the circle, in [0, 180]."""
    d = np.abs(np.asarray(a, dtype=np.float64) - b) % 360.0
    out = np.minimum(d, 360.0 - d)
    return float(out) if out.ndim == 0 else out


class RegionState:
    """A growing region: member pixels plus running sin/cos angle sums.

    The region angle is atan2(sum of sines, sum of cosines) over the member
    pixels' level-line angles, maintained incrementally as pixels join.
    Every join is recorded as (x, y, pixel_angle, region_angle_before_join)
    so tests can audit the tolerance decision that admitted each pixel.
    """

    __slots__ = ("member_pixels", "sum_sin", "sum_cos", "joins")

    def __init__(self):
        self.member_pixels: list[tuple[int, int]] = []
        self.sum_sin = 0.0
        self.sum_cos = 0.0
        self.joins: list[tuple[int, int, float, float]] = []

    def __len__(self) -> int:
        return len(self.member_pixels)

    @property
    def angle_deg(self) -> float:
        if not self.member_pixels:
            raise ValueError("empty region has no angle")
        return math.degrees(math.atan2(self.sum_sin, self.sum_cos)) % 360.0

    def add(self, x: int, y: int, pixel_angle_deg: float) -> None:
        before = self.angle_deg if self.member_pixels else pixel_angle_deg
        self.member_pixels.append((x, y))
        r = math.radians(pixel_angle_deg)
        self.sum_sin += math.sin(r)
        self.sum_cos += math.cos(r)
        self.joins.append((x, y, float(pixel_angle_deg), before))


@dataclass(frozen=True)
class LineSupportRegion:
    """Rectangle approximation of a region: center, axis angle, extents."""

    cx: float
    cy: float
    angle_deg: float
    length: float
    width: float
    member_count: int

    def __post_init__(self):
        if not (self.length >= self.width > 0):
            raise ValueError("rectangle extents must satisfy length >= width > 0")
        if self.member_count < 1:
            raise ValueError("member_count must be positive")

    def endpoints(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Endpoints of the center line segment, for overlays."""
        r = math.radians(self.angle_deg)
        dx, dy = math.cos(r) * self.length / 2.0, math.sin(r) * self.length / 2.0
        return (self.cx - dx, self.cy - dy), (self.cx + dx, self.cy + dy)


@dataclass(frozen=True)
class SegmentationMask:
    """Binary mask: 1 inside some region rectangle, 0 elsewhere."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=bool)
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def as_gray(self) -> GrayImage:
        return GrayImage(self.bits.astype(np.float64))


def grow_regions(
    field: GradientField,
    tau: float,
    min_region_size: int = DEFAULT_MIN_REGION_SIZE,
) -> list[RegionState]:
    """Group 8-connected pixels whose angles stay within ``tau`` of the
    running region angle.

    Seeds are taken in decreasing gradient-magnitude order (raster order
    breaks ties) so the partition is deterministic.  A pixel joins at most
    one region; regions smaller than ``min_region_size`` are dropped from
    the output but their pixels stay consumed.
    """
    if not (0.0 < tau < 180.0):
        raise ValueError("tau must lie in (0, 180) degrees")
    h, w = field.shape
    defined = field.defined
    angle = field.angle_deg
    used = np.zeros((h, w), dtype=bool)

    flat_idx = np.flatnonzero(defined.ravel())
    if flat_idx.size == 0:
        raise ValueError("gradient field has no defined-angle pixel")
    order = flat_idx[np.argsort(-field.magnitude.ravel()[flat_idx], kind="stable")]

    regions: list[RegionState] = []
    for seed in order:
        sy, sx = divmod(int(seed), w)
        if used[sy, sx]:
            continue
        region = RegionState()
        used[sy, sx] = True
        region.add(sx, sy, angle[sy, sx])
        queue = deque([(sx, sy)])
        while queue:
            x0, y0 = queue.popleft()
            for dx, dy in _NEIGHBORS_8:
                x, y = x0 + dx, y0 + dy
                if not (0 <= x < w and 0 <= y < h):
                    continue
                if used[y, x] or not defined[y, x]:
                    continue
                if circular_distance_deg(angle[y, x], region.angle_deg) < tau:
                    used[y, x] = True
                    region.add(x, y, angle[y, x])
                    queue.append((x, y))
        if len(region) >= min_region_size:
            regions.append(region)
    return regions


def _principal_axis(mxx: float, mxy: float, myy: float) -> tuple[float, float]:
    """Unit eigenvector of the larger eigenvalue of [[mxx, mxy], [mxy, myy]]."""
    if mxy == 0.0:
        return (1.0, 0.0) if mxx >= myy else (0.0, 1.0)
    half_trace = (mxx + myy) / 2.0
    disc = math.sqrt(((mxx - myy) / 2.0) ** 2 + mxy * mxy)
    lam = half_trace + disc
    # pick the component formula with the better-conditioned denominator
    v1 = (mxy, lam - mxx)
    v2 = (lam - myy, mxy)
    vx, vy = v1 if abs(lam - mxx) >= abs(lam - myy) else v2
    norm = math.hypot(vx, vy)
    return vx / norm, vy / norm


def rectangle_approx(region: RegionState, field: GradientField) -> LineSupportRegion:
    """Fit an oriented rectangle to a region.

    Center is the magnitude-weighted centroid; the axis comes from the
    weighted second-moment matrix; extents are the member-pixel projection
    ranges on the two axes expanded by half a pixel per side.
    """
    if len(region) == 0:
        raise ValueError("cannot approximate an empty region")
    pts = np.asarray(region.member_pixels, dtype=np.float64)
    xs, ys = pts[:, 0], pts[:, 1]
    wts = field.magnitude[ys.astype(np.intp), xs.astype(np.intp)]
    wsum = float(wts.sum())
    if wsum <= 0.0:
        wts = np.ones_like(wts)
        wsum = float(wts.sum())
    cx = float((wts * xs).sum() / wsum)
    cy = float((wts * ys).sum() / wsum)
    dx, dy = xs - cx, ys - cy
    mxx = float((wts * dx * dx).sum() / wsum)
    mxy = float((wts * dx * dy).sum() / wsum)
    myy = float((wts * dy * dy).sum() / wsum)
    ux, uy = _principal_axis(mxx, mxy, myy)
    proj_u = dx * ux + dy * uy
    proj_v = -dx * uy + dy * ux
    length = float(proj_u.max() - proj_u.min()) + 1.0
    width = float(proj_v.max() - proj_v.min()) + 1.0
    theta = math.degrees(math.atan2(uy, ux)) % 180.0
    if width > length:
        length, width = width, length
        theta = (theta + 90.0) % 180.0
    return LineSupportRegion(
        cx=cx, cy=cy, angle_deg=theta, length=length, width=width,
        member_count=len(region),
    )


def render_mask(regions: list[LineSupportRegion], width: int, height: int) -> SegmentationMask:
    """Set a pixel when its center lies inside at least one region rectangle."""
    bits = np.zeros((height, width), dtype=bool)
    for reg in regions:
        r = math.radians(reg.angle_deg)
        ux, uy = math.cos(r), math.sin(r)
        half_l, half_w = reg.length / 2.0, reg.width / 2.0
        reach_x = abs(ux) * half_l + abs(uy) * half_w
        reach_y = abs(uy) * half_l + abs(ux) * half_w
        x_lo = max(0, int(math.floor(reg.cx - reach_x)))
        x_hi = min(width - 1, int(math.ceil(reg.cx + reach_x)))
        y_lo = max(0, int(math.floor(reg.cy - reach_y)))
        y_hi = min(height - 1, int(math.ceil(reg.cy + reach_y)))
        if x_lo > x_hi or y_lo > y_hi:
            continue
        xs, ys = np.meshgrid(np.arange(x_lo, x_hi + 1), np.arange(y_lo, y_hi + 1))
        dx, dy = xs - reg.cx, ys - reg.cy
        du = dx * ux + dy * uy
        dv = -dx * uy + dy * ux
        inside = (np.abs(du) <= half_l) & (np.abs(dv) <= half_w)
        bits[y_lo:y_hi + 1, x_lo:x_hi + 1] |= inside
    return SegmentationMask(bits)


def segment(
    img: GrayImage,
    tau: float = DEFAULT_TAU_DEG,
    flat_threshold: float = DEFAULT_FLAT_THRESHOLD,
    min_region_size: int = DEFAULT_MIN_REGION_SIZE,
) -> tuple[SegmentationMask, list[LineSupportRegion]]:
    """Full segmentation stage: gradients, region growing, rectangles, mask.

    A constant image (no defined gradient anywhere) yields an empty region
    list and an all-zero mask.
    """
    field = compute_gradient_field(img, flat_threshold)
    if not field.defined.any():
        return SegmentationMask(np.zeros(img.shape, dtype=bool)), []
    states = grow_regions(field, tau, min_region_size)
    regions = [rectangle_approx(s, field) for s in states]
    return render_mask(regions, img.width, img.height), regions


def regions_to_csv(regions: list[LineSupportRegion]) -> str:
    """Serialize regions as CSV with header cx,cy,angle_deg,length,width,count."""
    lines = ["cx,cy,angle_deg,length,width,count"]
    for r in regions:
        lines.append(f"{r.cx!r},{r.cy!r},{r.angle_deg!r},{r.length!r},{r.width!r},{r.member_count}")
    return "\n".join(lines) + "\n"
