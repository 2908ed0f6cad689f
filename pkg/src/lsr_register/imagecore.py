"""Image containers, I/O, pyramid downsampling, gradients, warping, mosaics.

Pixel data lives in row-major float64 arrays with intensities in [0, 1].
Coordinates are (x, y) with x the column index and y the row index; pixel
centers sit at integer coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageLoadError(ValueError):
    """Raised when an input raster cannot be read or is unsupported."""


@dataclass(frozen=True)
class GrayImage:
    """A 2-D grayscale intensity grid with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be a 2-D array with positive dimensions")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


@dataclass(frozen=True)
class GradientField:
    """Per-pixel gradient magnitude and level-line angle.

    The level-line angle is orthogonal to the gradient direction (gradient
    angle rotated by +90 degrees), wrapped to [0, 360).  Pixels whose
    magnitude falls below the flat-region threshold, and the last row and
    column (no forward quad available), are marked undefined and excluded
    from region growing.
    """

    magnitude: np.ndarray
    angle_deg: np.ndarray
    defined: np.ndarray

    def __post_init__(self):
        if not (self.magnitude.shape == self.angle_deg.shape == self.defined.shape):
            raise ValueError("gradient field components must share one shape")
        for name in ("magnitude", "angle_deg", "defined"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.magnitude.shape


@dataclass(frozen=True)
class AffineTransform:
    """Planar affine map (x, y) -> (a*x + b*y + tx, c*x + d*y + ty)."""

    a: float
    b: float
    tx: float
    c: float
    d: float
    ty: float

    def __post_init__(self):
        for name in ("a", "b", "tx", "c", "d", "ty"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"coefficient {name} must be finite")
            object.__setattr__(self, name, float(v))

    @property
    def linear_determinant(self) -> float:
        return self.a * self.d - self.b * self.c

    def is_invertible(self) -> bool:
        return self.linear_determinant != 0.0

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (N, 2) array of (x, y) points; a single (2,) point maps to (2,)."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        x, y = pts[:, 0], pts[:, 1]
        out = np.column_stack(
            (self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty)
        )
        return out[0] if single else out

    def compose(self, other: "AffineTransform") -> "AffineTransform":
        """Return self o other (apply `other` first)."""
        return AffineTransform(
            a=self.a * other.a + self.b * other.c,
            b=self.a * other.b + self.b * other.d,
            tx=self.a * other.tx + self.b * other.ty + self.tx,
            c=self.c * other.a + self.d * other.c,
            d=self.c * other.b + self.d * other.d,
            ty=self.c * other.tx + self.d * other.ty + self.ty,
        )

    def inverse(self) -> "AffineTransform":
        det = self.linear_determinant
        if det == 0.0:
            raise ValueError("transform is not invertible")
        ia, ib, ic, id_ = self.d / det, -self.b / det, -self.c / det, self.a / det
        return AffineTransform(
            a=ia,
            b=ib,
            tx=-(ia * self.tx + ib * self.ty),
            c=ic,
            d=id_,
            ty=-(ic * self.tx + id_ * self.ty),
        )

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "tx": self.tx,
                "c": self.c, "d": self.d, "ty": self.ty}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "AffineTransform":
        return cls(a=d["a"], b=d["b"], tx=d["tx"], c=d["c"], d=d["d"], ty=d["ty"])

    @classmethod
    def from_json(cls, text: str) -> "AffineTransform":
        return cls.from_dict(json.loads(text))

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(1.0, 0.0, tx, 0.0, 1.0, ty)

    @classmethod
    def scaling(cls, sx: float, sy: float | None = None) -> "AffineTransform":
        sy = sx if sy is None else sy
        return cls(sx, 0.0, 0.0, 0.0, sy, 0.0)

    @classmethod
    def rotation(cls, degrees: float) -> "AffineTransform":
        """Rotation about the origin.

        With y pointing down (image convention) a positive angle turns the
        content clockwise on screen.
        """
        r = math.radians(degrees)
        cos, sin = math.cos(r), math.sin(r)
        return cls(cos, -sin, 0.0, sin, cos, 0.0)

    @classmethod
    def shear(cls, h: float, v: float) -> "AffineTransform":
        """Shear with horizontal factor h and vertical factor v."""
        return cls(1.0, h, 0.0, v, 1.0, 0.0)

    def about(self, cx: float, cy: float) -> "AffineTransform":
        """Conjugate by a translation so the map is applied about (cx, cy)."""
        center = AffineTransform.translation(cx, cy)
        return center.compose(self).compose(AffineTransform.translation(-cx, -cy))


def load_image(path) -> GrayImage:
    """Load an 8-bit PNG or binary PGM as a normalized grayscale image.

    RGB input is collapsed by averaging the three channels; 8-bit values are
    divided by 255.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                arr = np.asarray(im, dtype=np.float64)
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.float64).mean(axis=2)
            else:
                raise ImageLoadError(
                    f"unsupported format: mode {mode!r} (need 8-bit gray or RGB)"
                )
    except ImageLoadError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageLoadError(f"unreadable file: {path}: {exc}") from exc
    if arr.size == 0:
        raise ImageLoadError(f"zero-dimension image: {path}")
    return GrayImage(arr / 255.0)


def save_image(img: GrayImage, path) -> None:
    """Write a grayscale image as 8-bit PNG (values rounded from [0, 1])."""
    data = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def _halve(sums: np.ndarray, counts: np.ndarray, axis: int):
    """One pairwise-folding step along an axis; an odd tail element is kept."""
    n = sums.shape[axis]
    even = n - (n % 2)
    head = np.take(sums, range(0, even, 2), axis=axis) + np.take(
        sums, range(1, even, 2), axis=axis
    )
    chead = np.take(counts, range(0, even, 2), axis=axis) + np.take(
        counts, range(1, even, 2), axis=axis
    )
    if n % 2:
        tail = np.take(sums, [n - 1], axis=axis)
        ctail = np.take(counts, [n - 1], axis=axis)
        head = np.concatenate([head, tail], axis=axis)
        chead = np.concatenate([chead, ctail], axis=axis)
    return head, chead


def downsample(img: GrayImage, level: int) -> GrayImage:
    """Average the image with 2^level x 2^level windows.

    Output dimensions are ceil(w / 2^L) x ceil(h / 2^L); partial border
    windows average only the pixels present.  The window sums are folded
    pairwise, one halving per level, so composing single-level downsamples
    reproduces a multi-level downsample bit-for-bit.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    if level == 0:
        return img
    block = 1 << level
    if block > min(img.width, img.height):
        raise ValueError(
            f"level {level} too large for a {img.width}x{img.height} image"
        )
    sums = img.pixels.copy()
    counts = np.ones(img.shape, dtype=np.int64)
    for _ in range(level):
        sums, counts = _halve(sums, counts, axis=0)
        sums, counts = _halve(sums, counts, axis=1)
    return GrayImage(sums / counts)


def compute_gradient_field(img: GrayImage, flat_threshold: float = 2.0 / 255.0) -> GradientField:
    """Gradient over 2x2 forward quads and the derived level-line angles.

    For the quad at (x, y) the horizontal component is the mean of the right
    column minus the mean of the left column, and the vertical component the
    mean of the bottom row minus the mean of the top row.  The last row and
    column carry no quad and are flagged undefined, as is any pixel whose
    magnitude falls below ``flat_threshold``.
    """
    if img.width < 2 or img.height < 2:
        raise ValueError("image must be at least 2x2")
    if flat_threshold < 0:
        raise ValueError("flat_threshold must be >= 0")
    p = img.pixels
    gx = (p[:-1, 1:] + p[1:, 1:] - p[:-1, :-1] - p[1:, :-1]) / 2.0
    gy = (p[1:, :-1] + p[1:, 1:] - p[:-1, :-1] - p[:-1, 1:]) / 2.0
    h, w = img.shape
    magnitude = np.zeros((h, w))
    magnitude[:-1, :-1] = np.hypot(gx, gy)
    angle = np.zeros((h, w))
    angle[:-1, :-1] = np.degrees(np.arctan2(gy, gx)) + 90.0
    angle = np.mod(angle, 360.0)
    defined = np.zeros((h, w), dtype=bool)
    defined[:-1, :-1] = magnitude[:-1, :-1] >= flat_threshold
    return GradientField(magnitude=magnitude, angle_deg=angle, defined=defined)


def warp_image(src: GrayImage, t: AffineTransform, out_width: int, out_height: int) -> GrayImage:
    """Resample ``src`` so output pixel (x, y) reads src at t^-1(x, y).

    Bilinear interpolation; sample positions outside the source produce 0.
    """
    if out_width < 1 or out_height < 1:
        raise ValueError("output dimensions must be positive")
    inv = t.inverse()
    xs, ys = np.meshgrid(np.arange(out_width), np.arange(out_height))
    u = inv.a * xs + inv.b * ys + inv.tx
    v = inv.c * xs + inv.d * ys + inv.ty
    h, w = src.shape
    inside = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    u = np.where(inside, u, 0.0)
    v = np.where(inside, v, 0.0)
    x0 = np.clip(np.floor(u).astype(np.int64), 0, w - 2) if w > 1 else np.zeros_like(u, dtype=np.int64)
    y0 = np.clip(np.floor(v).astype(np.int64), 0, h - 2) if h > 1 else np.zeros_like(v, dtype=np.int64)
    fu = u - x0
    fv = v - y0
    p = src.pixels
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = p[y0, x0] * (1 - fu) + p[y0, x1] * fu
    bot = p[y1, x0] * (1 - fu) + p[y1, x1] * fu
    out = top * (1 - fv) + bot * fv
    out = np.where(inside, out, 0.0)
    # bilinear blends of [0, 1] values can drift a ulp past the bounds
    return GrayImage(np.clip(out, 0.0, 1.0))


def checkerboard_mosaic(ref: GrayImage, warped_sensed: GrayImage, cell: int) -> GrayImage:
    """Alternate cell x cell blocks from the two images, ref first at (0, 0)."""
    if ref.shape != warped_sensed.shape:
        raise ValueError("mosaic inputs must have identical dimensions")
    if cell < 1:
        raise ValueError("cell size must be >= 1")
    h, w = ref.shape
    xs, ys = np.meshgrid(np.arange(w), np.arange(h))
    use_ref = ((xs // cell) + (ys // cell)) % 2 == 0
    return GrayImage(np.where(use_ref, ref.pixels, warped_sensed.pixels))
