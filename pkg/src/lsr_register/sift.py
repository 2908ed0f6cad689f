"""Scale-invariant keypoint detection and description.

Classic difference-of-Gaussians pipeline: Gaussian pyramid, DoG extrema,
quadratic sub-pixel localization with contrast and edge rejection,
gradient-histogram orientation assignment, and 4x4x8 descriptors with
trilinear binning.  Pure numpy/scipy, fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_DESC_WIDTH = 4        # spatial bins per side
_DESC_BINS = 8         # orientation bins
_ORI_BINS = 36
_ORI_SIGMA_FACTOR = 1.5
_ORI_RADIUS_FACTOR = 3.0
_ORI_PEAK_RATIO = 0.8
_DESC_SIGMA_FACTOR = 3.0
_DESC_CLAMP = 0.2
_IMAGE_BORDER = 5
_MIN_OCTAVE_SIZE = 8


@dataclass(frozen=True)
class SiftParams:
    """Tunable scale-space knobs; defaults follow common practice."""

    scales_per_octave: int = 3
    sigma: float = 1.6
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0
    assumed_blur: float = 0.5
    max_interp_steps: int = 5

    def __post_init__(self):
        if self.scales_per_octave < 1:
            raise ValueError("scales_per_octave must be >= 1")
        if self.sigma <= 0 or self.contrast_threshold <= 0 or self.edge_ratio <= 1:
            raise ValueError("sigma, contrast_threshold > 0 and edge_ratio > 1 required")


@dataclass(frozen=True)
class RawKeypoint:
    """Detection output in the coordinate frame of the input array."""

    x: float
    y: float
    scale: float
    orientation_deg: float


def _gaussian_blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    return ndimage.gaussian_filter(arr, sigma, mode="nearest")


def _base_image(pixels: np.ndarray, params: SiftParams) -> np.ndarray:
    """Double the input and bring it to the pyramid's base blur level."""
    doubled = ndimage.zoom(pixels, 2.0, order=1, mode="nearest", grid_mode=True)
    delta = math.sqrt(max(params.sigma ** 2 - (2.0 * params.assumed_blur) ** 2, 0.01))
    return _gaussian_blur(doubled, delta)


def _num_octaves(shape: tuple[int, int]) -> int:
    return max(1, int(math.floor(math.log2(min(shape) / _MIN_OCTAVE_SIZE))) + 1)


def _blur_increments(params: SiftParams) -> np.ndarray:
    s = params.scales_per_octave
    k = 2.0 ** (1.0 / s)
    total = params.sigma * k ** np.arange(s + 3)
    incr = np.empty(s + 3)
    incr[0] = params.sigma
    incr[1:] = np.sqrt(total[1:] ** 2 - total[:-1] ** 2)
    return incr


def _gaussian_pyramid(base: np.ndarray, n_octaves: int, params: SiftParams) -> list[list[np.ndarray]]:
    incr = _blur_increments(params)
    s = params.scales_per_octave
    pyramid = []
    current = base
    for _ in range(n_octaves):
        octave = [current]
        for i in range(1, s + 3):
            octave.append(_gaussian_blur(octave[-1], incr[i]))
        pyramid.append(octave)
        current = octave[s][::2, ::2]
    return pyramid


def _dog_pyramid(gauss: list[list[np.ndarray]]) -> list[np.ndarray]:
    return [np.stack([o[i + 1] - o[i] for i in range(len(o) - 1)]) for o in gauss]


def _strict_extrema(dog: np.ndarray, floor: float) -> np.ndarray:
    """(level, y, x) points strictly above/below all 26 neighbors."""
    fp = np.ones((3, 3, 3), dtype=bool)
    fp[1, 1, 1] = False
    mx = ndimage.maximum_filter(dog, footprint=fp, mode="constant", cval=-np.inf)
    mn = ndimage.minimum_filter(dog, footprint=fp, mode="constant", cval=np.inf)
    is_ext = ((dog > mx) | (dog < mn)) & (np.abs(dog) > floor)
    is_ext[0] = is_ext[-1] = False
    b = _IMAGE_BORDER
    mask = np.zeros_like(is_ext)
    if dog.shape[1] > 2 * b and dog.shape[2] > 2 * b:
        mask[:, b:-b, b:-b] = True
    return np.argwhere(is_ext & mask)


def _localize(
    dog: np.ndarray, lvl: int, y: int, x: int, params: SiftParams
) -> tuple[int, int, int, np.ndarray, float] | None:
    """Iterated quadratic refinement; returns (lvl, y, x, offset, value)."""
    s = params.scales_per_octave
    n_levels, h, w = dog.shape
    for _ in range(params.max_interp_steps):
        cube = dog[lvl - 1:lvl + 2, y - 1:y + 2, x - 1:x + 2]
        g = np.array([
            (cube[1, 1, 2] - cube[1, 1, 0]) / 2.0,
            (cube[1, 2, 1] - cube[1, 0, 1]) / 2.0,
            (cube[2, 1, 1] - cube[0, 1, 1]) / 2.0,
        ])
        dxx = cube[1, 1, 2] - 2 * cube[1, 1, 1] + cube[1, 1, 0]
        dyy = cube[1, 2, 1] - 2 * cube[1, 1, 1] + cube[1, 0, 1]
        dss = cube[2, 1, 1] - 2 * cube[1, 1, 1] + cube[0, 1, 1]
        dxy = (cube[1, 2, 2] - cube[1, 2, 0] - cube[1, 0, 2] + cube[1, 0, 0]) / 4.0
        dxs = (cube[2, 1, 2] - cube[2, 1, 0] - cube[0, 1, 2] + cube[0, 1, 0]) / 4.0
        dys = (cube[2, 2, 1] - cube[2, 0, 1] - cube[0, 2, 1] + cube[0, 0, 1]) / 4.0
        hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
        try:
            offset = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            value = cube[1, 1, 1] + 0.5 * float(g @ offset)
            if abs(value) * s < params.contrast_threshold:
                return None
            r = params.edge_ratio
            tr, det = dxx + dyy, dxx * dyy - dxy * dxy
            if det <= 0 or tr * tr * r >= det * (r + 1) ** 2:
                return None
            return lvl, y, x, offset, value
        x += int(round(float(offset[0])))
        y += int(round(float(offset[1])))
        lvl += int(round(float(offset[2])))
        if not (1 <= lvl <= n_levels - 2
                and _IMAGE_BORDER <= y < h - _IMAGE_BORDER
                and _IMAGE_BORDER <= x < w - _IMAGE_BORDER):
            return None
    return None


def _window_gradients(img: np.ndarray, y: int, x: int, radius: int):
    """Central-difference gradients on the (2r+1)^2 window around (y, x).

    Returns magnitude, angle (radians), and the dy/dx index grids of the
    interior points whose 4-neighborhood stays inside the image.
    """
    h, w = img.shape
    ys = np.arange(max(1, y - radius), min(h - 1, y + radius + 1))
    xs = np.arange(max(1, x - radius), min(w - 1, x + radius + 1))
    if ys.size == 0 or xs.size == 0:
        z = np.zeros((0,))
        return z, z, z, z
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    gx = (img[yy, xx + 1] - img[yy, xx - 1]) / 2.0
    gy = (img[yy + 1, xx] - img[yy - 1, xx]) / 2.0
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    return mag.ravel(), ang.ravel(), (yy - y).ravel(), (xx - x).ravel()


def _smooth_circular(hist: np.ndarray, passes: int = 2) -> np.ndarray:
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    out = hist
    for _ in range(passes):
        padded = np.concatenate([out[-2:], out, out[:2]])
        out = np.convolve(padded, kernel, mode="valid")
    return out


def _orientations(img: np.ndarray, y: int, x: int, sigma_oct: float) -> list[float]:
    """Dominant gradient directions (degrees) around a keypoint."""
    sig = _ORI_SIGMA_FACTOR * sigma_oct
    radius = int(round(_ORI_RADIUS_FACTOR * sig))
    mag, ang, dy, dx = _window_gradients(img, y, x, radius)
    if mag.size == 0:
        return []
    weight = np.exp(-(dx ** 2 + dy ** 2) / (2.0 * sig * sig))
    bins = np.floor(np.degrees(ang) % 360.0 / (360.0 / _ORI_BINS)).astype(np.intp) % _ORI_BINS
    hist = np.zeros(_ORI_BINS)
    np.add.at(hist, bins, weight * mag)
    hist = _smooth_circular(hist)
    peak = hist.max()
    if peak <= 0:
        return []
    out = []
    for b in range(_ORI_BINS):
        left, right = hist[(b - 1) % _ORI_BINS], hist[(b + 1) % _ORI_BINS]
        if hist[b] >= _ORI_PEAK_RATIO * peak and hist[b] > left and hist[b] > right:
            denom = left - 2.0 * hist[b] + right
            shift = 0.5 * (left - right) / denom if denom != 0 else 0.0
            out.append(((b + shift) * (360.0 / _ORI_BINS)) % 360.0)
    return sorted(out)


def _descriptor(img: np.ndarray, y: float, x: float, sigma_oct: float, angle_deg: float) -> np.ndarray | None:
    """128-vector: rotated 4x4 spatial grid of 8-bin gradient histograms."""
    d, nbins = _DESC_WIDTH, _DESC_BINS
    hist_width = _DESC_SIGMA_FACTOR * sigma_oct
    radius = int(round(hist_width * math.sqrt(2) * (d + 1) / 2.0))
    yi, xi = int(round(y)), int(round(x))
    mag, ang, dy, dx = _window_gradients(img, yi, xi, radius)
    if mag.size == 0:
        return None
    dy = dy + (yi - y)
    dx = dx + (xi - x)
    rot = math.radians(angle_deg)
    cos_a, sin_a = math.cos(rot), math.sin(rot)
    # rotate sample offsets into the keypoint frame
    u = (dx * cos_a + dy * sin_a) / hist_width
    v = (-dx * sin_a + dy * cos_a) / hist_width
    rbin = v + d / 2.0 - 0.5
    cbin = u + d / 2.0 - 0.5
    keep = (rbin > -1) & (rbin < d) & (cbin > -1) & (cbin < d)
    if not keep.any():
        return None
    rbin, cbin, mag_k, ang_k = rbin[keep], cbin[keep], mag[keep], ang[keep]
    u_k, v_k = u[keep], v[keep]
    weight = np.exp(-(u_k ** 2 + v_k ** 2) / (2.0 * (d / 2.0) ** 2))
    obin = ((np.degrees(ang_k) - angle_deg) % 360.0) / (360.0 / nbins)

    hist = np.zeros((d + 2, d + 2, nbins))
    r0 = np.floor(rbin).astype(np.intp)
    c0 = np.floor(cbin).astype(np.intp)
    o0 = np.floor(obin).astype(np.intp)
    fr, fc, fo = rbin - r0, cbin - c0, obin - o0
    val = weight * mag_k
    for ir in (0, 1):
        wr = val * (fr if ir else 1.0 - fr)
        for ic in (0, 1):
            wc = wr * (fc if ic else 1.0 - fc)
            for io in (0, 1):
                wo = wc * (fo if io else 1.0 - fo)
                np.add.at(hist, (r0 + ir + 1, c0 + ic + 1, (o0 + io) % nbins), wo)
    vec = hist[1:-1, 1:-1, :].ravel()
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        return None
    vec = np.minimum(vec / norm, _DESC_CLAMP)
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        return None
    return vec / norm


def detect_keypoints(pixels: np.ndarray, params: SiftParams | None = None) -> tuple[list[RawKeypoint], np.ndarray]:
    """Run the full scale-space pipeline on a 2-D float array.

    Returns keypoints (input-frame coordinates) and an (N, 128) descriptor
    matrix in matching order, sorted by (x, y, scale, orientation).
    """
    params = params or SiftParams()
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise ValueError("expected a 2-D array")
    if min(pixels.shape) < _MIN_OCTAVE_SIZE:
        return [], np.zeros((0, _DESC_WIDTH * _DESC_WIDTH * _DESC_BINS))
    s = params.scales_per_octave
    base = _base_image(pixels, params)
    gauss = _gaussian_pyramid(base, _num_octaves(base.shape), params)
    dogs = _dog_pyramid(gauss)
    floor = 0.5 * params.contrast_threshold / s

    found: dict[tuple, np.ndarray] = {}
    for octave, dog in enumerate(dogs):
        for lvl, y, x in _strict_extrema(dog, floor):
            loc = _localize(dog, int(lvl), int(y), int(x), params)
            if loc is None:
                continue
            lvl_i, y_i, x_i, offset, _ = loc
            sigma_oct = params.sigma * 2.0 ** ((lvl_i + float(offset[2])) / s)
            gimg = gauss[octave][lvl_i]
            scale_img = 2.0 ** octave
            fx = (x_i + float(offset[0])) * scale_img / 2.0
            fy = (y_i + float(offset[1])) * scale_img / 2.0
            fscale = sigma_oct * scale_img / 2.0
            for theta in _orientations(gimg, y_i, x_i, sigma_oct):
                key = (round(fx, 4), round(fy, 4), round(fscale, 4), round(theta, 2))
                if key in found:
                    continue
                desc = _descriptor(
                    gimg, y_i + float(offset[1]), x_i + float(offset[0]), sigma_oct, theta
                )
                if desc is None:
                    continue
                found[key] = desc

    items = sorted(found.items())
    kps = [RawKeypoint(x=k[0], y=k[1], scale=k[2], orientation_deg=k[3]) for k, _ in items]
    descs = (
        np.stack([d for _, d in items])
        if items else np.zeros((0, _DESC_WIDTH * _DESC_WIDTH * _DESC_BINS))
    )
    return kps, descs
