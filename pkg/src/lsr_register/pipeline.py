"""Multi-resolution registration loop.

Each level L halves resolution L times, re-segments both images, re-matches
features, filters correspondences geometrically, and fits an affine map in
level-L coordinates.  The resolution-scaled error 2^L * rmse decides
whether to accept the level or escalate to the next coarser one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .estimate import (
    DegenerateConfigurationError,
    FitResult,
    fit_affine_lsm,
    scaled_rmse,
)
from .features import CorrespondenceSet, detect_and_describe, ratio_match
from .gor import remove_outliers
from .imagecore import AffineTransform, GrayImage, downsample
from .lsr import SegmentationMask, segment

STATUS_SUCCESS = "success"
STATUS_NO_MATCHES = "escalated:insufficient-matches"
STATUS_DEGENERATE = "escalated:degenerate"
STATUS_FIT_FAILED = "escalated:fit-degenerate"
STATUS_RMSE = "escalated:rmse-above-epsilon"


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the registration loop, with studied defaults."""

    tau: float = 22.5
    d_ratio: float = 0.8
    epsilon: float = 1.0
    max_levels: int = 3
    flat_threshold: float = 2.0 / 255.0
    min_region_size: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be positive")
        if self.max_levels < 1:
            raise ValueError("max_levels must be at least 1")
        if not (0.0 < self.tau < 180.0):
            raise ValueError("tau must lie in (0, 180) degrees")
        if not (0.0 < self.d_ratio < 1.0):
            raise ValueError("d_ratio must lie in (0, 1)")
        if self.min_region_size < 1:
            raise ValueError("min_region_size must be at least 1")
        if self.flat_threshold < 0:
            raise ValueError("flat_threshold must be nonnegative")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class LevelDiagnostics:
    """What happened at one resolution level."""

    level: int
    width: int
    height: int
    initial_matches: int
    survivor_count: int
    scaled_rmse: float | None
    status: str
    initial_set: CorrespondenceSet | None = field(default=None, repr=False, compare=False)
    survivor_set: CorrespondenceSet | None = field(default=None, repr=False, compare=False)
    ref_mask: SegmentationMask | None = field(default=None, repr=False, compare=False)
    sensed_mask: SegmentationMask | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "width": self.width,
            "height": self.height,
            "initial_matches": self.initial_matches,
            "survivors": self.survivor_count,
            "scaled_rmse": self.scaled_rmse,
            "status": self.status,
        }


@dataclass(frozen=True)
class RegistrationReport:
    """Outcome of a full registration run.

    On success the transform maps full-resolution ref coordinates to
    full-resolution sensed coordinates, regardless of which level fit it.
    On failure the transform is None and level_used/scaled_rmse describe
    the best (lowest-error) level that produced a fit, if any did.
    """

    success: bool
    final_transform: AffineTransform | None
    level_used: int | None
    scaled_rmse: float | None
    survivors: CorrespondenceSet | None
    per_level: tuple[LevelDiagnostics, ...]

    def __post_init__(self):
        if self.success:
            if self.final_transform is None or self.survivors is None:
                raise ValueError("successful report requires transform and survivors")
            if len(self.survivors) < 3:
                raise ValueError("successful report requires >= 3 survivors")

    def to_dict(self) -> dict:
        surv = None
        if self.survivors is not None:
            surv = [
                [float(px), float(py), float(qx), float(qy)]
                for (px, py), (qx, qy) in zip(
                    self.survivors.ref_points, self.survivors.sensed_points
                )
            ]
        return {
            "success": self.success,
            "final_transform": (
                self.final_transform.to_dict() if self.final_transform else None
            ),
            "level_used": self.level_used,
            "scaled_rmse": self.scaled_rmse,
            "survivors": surv,
            "per_level": [d.to_dict() for d in self.per_level],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def rescale_transform(t: AffineTransform, level: int) -> AffineTransform:
    """Conjugate a level-L transform by the 2^L coordinate scaling.

    S o t o S^-1 leaves the linear part untouched and multiplies the
    translation by 2^L, mapping full-resolution coordinates directly.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    f = float(2 ** level)
    return AffineTransform(a=t.a, b=t.b, tx=t.tx * f, c=t.c, d=t.d, ty=t.ty * f)


def _run_level(
    ref: GrayImage, sensed: GrayImage, level: int, cfg: PipelineConfig,
    keep_sets: bool, keep_masks: bool,
) -> tuple[LevelDiagnostics, FitResult | None, CorrespondenceSet | None]:
    ref_l = downsample(ref, level)
    sen_l = downsample(sensed, level)
    ref_mask, _ = segment(ref_l, cfg.tau, cfg.flat_threshold, cfg.min_region_size)
    sen_mask, _ = segment(sen_l, cfg.tau, cfg.flat_threshold, cfg.min_region_size)
    ref_feats = detect_and_describe(ref_l, ref_mask)
    sen_feats = detect_and_describe(sen_l, sen_mask)
    initial = ratio_match(ref_feats, sen_feats, cfg.d_ratio)
    kept_initial = initial if keep_sets else None

    def diag(status, survivors=0, err=None, surv_set=None):
        return LevelDiagnostics(
            level=level, width=ref_l.width, height=ref_l.height,
            initial_matches=len(initial), survivor_count=survivors,
            scaled_rmse=err, status=status,
            initial_set=kept_initial, survivor_set=surv_set,
            ref_mask=ref_mask if keep_masks else None,
            sensed_mask=sen_mask if keep_masks else None,
        )

    if len(initial) < 3:
        return diag(STATUS_NO_MATCHES), None, None
    gor = remove_outliers(initial)
    survivors = gor.survivors
    surv_set = survivors if keep_sets else None
    if gor.degenerate or len(survivors) < 3:
        return diag(STATUS_DEGENERATE, len(survivors), surv_set=surv_set), None, None
    try:
        fit = fit_affine_lsm(survivors)
    except DegenerateConfigurationError:
        return diag(STATUS_FIT_FAILED, len(survivors), surv_set=surv_set), None, None
    err = scaled_rmse(fit, level)
    status = STATUS_SUCCESS if err < cfg.epsilon else STATUS_RMSE
    return diag(status, len(survivors), err, surv_set=surv_set), fit, survivors


def register(
    ref: GrayImage,
    sensed: GrayImage,
    cfg: PipelineConfig | None = None,
    keep_correspondences: bool = False,
    keep_masks: bool = False,
) -> RegistrationReport:
    """Run the full loop over levels 0 .. max_levels-1.

    Stops at the first level whose resolution-scaled error beats epsilon;
    degenerate outcomes (too few matches, too few survivors, rank-deficient
    fits) escalate to the next level instead of aborting.  A run where no
    level succeeds returns a failure report carrying the best level's
    numbers and no transform.
    """
    cfg = cfg or PipelineConfig()
    side = 2 ** cfg.max_levels
    if min(ref.width, ref.height, sensed.width, sensed.height) < side:
        raise ValueError("images too small for the configured level count")

    diagnostics: list[LevelDiagnostics] = []
    best: tuple[float, int, FitResult, CorrespondenceSet] | None = None
    for level in range(cfg.max_levels):
        diag, fit, survivors = _run_level(
            ref, sensed, level, cfg, keep_correspondences, keep_masks
        )
        diagnostics.append(diag)
        if fit is None:
            continue
        err = diag.scaled_rmse
        if diag.status == STATUS_SUCCESS:
            factor = float(2 ** level)
            return RegistrationReport(
                success=True,
                final_transform=rescale_transform(fit.transform, level),
                level_used=level,
                scaled_rmse=err,
                survivors=survivors.scaled(factor),
                per_level=tuple(diagnostics),
            )
        if best is None or err < best[0]:
            best = (err, level, fit, survivors)

    if best is None:
        return RegistrationReport(
            success=False, final_transform=None, level_used=None,
            scaled_rmse=None, survivors=None, per_level=tuple(diagnostics),
        )
    err, level, fit, survivors = best
    return RegistrationReport(
        success=False, final_transform=None, level_used=level,
        scaled_rmse=err, survivors=survivors.scaled(float(2 ** level)),
        per_level=tuple(diagnostics),
    )
