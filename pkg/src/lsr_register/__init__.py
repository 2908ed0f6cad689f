"""Automatic image registration via line-support region segmentation,
masked scale-space feature matching, and geometrical outlier removal.

Typical use::

    from lsr_register import load_image, register, PipelineConfig

    report = register(load_image("ref.png"), load_image("sensed.png"),
                      PipelineConfig(epsilon=1.0))
    if report.success:
        print(report.final_transform.to_json())
"""

__version__ = "0.1.0"

from .estimate import (
    DegenerateConfigurationError,
    FitResult,
    InsufficientCorrespondencesError,
    RansacFailedError,
    fit_affine_lsm,
    fit_affine_ransac,
    scaled_rmse,
)
from .evaluation import (
    GroundTruth,
    MatchingScore,
    RegistrationScore,
    corner_error,
    inject_outliers,
    score_matching,
    score_registration,
    synthesize_pair,
    synthetic_scene,
)
from .features import (
    CorrespondenceSet,
    Features,
    Keypoint,
    detect_and_describe,
    ratio_match,
)
from .gor import (
    DisparityLedger,
    GorResult,
    SignTable,
    brute_force_ledger,
    build_ledger,
    classify,
    edge_sign,
    remove_outliers,
)
from .imagecore import (
    AffineTransform,
    GradientField,
    GrayImage,
    ImageLoadError,
    checkerboard_mosaic,
    compute_gradient_field,
    downsample,
    load_image,
    save_image,
    warp_image,
)
from .lsr import (
    LineSupportRegion,
    SegmentationMask,
    grow_regions,
    rectangle_approx,
    render_mask,
    segment,
)
from .pipeline import (
    LevelDiagnostics,
    PipelineConfig,
    RegistrationReport,
    register,
    rescale_transform,
)

__all__ = [
    "__version__",
    "AffineTransform",
    "CorrespondenceSet",
    "DegenerateConfigurationError",
    "DisparityLedger",
    "Features",
    "FitResult",
    "GorResult",
    "GradientField",
    "GrayImage",
    "GroundTruth",
    "ImageLoadError",
    "InsufficientCorrespondencesError",
    "Keypoint",
    "LevelDiagnostics",
    "LineSupportRegion",
    "MatchingScore",
    "PipelineConfig",
    "RansacFailedError",
    "RegistrationReport",
    "RegistrationScore",
    "SegmentationMask",
    "SignTable",
    "brute_force_ledger",
    "build_ledger",
    "checkerboard_mosaic",
    "classify",
    "compute_gradient_field",
    "corner_error",
    "detect_and_describe",
    "downsample",
    "edge_sign",
    "fit_affine_lsm",
    "fit_affine_ransac",
    "grow_regions",
    "inject_outliers",
    "load_image",
    "ratio_match",
    "rectangle_approx",
    "register",
    "remove_outliers",
    "render_mask",
    "rescale_transform",
    "save_image",
    "scaled_rmse",
    "score_matching",
    "score_registration",
    "segment",
    "synthesize_pair",
    "synthetic_scene",
    "warp_image",
]
