"""Tests for the multi-resolution registration loop.

The expensive fixtures (synthetic scenes and full register() runs) are
module-scoped; assertions about one report are grouped so each pipeline
run is paid for once.
"""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsr_register.evaluation import corner_error, synthesize_pair, synthetic_scene
from lsr_register.imagecore import AffineTransform, GrayImage
from lsr_register.pipeline import (
    STATUS_DEGENERATE,
    STATUS_FIT_FAILED,
    STATUS_NO_MATCHES,
    STATUS_RMSE,
    STATUS_SUCCESS,
    LevelDiagnostics,
    PipelineConfig,
    RegistrationReport,
    register,
    rescale_transform,
)


@pytest.fixture(scope="module")
def scene160():
    return synthetic_scene(
        seed=3,
        size=160,
        n_shapes=30,
        content_radius_frac=0.38,
        half_length_range=(12.0, 30.0),
        half_width_range=(3.0, 7.0),
    )


@pytest.fixture(scope="module")
def warp_truth():
    rot = AffineTransform.rotation(30.0).about(79.5, 79.5)
    return rot.compose(AffineTransform.translation(6.0, -4.0))


@pytest.fixture(scope="module")
def warped_pair(scene160, warp_truth):
    return synthesize_pair(scene160, warp_truth)


@pytest.fixture(scope="module")
def self_report(scene160):
    return register(scene160, scene160)


@pytest.fixture(scope="module")
def warp_report(warped_pair):
    ref, sensed = warped_pair
    return register(ref, sensed, keep_correspondences=True, keep_masks=True)


@pytest.fixture(scope="module")
def noisy_report(warped_pair):
    # Heavy sensor noise wrecks the full-resolution fit but averages away
    # after one halving, so the loop has to escalate to succeed.
    ref, sensed = warped_pair
    rng = np.random.default_rng(99)
    noisy = GrayImage(np.clip(sensed.pixels + rng.normal(0.0, 0.06, sensed.pixels.shape), 0.0, 1.0))
    cfg = PipelineConfig(max_levels=2, epsilon=2.5)
    return register(ref, noisy, cfg, keep_correspondences=True)


@pytest.fixture(scope="module")
def tiny_epsilon_report(warped_pair):
    ref, sensed = warped_pair
    return register(ref, sensed, PipelineConfig(epsilon=1e-9))


# ---------------------------------------------------------------------------
# configuration object


def test_config_defaults():
    cfg = PipelineConfig()
    assert cfg.tau == 22.5
    assert cfg.d_ratio == 0.8
    assert cfg.epsilon == 1.0
    assert cfg.max_levels == 3
    assert cfg.flat_threshold == 2.0 / 255.0
    assert cfg.min_region_size == 20
    assert cfg.seed == 0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epsilon": 0.0},
        {"epsilon": -1.0},
        {"max_levels": 0},
        {"tau": 0.0},
        {"tau": 180.0},
        {"d_ratio": 0.0},
        {"d_ratio": 1.0},
        {"min_region_size": 0},
        {"flat_threshold": -0.1},
    ],
)
def test_config_rejects_out_of_range_values(kwargs):
    with pytest.raises(ValueError):
        PipelineConfig(**kwargs)


def test_config_dict_round_trip():
    cfg = PipelineConfig(tau=30.0, epsilon=0.5, max_levels=2, seed=7)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_config_from_dict_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        PipelineConfig.from_dict({"epsilon": 1.0, "epsilonn": 2.0})


# ---------------------------------------------------------------------------
# transform rescaling


def test_rescale_level_zero_is_identity_operation():
    t = AffineTransform(1.1, -0.3, 4.25, 0.2, 0.9, -7.5)
    assert rescale_transform(t, 0) == t


def test_rescale_doubles_translation_per_level():
    t = AffineTransform.translation(1.0, 2.0)
    assert rescale_transform(t, 1) == AffineTransform.translation(2.0, 4.0)
    assert rescale_transform(t, 3) == AffineTransform.translation(8.0, 16.0)


def test_rescale_leaves_linear_part_untouched():
    t = AffineTransform(0.8, 0.6, 5.0, -0.6, 0.8, -3.0)
    up = rescale_transform(t, 4)
    assert (up.a, up.b, up.c, up.d) == (t.a, t.b, t.c, t.d)
    assert (up.tx, up.ty) == (t.tx * 16.0, t.ty * 16.0)


@given(
    coeffs=st.tuples(*[st.integers(min_value=-8, max_value=8) for _ in range(6)]),
    level=st.integers(min_value=0, max_value=6),
)
@settings(max_examples=100)
def test_rescale_agrees_with_scale_conjugation(coeffs, level):
    # Conjugating by the dyadic coordinate scaling is exact in floats, so
    # the shortcut and the three-way composition must agree bit for bit.
    a, b, tx, c, d, ty = (float(v) for v in coeffs)
    t = AffineTransform(a, b, tx, c, d, ty)
    f = float(2**level)
    up = AffineTransform.scaling(f).compose(t).compose(AffineTransform.scaling(1.0 / f))
    assert rescale_transform(t, level) == up


def test_rescale_rejects_negative_level():
    with pytest.raises(ValueError, match="nonnegative"):
        rescale_transform(AffineTransform.identity(), -1)


# ---------------------------------------------------------------------------
# registration: success paths


def test_self_registration_recovers_identity(self_report):
    rep = self_report
    assert rep.success
    assert rep.level_used == 0
    assert rep.scaled_rmse < 1e-9
    f = rep.final_transform
    ident = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
    got = (f.a, f.b, f.tx, f.c, f.d, f.ty)
    assert max(abs(g - i) for g, i in zip(got, ident)) < 1e-9


def test_self_registration_omits_diagnostic_payloads_by_default(self_report):
    diag = self_report.per_level[0]
    assert diag.initial_set is None
    assert diag.survivor_set is None
    assert diag.ref_mask is None
    assert diag.sensed_mask is None


def test_rotated_pair_registers_at_full_resolution(warp_report, warp_truth):
    rep = warp_report
    assert rep.success
    assert rep.level_used == 0
    assert rep.per_level[0].status == STATUS_SUCCESS
    assert rep.scaled_rmse < 1.0
    assert corner_error(rep.final_transform, warp_truth, 160, 160) < 3.0


def test_success_report_carries_at_least_three_survivors(warp_report):
    assert len(warp_report.survivors) >= 3
    assert warp_report.per_level[-1].survivor_count == len(warp_report.survivors)


def test_keep_flags_store_sets_and_masks(warp_report):
    diag = warp_report.per_level[0]
    assert diag.initial_set is not None
    assert diag.survivor_set is not None
    assert len(diag.initial_set) >= len(diag.survivor_set)
    assert diag.ref_mask is not None
    assert diag.sensed_mask is not None
    assert diag.ref_mask.bits.shape == (diag.height, diag.width)
    assert diag.sensed_mask.bits.shape == (diag.height, diag.width)


# ---------------------------------------------------------------------------
# registration: escalation to coarser levels


def test_noise_forces_escalation_to_level_one(noisy_report, warp_truth):
    rep = noisy_report
    assert rep.success
    assert rep.level_used == 1
    assert [d.status for d in rep.per_level] == [STATUS_DEGENERATE, STATUS_SUCCESS]
    assert [(d.width, d.height) for d in rep.per_level] == [(160, 160), (80, 80)]
    # The coarse fit is rough but must still be the right transform, not a
    # collusive fit on a handful of junk matches.
    assert corner_error(rep.final_transform, warp_truth, 160, 160) < 12.0


def test_reported_error_is_recomputable_from_the_report(noisy_report):
    # survivors are stored in full-resolution coordinates and the transform
    # maps full-resolution ref to full-resolution sensed, so the RMS of the
    # residuals it leaves equals the resolution-scaled error exactly.
    rep = noisy_report
    res = rep.final_transform.apply(rep.survivors.ref_points) - rep.survivors.sensed_points
    rms = math.sqrt(float(np.mean(np.sum(res * res, axis=1))))
    assert abs(rms - rep.scaled_rmse) < 1e-12


def test_survivors_are_rescaled_to_full_resolution(noisy_report):
    rep = noisy_report
    level_set = rep.per_level[1].survivor_set
    assert np.array_equal(rep.survivors.ref_points, level_set.ref_points * 2.0)
    assert np.array_equal(rep.survivors.sensed_points, level_set.sensed_points * 2.0)


# ---------------------------------------------------------------------------
# registration: failure paths


def test_unrelated_scenes_fail_honestly():
    a = synthetic_scene(
        seed=11, size=128, n_shapes=25, content_radius_frac=0.38,
        half_length_range=(10.0, 24.0), half_width_range=(3.0, 6.0),
    )
    b = synthetic_scene(
        seed=12, size=128, n_shapes=25, content_radius_frac=0.38,
        half_length_range=(10.0, 24.0), half_width_range=(3.0, 6.0),
    )
    cfg = PipelineConfig(max_levels=2)
    rep = register(a, b, cfg)
    assert not rep.success
    assert rep.final_transform is None
    allowed = {STATUS_NO_MATCHES, STATUS_DEGENERATE, STATUS_FIT_FAILED, STATUS_RMSE}
    assert all(d.status in allowed for d in rep.per_level)


def test_failure_report_carries_the_best_fitting_level(tiny_epsilon_report):
    rep = tiny_epsilon_report
    assert not rep.success
    assert rep.final_transform is None
    fitted = [d for d in rep.per_level if d.scaled_rmse is not None]
    assert fitted, "expected at least one level to produce a fit"
    best = min(fitted, key=lambda d: d.scaled_rmse)
    assert rep.level_used == best.level
    assert rep.scaled_rmse == best.scaled_rmse
    assert rep.survivors is not None


def test_levels_halve_dimensions(tiny_epsilon_report):
    dims = [(d.width, d.height) for d in tiny_epsilon_report.per_level]
    assert dims == [(160, 160), (80, 80), (40, 40)]


def test_constant_images_produce_no_matches_at_any_level():
    flat = GrayImage(np.full((64, 64), 0.5))
    rep = register(flat, flat)
    assert not rep.success
    assert rep.level_used is None
    assert rep.scaled_rmse is None
    assert rep.survivors is None
    assert [d.status for d in rep.per_level] == [STATUS_NO_MATCHES] * 3
    assert all(d.initial_matches == 0 for d in rep.per_level)


def test_images_too_small_for_level_count_are_rejected():
    small = GrayImage(np.zeros((4, 4)))
    with pytest.raises(ValueError, match="too small"):
        register(small, small, PipelineConfig(max_levels=3))


# ---------------------------------------------------------------------------
# report object and serialization


def test_successful_report_requires_transform_and_survivors():
    with pytest.raises(ValueError, match="transform and survivors"):
        RegistrationReport(
            success=True, final_transform=None, level_used=0,
            scaled_rmse=0.0, survivors=None, per_level=(),
        )


def test_report_json_structure(warp_report):
    doc = json.loads(warp_report.to_json())
    assert set(doc) == {
        "success", "final_transform", "level_used",
        "scaled_rmse", "survivors", "per_level",
    }
    assert doc["success"] is True
    assert list(doc["final_transform"]) == ["a", "b", "tx", "c", "d", "ty"]
    assert all(len(row) == 4 for row in doc["survivors"])
    assert all(isinstance(v, float) for row in doc["survivors"] for v in row)
    for entry in doc["per_level"]:
        assert set(entry) == {
            "level", "width", "height", "initial_matches",
            "survivors", "scaled_rmse", "status",
        }


def test_level_diagnostics_to_dict_uses_plain_fields():
    diag = LevelDiagnostics(
        level=2, width=40, height=30, initial_matches=9,
        survivor_count=5, scaled_rmse=0.25, status=STATUS_SUCCESS,
    )
    assert diag.to_dict() == {
        "level": 2, "width": 40, "height": 30, "initial_matches": 9,
        "survivors": 5, "scaled_rmse": 0.25, "status": STATUS_SUCCESS,
    }


def test_registration_is_deterministic(warped_pair):
    ref, sensed = warped_pair
    first = register(ref, sensed).to_json()
    second = register(ref, sensed).to_json()
    assert first == second
