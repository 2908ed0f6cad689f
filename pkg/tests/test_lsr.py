"""Region growing, rectangle fitting, and mask rendering tests."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_bar_image, step_image
from lsr_register.imagecore import GradientField, GrayImage, compute_gradient_field
from lsr_register.lsr import (
    DEFAULT_MIN_REGION_SIZE,
    DEFAULT_TAU_DEG,
    LineSupportRegion,
    RegionState,
    SegmentationMask,
    circular_distance_deg,
    grow_regions,
    rectangle_approx,
    regions_to_csv,
    render_mask,
    segment,
)


def field_from_arrays(angle, magnitude=None, defined=None):
    angle = np.asarray(angle, dtype=np.float64)
    if magnitude is None:
        magnitude = np.ones_like(angle)
    if defined is None:
        defined = np.ones(angle.shape, dtype=bool)
    return GradientField(
        magnitude=np.array(magnitude, dtype=np.float64),
        angle_deg=angle.copy(),
        defined=np.array(defined, dtype=bool),
    )


def random_field(seed, shape=(12, 14)):
    rng = np.random.default_rng(seed)
    defined = rng.random(shape) < 0.6
    defined[shape[0] // 2, shape[1] // 2] = True  # never fully empty
    angle = rng.uniform(0.0, 360.0, shape)
    magnitude = np.where(defined, rng.uniform(0.1, 1.0, shape), 0.0)
    return field_from_arrays(angle, magnitude, defined)


# ---------------------------------------------------------- circular distance


def test_circular_distance_wraps():
    assert circular_distance_deg(0.0, 350.0) == pytest.approx(10.0)
    assert circular_distance_deg(350.0, 0.0) == pytest.approx(10.0)
    assert circular_distance_deg(90.0, 270.0) == pytest.approx(180.0)
    assert circular_distance_deg(45.0, 45.0) == 0.0


def test_circular_distance_vectorizes():
    out = circular_distance_deg(np.array([0.0, 180.0, 359.0]), 1.0)
    assert np.allclose(out, [1.0, 179.0, 2.0])


@given(st.floats(0, 360), st.floats(0, 360))
def test_circular_distance_symmetric_and_bounded(a, b):
    d = circular_distance_deg(a, b)
    assert 0.0 <= d <= 180.0
    assert d == pytest.approx(circular_distance_deg(b, a), abs=1e-9)


# --------------------------------------------------------------- RegionState


def test_region_state_two_orthogonal_pixels_average_to_45():
    # atan2(sin 0 + sin 90, cos 0 + cos 90) = atan2(1, 1) = 45 degrees
    region = RegionState()
    region.add(0, 0, 0.0)
    region.add(1, 0, 90.0)
    assert region.angle_deg == pytest.approx(45.0)


def test_region_state_equal_angles_return_that_angle():
    region = RegionState()
    for i in range(5):
        region.add(i, 0, 30.0)
    assert region.angle_deg == pytest.approx(30.0)


def test_region_state_empty_angle_raises():
    with pytest.raises(ValueError):
        RegionState().angle_deg


# -------------------------------------------------------------- grow_regions


def test_grow_single_uniform_blob():
    # a 5x8 block of identical 30-degree pixels is one region at 30 degrees
    defined = np.zeros((10, 12), dtype=bool)
    defined[2:7, 1:9] = True
    field = field_from_arrays(np.full((10, 12), 30.0), defined=defined)
    regions = grow_regions(field, 22.5, min_region_size=20)
    assert len(regions) == 1
    assert len(regions[0]) == 40
    assert regions[0].angle_deg == pytest.approx(30.0)


def test_grow_step_edge_column():
    # the analytic step field defines one 63-pixel column at angle 90
    img = step_image(width=16, height=64)
    field = compute_gradient_field(img)
    regions = grow_regions(field, 22.5, min_region_size=20)
    assert len(regions) == 1
    assert len(regions[0]) == 63
    assert len(regions[0]) >= 32
    assert circular_distance_deg(regions[0].angle_deg, 90.0) < 22.5


def test_grow_incompatible_angles_stay_separate():
    # two half-planes 90 degrees apart cannot join under a 22.5 tolerance
    angle = np.zeros((8, 8))
    angle[:, 4:] = 90.0
    field = field_from_arrays(angle)
    regions = grow_regions(field, 22.5, min_region_size=4)
    assert len(regions) == 2
    assert sorted(len(r) for r in regions) == [32, 32]


def test_grow_seeds_in_decreasing_magnitude_order():
    # the stronger of two incompatible blobs must be grown (and listed) first
    angle = np.zeros((6, 9))
    angle[:, 5:] = 90.0
    magnitude = np.ones((6, 9))
    magnitude[:, 5:] = 2.0
    defined = np.ones((6, 9), dtype=bool)
    defined[:, 4] = False  # gap so the blobs stay disconnected
    field = field_from_arrays(angle, magnitude, defined)
    regions = grow_regions(field, 22.5, min_region_size=4)
    assert len(regions) == 2
    assert regions[0].angle_deg == pytest.approx(90.0)
    assert regions[1].angle_deg == pytest.approx(0.0)


def test_grow_small_regions_dropped_but_consumed():
    # an isolated pixel below min_region_size disappears from the output
    defined = np.zeros((8, 8), dtype=bool)
    defined[1, 1] = True
    defined[4:6, 3:8] = True
    field = field_from_arrays(np.full((8, 8), 10.0), defined=defined)
    regions = grow_regions(field, 22.5, min_region_size=5)
    assert len(regions) == 1
    assert len(regions[0]) == 10
    assert (1, 1) not in regions[0].member_pixels


def test_grow_validates_inputs():
    field = random_field(0)
    with pytest.raises(ValueError):
        grow_regions(field, 0.0)
    with pytest.raises(ValueError):
        grow_regions(field, 180.0)
    empty = field_from_arrays(np.zeros((4, 4)), defined=np.zeros((4, 4), dtype=bool))
    with pytest.raises(ValueError, match="defined"):
        grow_regions(empty, 22.5)


@given(st.integers(0, 10**6))
def test_grow_partitions_defined_pixels(seed):
    field = random_field(seed)
    regions = grow_regions(field, 40.0, min_region_size=1)
    seen = set()
    for region in regions:
        for px in region.member_pixels:
            assert px not in seen
            seen.add(px)
    expected = {(int(x), int(y)) for y, x in np.argwhere(field.defined)}
    assert seen == expected


@given(st.integers(0, 10**6))
def test_grow_every_join_respected_tolerance(seed):
    tau = 40.0
    field = random_field(seed)
    for region in grow_regions(field, tau, min_region_size=1):
        for x, y, pixel_angle, angle_before in region.joins:
            assert circular_distance_deg(pixel_angle, angle_before) < tau


@given(st.integers(0, 10**6))
def test_grow_incremental_angle_matches_recomputation(seed):
    field = random_field(seed)
    for region in grow_regions(field, 40.0, min_region_size=1):
        rads = [math.radians(a) for _, _, a, _ in region.joins]
        fresh = math.atan2(sum(math.sin(r) for r in rads),
                           sum(math.cos(r) for r in rads))
        incremental = math.radians(region.angle_deg)
        diff = abs((incremental - fresh + math.pi) % (2 * math.pi) - math.pi)
        assert diff < 1e-9


# ---------------------------------------------------------- rectangle_approx


def test_rectangle_single_pixel():
    defined = np.zeros((8, 8), dtype=bool)
    defined[5, 5] = True
    field = field_from_arrays(np.zeros((8, 8)), defined=defined)
    region = RegionState()
    region.add(5, 5, 0.0)
    rect = rectangle_approx(region, field)
    assert (rect.cx, rect.cy) == (5.0, 5.0)
    assert rect.length == 1.0 and rect.width == 1.0
    assert rect.member_count == 1


def test_rectangle_collinear_row():
    # ten equal-weight pixels along y = 3: symmetry forces the axis onto x
    field = field_from_arrays(np.zeros((8, 12)))
    region = RegionState()
    for x in range(10):
        region.add(x, 3, 0.0)
    rect = rectangle_approx(region, field)
    assert rect.cx == pytest.approx(4.5)
    assert rect.cy == pytest.approx(3.0)
    assert rect.angle_deg in (0.0, 180.0) or rect.angle_deg == pytest.approx(0.0)
    assert rect.length == pytest.approx(10.0)
    assert rect.width == pytest.approx(1.0)


def test_rectangle_l_shape_matches_independent_eigensolver():
    # weighted second moments of an L-shaped set, diagonalized with
    # numpy's symmetric eigensolver as the oracle
    pixels = [(x, 0) for x in range(12)] + [(0, y) for y in range(1, 9)]
    magnitude = np.zeros((16, 16))
    rng = np.random.default_rng(7)
    region = RegionState()
    for x, y in pixels:
        magnitude[y, x] = rng.uniform(0.5, 1.5)
        region.add(x, y, 0.0)
    field = field_from_arrays(np.zeros((16, 16)), magnitude)

    pts = np.array(pixels, dtype=float)
    wts = magnitude[pts[:, 1].astype(int), pts[:, 0].astype(int)]
    cx, cy = (wts[:, None] * pts).sum(axis=0) / wts.sum()
    d = pts - (cx, cy)
    cov = (wts[:, None, None] * d[:, :, None] * d[:, None, :]).sum(axis=0) / wts.sum()
    eigvals, eigvecs = np.linalg.eigh(cov)
    principal = eigvecs[:, np.argmax(eigvals)]
    oracle_angle = math.degrees(math.atan2(principal[1], principal[0])) % 180.0

    rect = rectangle_approx(region, field)
    assert rect.cx == pytest.approx(cx, abs=1e-9)
    assert rect.cy == pytest.approx(cy, abs=1e-9)
    assert circular_distance_deg(2 * rect.angle_deg, 2 * oracle_angle) < 1e-7


@given(st.integers(0, 10**6))
def test_rectangle_axis_agrees_with_eigensolver_on_random_sets(seed):
    # anisotropic point clouds (x stretched 4:1) keep the eigenvalues well
    # separated so both solvers pick the same axis
    rng = np.random.default_rng(seed)
    n = rng.integers(5, 30)
    xs = rng.integers(0, 32, n)
    ys = rng.integers(0, 8, n)
    pts = {(int(x), int(y)) for x, y in zip(xs, ys)}
    if len({p[0] for p in pts}) < 3:
        return  # too concentrated to have a meaningful long axis
    magnitude = np.zeros((8, 32))
    region = RegionState()
    for x, y in sorted(pts):
        magnitude[y, x] = rng.uniform(0.5, 2.0)
        region.add(x, y, 0.0)
    field = field_from_arrays(np.zeros((8, 32)), magnitude)
    rect = rectangle_approx(region, field)

    arr = np.array(sorted(pts), dtype=float)
    wts = magnitude[arr[:, 1].astype(int), arr[:, 0].astype(int)]
    c = (wts[:, None] * arr).sum(axis=0) / wts.sum()
    d = arr - c
    cov = (wts[:, None, None] * d[:, :, None] * d[:, None, :]).sum(axis=0) / wts.sum()
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[1] - eigvals[0] < 1e-6:
        return  # nearly isotropic: axis genuinely ambiguous
    principal = eigvecs[:, 1]
    oracle_angle = math.degrees(math.atan2(principal[1], principal[0])) % 180.0
    assert circular_distance_deg(2 * rect.angle_deg, 2 * oracle_angle) < 1e-6
    assert rect.length >= rect.width > 0


@given(st.integers(0, 10**6))
def test_rectangle_extents_equal_projection_spans(seed):
    # length and width are the member projection ranges on the fitted axes
    # plus the half-pixel expansion on each side
    field = random_field(seed)
    for region in grow_regions(field, 40.0, min_region_size=1):
        rect = rectangle_approx(region, field)
        r = math.radians(rect.angle_deg)
        ux, uy = math.cos(r), math.sin(r)
        pts = np.asarray(region.member_pixels, dtype=float)
        du = (pts[:, 0] - rect.cx) * ux + (pts[:, 1] - rect.cy) * uy
        dv = -(pts[:, 0] - rect.cx) * uy + (pts[:, 1] - rect.cy) * ux
        assert du.max() - du.min() == pytest.approx(rect.length - 1.0, abs=1e-9)
        assert dv.max() - dv.min() == pytest.approx(rect.width - 1.0, abs=1e-9)


def test_rectangle_empty_region_raises():
    with pytest.raises(ValueError):
        rectangle_approx(RegionState(), random_field(0))


def test_line_support_region_validates_extents():
    with pytest.raises(ValueError):
        LineSupportRegion(0, 0, 0.0, 1.0, 2.0, 5)  # width > length
    with pytest.raises(ValueError):
        LineSupportRegion(0, 0, 0.0, 1.0, 0.0, 5)  # zero width
    with pytest.raises(ValueError):
        LineSupportRegion(0, 0, 0.0, 2.0, 1.0, 0)  # no members


def test_line_support_region_endpoints_span_length():
    rect = LineSupportRegion(10.0, 5.0, 0.0, 8.0, 2.0, 16)
    (x0, y0), (x1, y1) = rect.endpoints()
    assert (x0, y0) == pytest.approx((6.0, 5.0))
    assert (x1, y1) == pytest.approx((14.0, 5.0))


# --------------------------------------------------------------- render_mask


def brute_force_bits(regions, width, height):
    bits = np.zeros((height, width), dtype=bool)
    for y in range(height):
        for x in range(width):
            for reg in regions:
                r = math.radians(reg.angle_deg)
                ux, uy = math.cos(r), math.sin(r)
                du = (x - reg.cx) * ux + (y - reg.cy) * uy
                dv = -(x - reg.cx) * uy + (y - reg.cy) * ux
                if abs(du) <= reg.length / 2.0 and abs(dv) <= reg.width / 2.0:
                    bits[y, x] = True
                    break
    return bits


def test_render_empty_list_gives_zero_mask():
    mask = render_mask([], 6, 4)
    assert mask.shape == (4, 6)
    assert not mask.bits.any()


def test_render_axis_aligned_three_pixel_bar():
    reg = LineSupportRegion(2.0, 2.0, 0.0, 3.0, 1.0, 3)
    mask = render_mask([reg], 5, 5)
    expect = np.zeros((5, 5), dtype=bool)
    expect[2, 1:4] = True
    assert np.array_equal(mask.bits, expect)


def test_render_overlapping_rectangles_match_brute_force_union():
    regions = [
        LineSupportRegion(5.0, 5.0, 30.0, 8.0, 3.0, 20),
        LineSupportRegion(7.0, 4.0, 120.0, 6.0, 2.0, 12),
    ]
    mask = render_mask(regions, 14, 12)
    oracle = brute_force_bits(regions, 14, 12)
    assert np.array_equal(mask.bits, oracle)
    assert mask.bits.sum() == oracle.sum()


@given(st.integers(0, 10**6))
def test_render_random_rectangles_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    regions = []
    for _ in range(rng.integers(1, 4)):
        length = rng.uniform(1.0, 9.0)
        regions.append(
            LineSupportRegion(
                cx=rng.uniform(0, 15),
                cy=rng.uniform(0, 11),
                angle_deg=rng.uniform(0, 180),
                length=length,
                width=rng.uniform(0.5, length),
                member_count=5,
            )
        )
    mask = render_mask(regions, 16, 12)
    assert np.array_equal(mask.bits, brute_force_bits(regions, 16, 12))


def test_render_is_monotone_in_the_region_list():
    rng = np.random.default_rng(11)
    regions = [
        LineSupportRegion(rng.uniform(2, 10), rng.uniform(2, 10),
                          rng.uniform(0, 180), 5.0, 2.0, 10)
        for _ in range(5)
    ]
    prev = np.zeros((12, 12), dtype=bool)
    for k in range(1, len(regions) + 1):
        bits = render_mask(regions[:k], 12, 12).bits
        assert np.array_equal(prev & bits, prev)  # no bit cleared
        prev = bits


def test_segmentation_mask_accessors():
    mask = SegmentationMask(np.eye(3, dtype=bool))
    assert mask.width == 3 and mask.height == 3
    gray = mask.as_gray()
    assert np.array_equal(gray.pixels, np.eye(3))
    with pytest.raises(ValueError):
        mask.bits[0, 0] = False


# ------------------------------------------------------------------- segment


def test_segment_constant_image_is_empty():
    mask, regions = segment(GrayImage(np.full((16, 16), 0.5)))
    assert regions == []
    assert not mask.bits.any()


def test_segment_bar_regions_align_with_bar(bar64):
    mask, regions = segment(bar64)
    assert len(regions) >= 1
    assert mask.bits.any()
    longest = max(regions, key=lambda r: r.length)
    assert circular_distance_deg(2 * longest.angle_deg, 2 * 0.0) < 2 * DEFAULT_TAU_DEG


def test_segment_rotated_bar_regions_follow_the_rotation():
    img = make_bar_image(size=64, angle_deg=25.0, length=40.0, width=8.0)
    _, regions = segment(img)
    longest = max(regions, key=lambda r: r.length)
    # doubled-angle distance treats 25 and 205 as the same axis
    assert circular_distance_deg(2 * longest.angle_deg, 2 * 25.0) < 2 * DEFAULT_TAU_DEG


def test_segment_default_tolerance_is_22_5():
    assert DEFAULT_TAU_DEG == 22.5
    assert segment.__defaults__[0] == 22.5


def test_segment_is_deterministic(bar64):
    m1, r1 = segment(bar64)
    m2, r2 = segment(bar64)
    assert np.array_equal(m1.bits, m2.bits)
    assert r1 == r2


def test_segment_respects_min_region_size(bar64):
    _, few = segment(bar64, min_region_size=10**6)
    assert few == []


# ----------------------------------------------------------------------- csv


def test_regions_to_csv_round_trips_exactly():
    regions = [
        LineSupportRegion(1.5, 2.25, 33.125, 7.0, 2.0, 21),
        LineSupportRegion(0.1, 0.2, 170.0, 3.5, 3.5, 40),
    ]
    text = regions_to_csv(regions)
    lines = text.strip().splitlines()
    assert lines[0] == "cx,cy,angle_deg,length,width,count"
    assert len(lines) == 3
    for line, reg in zip(lines[1:], regions):
        cx, cy, angle, length, width, count = line.split(",")
        assert float(cx) == reg.cx and float(cy) == reg.cy
        assert float(angle) == reg.angle_deg
        assert float(length) == reg.length and float(width) == reg.width
        assert int(count) == reg.member_count


def test_regions_to_csv_empty_is_header_only():
    assert regions_to_csv([]) == "cx,cy,angle_deg,length,width,count\n"


def test_default_min_region_size_is_twenty():
    assert DEFAULT_MIN_REGION_SIZE == 20
