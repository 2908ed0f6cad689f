"""Shared fixtures and synthetic-image helpers for the test suite."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lsr_register.imagecore import GrayImage

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def make_bar_image(
    size=64,
    cx=None,
    cy=None,
    angle_deg=0.0,
    length=40.0,
    width=8.0,
    fg=1.0,
    bg=0.0,
    supersample=4,
):
    """Anti-aliased oriented bar on a flat background.

    The bar is an oriented rectangle centered at (cx, cy) whose long axis
    points along ``angle_deg``; coverage is computed on a ``supersample``-x
    grid and mean-pooled, giving soft edges like a real photographed line.
    """
    cx = size / 2.0 if cx is None else cx
    cy = size / 2.0 if cy is None else cy
    ss = supersample
    big = size * ss
    ys, xs = np.mgrid[0:big, 0:big]
    # supersample cell centers in image coordinates
    px = (xs + 0.5) / ss - 0.5
    py = (ys + 0.5) / ss - 0.5
    r = math.radians(angle_deg)
    ux, uy = math.cos(r), math.sin(r)
    du = (px - cx) * ux + (py - cy) * uy
    dv = -(px - cx) * uy + (py - cy) * ux
    inside = (np.abs(du) <= length / 2.0) & (np.abs(dv) <= width / 2.0)
    coverage = inside.reshape(size, ss, size, ss).mean(axis=(1, 3))
    return GrayImage(bg + (fg - bg) * coverage)


def step_image(width=16, height=16, low=0.0, high=1.0):
    """Vertical step edge: left half ``low``, right half ``high``."""
    pixels = np.full((height, width), low)
    pixels[:, width // 2:] = high
    return GrayImage(pixels)


@pytest.fixture
def bar64():
    """A horizontal bright bar on black, the bread-and-butter lsr fixture."""
    return make_bar_image(size=64, angle_deg=0.0, length=40.0, width=8.0)
