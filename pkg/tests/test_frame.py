from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidcorrupt.errors import InvalidInputError, InvalidParameterError
from vidcorrupt.frame import (Clip, Frame, RgbImage, rescale, rgb_to_ycbcr, scaled_width,
                              ycbcr_to_rgb)

from conftest import constant_clip, textured_clip


def test_white_and_black_map_to_neutral_chroma():
    for value in (255, 0):
        f = rgb_to_ycbcr(RgbImage.filled(8, 8, (value,) * 3))
        assert np.all(f.y == value)
        assert np.all(f.cb == 128) and np.all(f.cr == 128)


def test_pure_red_matches_bt601_full_range():
    # 0.299*255 = 76.245, 128 - 0.168736*255 = 84.97, 128 + 0.5*255 = 255.5 (clamped)
    f = rgb_to_ycbcr(RgbImage.filled(4, 4, (255, 0, 0)))
    assert np.all(f.y == 76)
    assert np.all(f.cb == 85)
    assert np.all(f.cr == 255)


@pytest.mark.parametrize("y", [0, 255])
def test_neutral_frame_to_rgb(y):
    rgb = ycbcr_to_rgb(Frame.constant(4, 4, y, 128, 128))
    assert np.all(rgb.data == y)


def test_gray_ramp_round_trip_is_within_two():
    levels = np.arange(256, dtype=np.uint8)
    img = np.repeat(np.repeat(levels[None, :, None], 2, axis=0), 3, axis=2)
    back = ycbcr_to_rgb(rgb_to_ycbcr(RgbImage(img))).data
    assert np.abs(back.astype(int) - img).max() <= 2


def test_odd_sized_rgb_is_padded_and_croppable():
    rng = np.random.default_rng(3)
    img = RgbImage(rng.integers(0, 256, (5, 7, 3), dtype=np.uint8))
    f = rgb_to_ycbcr(img)
    assert (f.width, f.height) == (8, 6)
    assert ycbcr_to_rgb(f, crop_to=(7, 5)).data.shape == (5, 7, 3)


def test_frame_rejects_bad_chroma_shape():
    with pytest.raises(InvalidInputError):
        Frame(np.zeros((4, 4), np.uint8), np.zeros((3, 2), np.uint8), np.zeros((2, 2), np.uint8))


def test_clip_invariants():
    with pytest.raises(InvalidInputError):
        Clip(np.zeros((0, 4, 4), np.uint8), np.zeros((0, 2, 2), np.uint8), np.zeros((0, 2, 2), np.uint8))
    c = constant_clip(frames=10, fps=Fraction(30000, 1001))
    assert c.duration_seconds == pytest.approx(10 * 1001 / 30000)
    with pytest.raises(InvalidInputError):
        c.replace(fps=0)
    with pytest.raises(InvalidInputError):
        Clip.from_frames([Frame.constant(4, 4), Frame.constant(6, 4)])


def test_planes_are_read_only():
    c = constant_clip()
    with pytest.raises(ValueError):
        c.y[0, 0, 0] = 1


def test_same_height_rescale_is_identity():
    c = textured_clip(width=128, height=72, frames=2)
    assert rescale(c, 72) is c


def test_rescale_720p_to_240_width_is_426():
    assert scaled_width(1280, 720, 240) == 426
    c = constant_clip(frames=1, width=1280, height=720)
    out = rescale(c, 240)
    assert (out.width, out.height) == (426, 240)


def test_tiny_constant_upscale_stays_constant():
    c = constant_clip(frames=1, width=2, height=2, y=100)
    out = rescale(c, 16)
    assert out.height == 16 and np.all(out.y == 100)


@pytest.mark.parametrize("h", [14, 15, 17])
def test_rescale_rejects_small_or_odd_targets(h):
    with pytest.raises(InvalidParameterError):
        rescale(constant_clip(), h)


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 60).map(lambda v: 2 * v), st.integers(0, 255), st.integers(0, 255))
def test_rescale_constant_stays_constant(target, yv, cv):
    c = constant_clip(frames=1, width=48, height=32, y=yv, cb=cv, cr=255 - cv)
    out = rescale(c, target)
    assert np.all(out.y == yv) and np.all(out.cb == cv) and np.all(out.cr == 255 - cv)


@settings(max_examples=20, deadline=None)
@given(st.integers(8, 48).map(lambda v: 2 * v))
def test_rescale_is_idempotent_at_fixed_target(target):
    c = textured_clip(frames=1, width=80, height=48)
    once = rescale(c, target)
    assert rescale(once, target) == once


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 255))
def test_neutral_chroma_luma_error_at_most_one(level):
    f = Frame.constant(4, 4, level, 128, 128)
    back = rgb_to_ycbcr(ycbcr_to_rgb(f))
    assert np.abs(back.y.astype(int) - level).max() <= 1


def test_clip_equality_includes_fps():
    a = constant_clip()
    assert a == constant_clip()
    assert a != a.replace(fps=30)
