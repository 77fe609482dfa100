import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vidcorrupt.errors import InvalidInputError, InvalidParameterError
from vidcorrupt.transform import (DCT_MATRIX, JPEG_LUMA, UNZIGZAG, ZIGZAG, crf_to_qscale, dct8,
                                  dequantize, from_blocks, idct8, psnr, quantize, to_blocks,
                                  unzigzag, zigzag)

from conftest import constant_clip, textured_clip


def direct_dct(x):
    """Textbook O(n^4) orthonormal DCT-II."""
    out = np.zeros((8, 8))
    for u in range(8):
        for v in range(8):
            cu = math.sqrt(1 / 8) if u == 0 else math.sqrt(2 / 8)
            cv = math.sqrt(1 / 8) if v == 0 else math.sqrt(2 / 8)
            s = 0.0
            for i in range(8):
                for j in range(8):
                    s += x[i, j] * math.cos((2 * i + 1) * u * math.pi / 16) * math.cos((2 * j + 1) * v * math.pi / 16)
            out[u, v] = cu * cv * s
    return out


def test_matrix_is_orthonormal():
    assert np.allclose(DCT_MATRIX @ DCT_MATRIX.T, np.eye(8), atol=1e-12)


def test_dct_matches_direct_summation():
    rng = np.random.default_rng(5)
    x = rng.integers(0, 256, (8, 8)).astype(float)
    assert np.allclose(dct8(x), direct_dct(x), atol=1e-9)


def test_constant_blocks():
    assert np.allclose(dct8(np.zeros((8, 8))), 0)
    c = dct8(np.full((8, 8), 128.0))
    assert c[0, 0] == pytest.approx(1024.0)
    c[0, 0] = 0
    assert np.abs(c).max() < 1e-9


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (8, 8), elements=st.floats(-255, 255)))
def test_energy_preserved_and_invertible(x):
    c = dct8(x)
    ex, ec = float(np.sum(x * x)), float(np.sum(c * c))
    assert abs(ex - ec) <= 1e-6 * max(ex, 1e-300) + 1e-12
    assert np.abs(idct8(c) - x).max() <= 1e-9


def test_batched_dct_matches_single():
    rng = np.random.default_rng(1)
    xs = rng.normal(0, 50, (3, 2, 8, 8))
    batched = dct8(xs)
    for idx in np.ndindex(3, 2):
        assert np.allclose(batched[idx], dct8(xs[idx]))


def test_qscale_law():
    assert crf_to_qscale(23) == 1.0
    assert crf_to_qscale(29) == 2.0
    assert crf_to_qscale(50) == pytest.approx(22.627, abs=5e-4)
    qs = [crf_to_qscale(c) for c in range(52)]
    assert all(a < b for a, b in zip(qs, qs[1:]))


@pytest.mark.parametrize("bad", [-1, 52, 2.5, "30", True])
def test_crf_domain(bad):
    with pytest.raises((InvalidParameterError, TypeError, ValueError)):
        crf_to_qscale(bad)


def test_unit_quantizer_error_bound():
    rng = np.random.default_rng(2)
    c = rng.normal(0, 100, (8, 8))
    ones = np.ones((8, 8))
    assert np.abs(dequantize(quantize(c, ones, 1.0), ones, 1.0) - c).max() <= 0.5


def test_crf50_example():
    # step 8 * 22.627 = 181.02; 100 / 181.02 = 0.55 rounds to 1
    qm = np.full((8, 8), 8.0)
    q = crf_to_qscale(50)
    level = quantize(np.full((8, 8), 100.0), qm, q)
    assert np.all(level == 1)
    assert dequantize(level, qm, q)[0, 0] == pytest.approx(181.02, abs=0.01)


def test_zero_block_any_qscale():
    for crf in (0, 23, 51):
        assert not quantize(np.zeros((8, 8)), JPEG_LUMA, crf_to_qscale(crf)).any()


def test_round_half_away_from_zero():
    ones = np.ones((8, 8))
    c = np.zeros((8, 8))
    c[0, 0], c[0, 1], c[0, 2] = 2.5, -2.5, 0.5
    lv = quantize(c, ones, 1.0)
    assert (lv[0, 0], lv[0, 1], lv[0, 2]) == (3, -3, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_quantization_error_grows_with_crf(seed):
    block = np.random.default_rng(seed).integers(0, 256, (8, 8)).astype(float) - 128
    c = dct8(block)
    errs = []
    for crf in (0, 10, 23, 30, 40, 50):
        q = crf_to_qscale(crf)
        errs.append(np.mean((idct8(dequantize(quantize(c, JPEG_LUMA, q), JPEG_LUMA, q)) - block) ** 2))
    assert all(a <= b + 1e-12 for a, b in zip(errs, errs[1:]))


def test_zigzag_prefix_and_inverse():
    assert list(ZIGZAG[:6]) == [0, 1, 8, 16, 9, 2]
    assert sorted(ZIGZAG) == list(range(64))
    for k in range(64):
        assert ZIGZAG[UNZIGZAG[k]] == k and UNZIGZAG[ZIGZAG[k]] == k
    dc = np.zeros((8, 8))
    dc[0, 0] = 7
    v = zigzag(dc)
    assert v[0] == 7 and not v[1:].any()


@settings(max_examples=50)
@given(arrays(np.int32, (8, 8), elements=st.integers(-1000, 1000)))
def test_zigzag_round_trip(x):
    assert np.array_equal(unzigzag(zigzag(x)), x)


def test_block_split_round_trip():
    p = np.arange(16 * 24).reshape(16, 24)
    b = to_blocks(p)
    assert b.shape == (2, 3, 8, 8)
    assert np.array_equal(b[1, 2], p[8:16, 16:24])
    assert np.array_equal(from_blocks(b), p)


def test_psnr_examples():
    c = textured_clip(frames=2)
    assert psnr(c, c) == math.inf
    assert psnr(constant_clip(y=0), constant_clip(y=255)) == pytest.approx(0.0)
    ramp = np.tile(np.arange(0, 254, 2, dtype=np.uint8)[:64], (2, 32, 1))
    a = constant_clip(frames=2, width=64, height=32).replace(y=ramp)
    b = a.replace(y=ramp + 1)
    assert psnr(a, b) == pytest.approx(48.13, abs=0.005)


def test_psnr_shape_mismatch():
    with pytest.raises(InvalidInputError):
        psnr(constant_clip(width=32), constant_clip(width=16))
