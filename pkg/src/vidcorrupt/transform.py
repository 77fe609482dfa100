"""8x8 DCT, CRF-scaled quantisation, zigzag ordering and PSNR.

All kernels accept stacks of blocks shaped (..., 8, 8) so callers can push a
whole plane through in one call.
"""
from __future__ import annotations

import math

import numpy as np

from ._numeric import round_half_away
from .errors import InvalidInputError, InvalidParameterError

CRF_MIN, CRF_MAX = 0, 51
CRF_ANCHOR = 23


def _dct_matrix(n=8):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.sqrt(2.0 / n) * np.cos((2 * i + 1) * k * np.pi / (2 * n))
    c[0, :] = np.sqrt(1.0 / n)
    return c


DCT_MATRIX = _dct_matrix()

JPEG_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)
JPEG_CHROMA = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def _zigzag_order(n=8):
    # walk anti-diagonals, alternating direction
    order = []
    for s in range(2 * n - 1):
        cells = [(i, s - i) for i in range(n) if 0 <= s - i < n]
        if s % 2 == 0:
            cells.reverse()
        order.extend(r * n + c for r, c in cells)
    return np.array(order)


ZIGZAG = _zigzag_order()
UNZIGZAG = np.argsort(ZIGZAG)


_DCT2 = np.kron(DCT_MATRIX, DCT_MATRIX)  # acts on row-major flattened 8x8 blocks


def dct8(block):
    """Orthonormal 2-D DCT-II over the last two axes."""
    b = np.asarray(block, dtype=np.float64)
    return (b.reshape(-1, 64) @ _DCT2.T).reshape(b.shape)


def idct8(coeffs):
    c = np.asarray(coeffs, dtype=np.float64)
    return (c.reshape(-1, 64) @ _DCT2).reshape(c.shape)


def check_crf(crf):
    if isinstance(crf, bool) or int(crf) != crf or not CRF_MIN <= crf <= CRF_MAX:
        raise InvalidParameterError(f"crf must be an integer in [{CRF_MIN}, {CRF_MAX}], got {crf!r}")
    return int(crf)


def crf_to_qscale(crf) -> float:
    """Quantiser scale that doubles every +6 crf, 1.0 at crf 23."""
    crf = check_crf(crf)
    return 2.0 ** ((crf - CRF_ANCHOR) / 6.0)


def quant_steps(qm, qscale):
    if qscale <= 0:
        raise InvalidParameterError(f"qscale must be positive, got {qscale}")
    return np.maximum(np.asarray(qm, dtype=np.float64) * qscale, 1.0)


def quantize(coeffs, qm, qscale):
    return round_half_away(np.asarray(coeffs, dtype=np.float64) / quant_steps(qm, qscale)).astype(np.int32)


def dequantize(levels, qm, qscale):
    return np.asarray(levels, dtype=np.float64) * quant_steps(qm, qscale)


def zigzag(block):
    """(..., 8, 8) -> (..., 64) in JPEG zigzag order."""
    b = np.asarray(block)
    return b.reshape(b.shape[:-2] + (64,))[..., ZIGZAG]


def unzigzag(vec):
    v = np.asarray(vec)
    return v[..., UNZIGZAG].reshape(v.shape[:-1] + (8, 8))


def to_blocks(plane, size=8):
    """(..., H, W) with H, W multiples of ``size`` -> (..., H/size, W/size, size, size)."""
    *lead, h, w = plane.shape
    b = plane.reshape(*lead, h // size, size, w // size, size)
    return np.swapaxes(b, -3, -2)


def from_blocks(blocks):
    *lead, by, bx, s, _ = blocks.shape
    return np.swapaxes(blocks, -3, -2).reshape(*lead, by * s, bx * s)


def mse(a, b):
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(d * d))


def psnr(a, b) -> float:
    """Luma PSNR in dB over two clips; MSE is pooled over all frames. ``inf`` when identical."""
    if (a.width, a.height, a.frame_count) != (b.width, b.height, b.frame_count):
        raise InvalidInputError(
            f"clip mismatch: {a.width}x{a.height}x{a.frame_count} vs {b.width}x{b.height}x{b.frame_count}"
        )
    err = mse(a.y, b.y)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / err)
