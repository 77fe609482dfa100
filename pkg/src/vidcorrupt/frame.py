"""Planar 4:2:0 YCbCr frames and clips, colour conversion and rescaling.

Samples live in numpy ``uint8`` arrays. A :class:`Clip` stores its planes stacked
along a leading time axis so that whole-clip operations stay vectorised; the
per-frame view is available through :attr:`Clip.frames`.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._numeric import round_half_away, to_u8
from .errors import InvalidInputError, InvalidParameterError

# BT.601 full range
_RGB_TO_YCC = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCC_TO_RGB = np.array(
    [
        [1.0, 0.0, 1.402],
        [1.0, -0.344136, -0.714136],
        [1.0, 1.772, 0.0],
    ]
)

MIN_HEIGHT = 16
DEFAULT_FPS = Fraction(25, 1)


def _frozen(a, dtype=np.uint8):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _check_planes(y, cb, cr):
    if y.ndim < 2 or y.shape[-1] == 0 or y.shape[-2] == 0:
        raise InvalidInputError(f"luma plane has invalid shape {y.shape}")
    h, w = y.shape[-2:]
    if h % 2 or w % 2:
        raise InvalidInputError(f"frame dimensions must be even, got {w}x{h}")
    want = y.shape[:-2] + (h // 2, w // 2)
    if cb.shape != want or cr.shape != want:
        raise InvalidInputError(
            f"chroma planes {cb.shape}/{cr.shape} do not match luma {y.shape}"
        )


@dataclass(frozen=True, eq=False)
class Frame:
    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray

    def __post_init__(self):
        y, cb, cr = (_frozen(p) for p in (self.y, self.cb, self.cr))
        if y.ndim != 2:
            raise InvalidInputError("Frame planes must be 2-D")
        _check_planes(y, cb, cr)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "cb", cb)
        object.__setattr__(self, "cr", cr)

    @property
    def width(self):
        return self.y.shape[1]

    @property
    def height(self):
        return self.y.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.planes(), other.planes()))

    def planes(self):
        return self.y, self.cb, self.cr

    @classmethod
    def constant(cls, width, height, y=128, cb=128, cr=128):
        return cls(
            np.full((height, width), y, np.uint8),
            np.full((height // 2, width // 2), cb, np.uint8),
            np.full((height // 2, width // 2), cr, np.uint8),
        )


@dataclass(frozen=True, eq=False)
class Clip:
    """A non-empty run of equally sized frames.

    ``y`` has shape (frames, height, width); ``cb`` and ``cr`` have shape
    (frames, height/2, width/2).
    """

    y: np.ndarray
    cb: np.ndarray
    cr: np.ndarray
    fps: Fraction = DEFAULT_FPS

    def __post_init__(self):
        y, cb, cr = (_frozen(p) for p in (self.y, self.cb, self.cr))
        if y.ndim != 3 or y.shape[0] == 0:
            raise InvalidInputError(f"clip needs at least one frame, got planes of shape {y.shape}")
        _check_planes(y, cb, cr)
        fps = Fraction(self.fps)
        if fps <= 0:
            raise InvalidInputError(f"fps must be positive, got {fps}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "cb", cb)
        object.__setattr__(self, "cr", cr)
        object.__setattr__(self, "fps", fps)

    @classmethod
    def from_frames(cls, frames, fps=DEFAULT_FPS):
        frames = list(frames)
        if not frames:
            raise InvalidInputError("clip needs at least one frame")
        size = (frames[0].width, frames[0].height)
        for i, f in enumerate(frames):
            if (f.width, f.height) != size:
                raise InvalidInputError(f"frame {i} is {f.width}x{f.height}, expected {size[0]}x{size[1]}")
        return cls(
            np.stack([f.y for f in frames]),
            np.stack([f.cb for f in frames]),
            np.stack([f.cr for f in frames]),
            fps,
        )

    @property
    def width(self):
        return self.y.shape[2]

    @property
    def height(self):
        return self.y.shape[1]

    @property
    def frame_count(self):
        return self.y.shape[0]

    def __len__(self):
        return self.frame_count

    @property
    def duration_seconds(self):
        return float(self.frame_count / self.fps)

    @property
    def frames(self):
        return tuple(self.frame(i) for i in range(self.frame_count))

    def frame(self, i):
        return Frame(self.y[i], self.cb[i], self.cr[i])

    def planes(self):
        return self.y, self.cb, self.cr

    def replace(self, y=None, cb=None, cr=None, fps=None):
        return Clip(
            self.y if y is None else y,
            self.cb if cb is None else cb,
            self.cr if cr is None else cr,
            self.fps if fps is None else fps,
        )

    def __eq__(self, other):
        if not isinstance(other, Clip):
            return NotImplemented
        return self.fps == other.fps and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.planes(), other.planes())
        )

    def digest(self):
        """Content hash over dimensions, fps and samples."""
        h = hashlib.sha1()
        h.update(f"{self.width}x{self.height}x{self.frame_count}@{self.fps}".encode())
        for p in self.planes():
            h.update(p.tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Interleaved 8-bit RGB, ``data`` shaped (height, width, 3)."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise InvalidInputError(f"RGB data must be (height, width, 3), got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    @classmethod
    def filled(cls, width, height, rgb):
        return cls(np.broadcast_to(np.asarray(rgb, np.uint8), (height, width, 3)))


def pad_even(a):
    """Edge-replicate the last two axes up to even length."""
    h, w = a.shape[-2:]
    pad = [(0, 0)] * (a.ndim - 2) + [(0, h % 2), (0, w % 2)]
    if h % 2 or w % 2:
        return np.pad(a, pad, mode="edge")
    return a


def _subsample(c):
    # 2x2 box average over the last two axes
    return (c[..., 0::2, 0::2] + c[..., 1::2, 0::2] + c[..., 0::2, 1::2] + c[..., 1::2, 1::2]) / 4.0


def rgb_array_to_planes(rgb):
    """(..., H, W, 3) uint8/float RGB -> (y, cb, cr) uint8 planes, 4:2:0.

    Odd H or W are padded by edge replication first.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-3] == 0 or rgb.shape[-2] == 0:
        raise InvalidInputError("zero-dimension image")
    rgb = np.moveaxis(rgb, -1, 0)
    rgb = pad_even(rgb)
    ycc = np.tensordot(_RGB_TO_YCC, rgb, axes=1)
    y = ycc[0]
    cb = _subsample(ycc[1]) + 128.0
    cr = _subsample(ycc[2]) + 128.0
    return to_u8(y), to_u8(cb), to_u8(cr)


def planes_to_rgb_array(y, cb, cr):
    """Inverse of :func:`rgb_array_to_planes` with nearest-neighbour chroma upsampling."""
    cb = np.repeat(np.repeat(cb, 2, axis=-2), 2, axis=-1).astype(np.float64) - 128.0
    cr = np.repeat(np.repeat(cr, 2, axis=-2), 2, axis=-1).astype(np.float64) - 128.0
    ycc = np.stack([y.astype(np.float64), cb, cr])
    rgb = np.tensordot(_YCC_TO_RGB, ycc, axes=1)
    return to_u8(np.moveaxis(rgb, 0, -1))


def rgb_to_ycbcr(img: RgbImage) -> Frame:
    return Frame(*rgb_array_to_planes(img.data))


def ycbcr_to_rgb(frame: Frame, crop_to=None) -> RgbImage:
    """``crop_to=(width, height)`` undoes the even-padding applied at ingest."""
    rgb = planes_to_rgb_array(frame.y, frame.cb, frame.cr)
    if crop_to is not None:
        w, h = crop_to
        rgb = rgb[:h, :w]
    return RgbImage(rgb)


def _resample_matrix(n_in, n_out):
    """Row-stochastic (n_out, n_in) matrix: area average when shrinking, bilinear when growing."""
    if n_in == n_out:
        return None
    m = np.zeros((n_out, n_in))
    if n_out < n_in:
        scale = n_in / n_out
        for i in range(n_out):
            lo, hi = i * scale, (i + 1) * scale
            for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
                m[i, j] = min(hi, j + 1) - max(lo, j)
        m /= scale
    else:
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, n_in - 1)
        frac = src - i0
        rows = np.arange(n_out)
        np.add.at(m, (rows, i0), 1.0 - frac)
        np.add.at(m, (rows, i1), frac)
    return m


def resample_plane(a, out_h, out_w):
    """Separable resample of the last two axes of ``a`` to (out_h, out_w)."""
    in_h, in_w = a.shape[-2:]
    mh = _resample_matrix(in_h, out_h)
    mw = _resample_matrix(in_w, out_w)
    if mh is None and mw is None:
        return a
    out = a.astype(np.float64)
    if mh is not None:
        out = np.matmul(mh, out)
    if mw is not None:
        out = np.matmul(out, mw.T)
    return to_u8(out)


def scaled_width(width, height, target_height):
    """Aspect-preserving width rounded to the nearest even integer, at least 16."""
    exact = Fraction(width * target_height, height)
    w = 2 * int(round_half_away(float(exact / 2)))
    return max(MIN_HEIGHT, w)


def rescale(clip: Clip, target_height: int) -> Clip:
    if target_height < MIN_HEIGHT:
        raise InvalidParameterError(f"target_height must be >= {MIN_HEIGHT}, got {target_height}")
    if target_height % 2:
        raise InvalidParameterError(f"target_height must be even, got {target_height}")
    out_w = scaled_width(clip.width, clip.height, target_height)
    out_h = target_height
    if (out_w, out_h) == (clip.width, clip.height):
        return clip
    return Clip(
        resample_plane(clip.y, out_h, out_w),
        resample_plane(clip.cb, out_h // 2, out_w // 2),
        resample_plane(clip.cr, out_h // 2, out_w // 2),
        clip.fps,
    )


def resize_to(clip: Clip, width: int, height: int) -> Clip:
    """Resample to explicit (even) dimensions; used to compare clips of different size."""
    if width % 2 or height % 2 or width < 2 or height < 2:
        raise InvalidParameterError(f"dimensions must be positive and even, got {width}x{height}")
    return Clip(
        resample_plane(clip.y, height, width),
        resample_plane(clip.cb, height // 2, width // 2),
        resample_plane(clip.cr, height // 2, width // 2),
        clip.fps,
    )
