"""Toy MPEG-style codec: I/P GOPs, 16x16 motion compensation, 8x8 DCT residuals.

Wire format (``.tvc``), all integers little-endian::

    magic   b"TVC1"
    u32     width, height, fps_num, fps_den, frame_count, gop_size, crf
    frame_count x record:
        u8      kind (0 = I, 1 = P)
        u32     payload_len
        bytes   payload

A payload is a run of unsigned varints followed by a CRC-32 (u32) of those
varint bytes. For a P frame the varints start with the motion section; both
frame kinds then carry the coefficient section. Each section is a sparse
vector in (zero-run, level) form, stored planar::

    nnz, run[0..nnz), zz(level)[0..nnz)

where ``zz`` is the zigzag signed mapping. The coefficient vector is every
8x8 block's 64 zigzag-ordered quantised levels, luma blocks first, then Cb,
then Cr, each plane in raster block order; zero runs may cross block
boundaries. The motion vector is (dx, dy) per 16x16 macroblock in raster
order, each minus the previous macroblock's vector (first predicted from 0).

The encoder reconstructs every frame exactly as the decoder will and predicts
P frames from that reconstruction, so decoding never drifts. Motion search runs
on source frames, which keeps the motion field independent of crf.
"""
from __future__ import annotations

import math
import struct
import threading
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ._numeric import round_half_away
from .errors import (
    BadMagicError,
    BitstreamError,
    ChecksumError,
    CoefficientOverflowError,
    InvalidInputError,
    InvalidParameterError,
    MotionVectorRangeError,
    TruncatedBitstreamError,
    UnreachableBitrateError,
)
from .frame import Clip, Frame
from .transform import (
    CRF_ANCHOR,
    JPEG_CHROMA,
    JPEG_LUMA,
    check_crf,
    crf_to_qscale,
    dct8,
    from_blocks,
    idct8,
    quant_steps,
    to_blocks,
    unzigzag,
    zigzag,
)
from .varint import VarintError, decode_varints, encode_varints, unzigzag_signed, zigzag_signed

MAGIC = b"TVC1"
_HEADER = struct.Struct("<4s7I")
_RECORD = struct.Struct("<BI")
KIND_I, KIND_P = "I", "P"
_KIND_CODES = {KIND_I: 0, KIND_P: 1}
_KIND_NAMES = {0: KIND_I, 1: KIND_P}

MB = 16
MAX_SEARCH_RANGE = 15
RATE_TOLERANCE = 1.05


@dataclass(frozen=True)
class GopConfig:
    gop_size: int = 12
    block_size: int = MB
    search_range: int = 7

    def __post_init__(self):
        if self.gop_size < 1:
            raise InvalidParameterError(f"gop_size must be >= 1, got {self.gop_size}")
        if self.block_size != MB:
            raise InvalidParameterError(f"block_size is fixed at {MB}, got {self.block_size}")
        if not 0 <= self.search_range <= MAX_SEARCH_RANGE:
            raise InvalidParameterError(
                f"search_range must be in [0, {MAX_SEARCH_RANGE}], got {self.search_range}"
            )


@dataclass(frozen=True)
class MotionVector:
    dx: int
    dy: int


@dataclass(frozen=True)
class FrameRecord:
    kind: str
    payload: bytes


@dataclass(frozen=True)
class Bitstream:
    width: int
    height: int
    fps: Fraction
    gop_size: int
    crf: int
    frames: tuple = field(default=())

    @property
    def frame_count(self):
        return len(self.frames)

    @property
    def payload_bytes(self):
        return sum(len(r.payload) for r in self.frames)

    def kinds(self):
        return "".join(r.kind for r in self.frames)

    def to_bytes(self) -> bytes:
        fps = Fraction(self.fps)
        parts = [
            _HEADER.pack(
                MAGIC, self.width, self.height, fps.numerator, fps.denominator,
                self.frame_count, self.gop_size, self.crf,
            )
        ]
        for r in self.frames:
            parts.append(_RECORD.pack(_KIND_CODES[r.kind], len(r.payload)))
            parts.append(r.payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < 4 or data[:4] != MAGIC:
            raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}")
        if len(data) < _HEADER.size:
            raise TruncatedBitstreamError("header truncated")
        _, w, h, fnum, fden, count, gop, crf = _HEADER.unpack_from(data)
        if w == 0 or h == 0 or w % 2 or h % 2:
            raise BitstreamError(f"invalid dimensions {w}x{h}")
        if fnum == 0 or fden == 0:
            raise BitstreamError(f"invalid frame rate {fnum}:{fden}")
        if gop == 0 or crf > 51:
            raise BitstreamError(f"invalid header gop_size={gop} crf={crf}")
        pos = _HEADER.size
        frames = []
        for i in range(count):
            if pos + _RECORD.size > len(data):
                raise TruncatedBitstreamError("record header truncated", i)
            code, n = _RECORD.unpack_from(data, pos)
            pos += _RECORD.size
            if code not in _KIND_NAMES:
                raise BitstreamError(f"unknown frame kind {code}", i)
            if pos + n > len(data):
                raise TruncatedBitstreamError(f"payload needs {n} bytes, {len(data) - pos} left", i)
            frames.append(FrameRecord(_KIND_NAMES[code], bytes(data[pos:pos + n])))
            pos += n
        if pos != len(data):
            raise BitstreamError(f"{len(data) - pos} trailing bytes after last frame")
        return cls(w, h, Fraction(fnum, fden), gop, crf, tuple(frames))


def write_tvc(bs: Bitstream, path):
    with open(path, "wb") as fh:
        fh.write(bs.to_bytes())


def read_tvc(path) -> Bitstream:
    with open(path, "rb") as fh:
        return Bitstream.from_bytes(fh.read())


# --- geometry -------------------------------------------------------------

@dataclass(frozen=True)
class _Geometry:
    width: int
    height: int

    @property
    def mb_cols(self):
        return -(-self.width // MB)

    @property
    def mb_rows(self):
        return -(-self.height // MB)

    @property
    def coded_w(self):
        return self.mb_cols * MB

    @property
    def coded_h(self):
        return self.mb_rows * MB

    @property
    def n_coeffs(self):
        # 4 luma + 2 chroma 8x8 blocks per macroblock
        return self.mb_rows * self.mb_cols * 6 * 64

    def pad_planes(self, planes, chroma):
        """Edge-pad a (frames, h, w) stack up to the coded size."""
        s = 2 if chroma else 1
        _, h, w = planes.shape
        return np.pad(planes, ((0, 0), (0, self.coded_h // s - h), (0, self.coded_w // s - w)), mode="edge")


@lru_cache(maxsize=32)
def _search_order(search_range):
    cands = [(dx, dy) for dy in range(-search_range, search_range + 1)
             for dx in range(-search_range, search_range + 1)]
    cands.sort(key=lambda v: (abs(v[0]) + abs(v[1]), v[1], v[0]))
    return np.array(cands, dtype=np.int64)


@lru_cache(maxsize=32)
def _block_sum_matrices(rows, cols):
    # float32 sums of |diff| stay exact: a 16x16 SAD is at most 65280 < 2**24
    return (np.kron(np.eye(rows, dtype=np.float32), np.ones(MB, np.float32)),
            np.kron(np.eye(cols, dtype=np.float32), np.ones(MB, np.float32)).T.copy())


def _motion_search(ref_y, tgt_y, geom: _Geometry, search_range: int):
    """Exhaustive SAD search on luma.

    ``ref_y`` and ``tgt_y`` are (..., H, W) stacks of frame pairs; returns
    (..., mb_rows, mb_cols, 2) integer (dx, dy).
    """
    r = search_range
    lead = ref_y.shape[:-2]
    ref = geom.pad_planes(ref_y.reshape(-1, *ref_y.shape[-2:]), False)
    # float32 is exact here: a block SAD is an integer below 2**24
    ref = np.pad(ref, ((0, 0), (r, r), (r, r)), mode="edge").astype(np.float32)
    tgt = geom.pad_planes(tgt_y.reshape(-1, *tgt_y.shape[-2:]), False).astype(np.float32)
    H, W = tgt.shape[-2:]
    rows_m, cols_m = _block_sum_matrices(geom.mb_rows, geom.mb_cols)
    cands = _search_order(r)
    sads = np.empty((len(cands), len(tgt), geom.mb_rows, geom.mb_cols), dtype=np.float32)
    diff = np.empty_like(tgt)
    for k, (dx, dy) in enumerate(cands):
        np.subtract(ref[:, r + dy:r + dy + H, r + dx:r + dx + W], tgt, out=diff)
        np.abs(diff, out=diff)
        sads[k] = rows_m @ diff @ cols_m
    # argmin returns the first minimum, and candidates are already in tie-break order
    best = np.argmin(sads, axis=0)
    return cands[best].reshape(*lead, geom.mb_rows, geom.mb_cols, 2)


def estimate_motion(reference: Frame, target: Frame, cfg: GopConfig = GopConfig()):
    """Per-macroblock motion field, shape (rows, cols, 2) holding (dx, dy)."""
    if (reference.width, reference.height) != (target.width, target.height):
        raise InvalidInputError(
            f"frame size mismatch: {reference.width}x{reference.height} vs {target.width}x{target.height}"
        )
    geom = _Geometry(target.width, target.height)
    return _motion_search(reference.y, target.y, geom, cfg.search_range)


# --- block coding ---------------------------------------------------------

@lru_cache(maxsize=64)
def _steps(n_luma, n_chroma, qscale):
    """Quantiser steps for Y blocks, then Cb blocks, then Cr blocks."""
    return np.concatenate([np.broadcast_to(quant_steps(JPEG_LUMA, qscale), (n_luma, 8, 8)),
                           np.broadcast_to(quant_steps(JPEG_CHROMA, qscale), (2 * n_chroma, 8, 8))])


def _block_counts(geom: _Geometry):
    return geom.mb_rows * 2 * geom.mb_cols * 2, geom.mb_rows * geom.mb_cols


def _forward(planes, geom: _Geometry, qscale, offset):
    """Coded-size planes -> flat zigzag level vector (Y blocks, Cb blocks, Cr blocks)."""
    blocks = np.concatenate([to_blocks(p.astype(np.float64) - offset).reshape(-1, 8, 8) for p in planes])
    levels = round_half_away(dct8(blocks) / _steps(*_block_counts(geom), qscale)).astype(np.int32)
    return zigzag(levels).reshape(-1)


def _inverse(levels, geom: _Geometry, qscale):
    """Flat level vector -> list of three float residual/sample planes at coded size."""
    nl, nc = _block_counts(geom)
    blocks = idct8(unzigzag(levels.reshape(-1, 64)).astype(np.float64) * _steps(nl, nc, qscale))
    shapes = [(geom.mb_rows * 2, geom.mb_cols * 2), (geom.mb_rows, geom.mb_cols), (geom.mb_rows, geom.mb_cols)]
    bounds = [0, nl, nl + nc, nl + 2 * nc]
    return [from_blocks(blocks[bounds[i]:bounds[i + 1]].reshape(*shape, 8, 8)) for i, shape in enumerate(shapes)]


@lru_cache(maxsize=16)
def _mc_grid(rows, cols, size):
    base_r = (np.arange(rows) * size)[:, None, None] + np.arange(size)[None, None, :]
    base_c = (np.arange(cols) * size)[None, :, None] + np.arange(size)[None, None, :]
    return base_r, base_c


def _mc_index(mv, geom: _Geometry):
    """Flat gather indices that turn each reference plane into its prediction.

    Reads outside the reference are clamped to the border (edge replication).
    """
    out = []
    for i in range(3):
        size = MB if i == 0 else MB // 2
        h, w = geom.mb_rows * size, geom.mb_cols * size
        if i == 0:
            dx, dy = mv[..., 0], mv[..., 1]
        else:
            dx, dy = np.fix(mv[..., 0] / 2).astype(np.int64), np.fix(mv[..., 1] / 2).astype(np.int64)
        base_r, base_c = _mc_grid(geom.mb_rows, geom.mb_cols, size)
        rr = np.clip(base_r + dy[:, :, None], 0, h - 1)          # (rows, cols, size)
        cc = np.clip(base_c + dx[:, :, None], 0, w - 1)
        out.append(from_blocks(rr[:, :, :, None] * w + cc[:, :, None, :]))
    return out


def _compensate(ref_planes, index):
    """Motion-compensated prediction of all three planes at coded size."""
    return [ref.ravel()[idx] for ref, idx in zip(ref_planes, index)]


def _reconstruct_intra(levels, geom, qscale):
    return [np.clip(round_half_away(p + 128.0), 0, 255).astype(np.uint8)
            for p in _inverse(levels, geom, qscale)]


def _reconstruct_inter(ref_planes, mv, levels, geom, qscale, pred=None):
    if pred is None:
        pred = _compensate(ref_planes, _mc_index(mv, geom))
    resid = _inverse(levels, geom, qscale)
    return [np.clip(p.astype(np.float64) + round_half_away(r), 0, 255).astype(np.uint8)
            for p, r in zip(pred, resid)]


# --- entropy coding -------------------------------------------------------

def _sparse_symbols(vec):
    nz = np.flatnonzero(vec)
    runs = np.diff(np.concatenate(([-1], nz))) - 1
    return np.concatenate(([nz.size], runs, zigzag_signed(vec[nz]).astype(np.int64)))


def _mv_vector(mv):
    flat = mv.reshape(-1, 2)
    pred = np.vstack(([0, 0], flat[:-1]))
    return (flat - pred).reshape(-1)


def _pack(symbols):
    body = encode_varints(np.concatenate(symbols).astype(np.uint64))
    return body + struct.pack("<I", zlib.crc32(body))


def _take_sparse(values, pos, length, frame_index, what):
    if pos >= values.size:
        raise TruncatedBitstreamError(f"{what} section missing", frame_index)
    nnz = int(values[pos])
    pos += 1
    if pos + 2 * nnz > values.size:
        raise TruncatedBitstreamError(f"{what} section truncated", frame_index)
    runs = values[pos:pos + nnz]
    levels = unzigzag_signed(values[pos + nnz:pos + 2 * nnz])
    where = np.cumsum(runs + 1) - 1
    if nnz and where[-1] >= length:
        raise CoefficientOverflowError(
            f"{what} runs address position {int(where[-1])} beyond {length} entries", frame_index
        )
    out = np.zeros(length, dtype=np.int64)
    out[where] = levels
    return out, pos + 2 * nnz


def _unpack(record: FrameRecord, geom: _Geometry, frame_index: int):
    payload = record.payload
    if len(payload) < 4:
        raise TruncatedBitstreamError("payload shorter than its checksum", frame_index)
    body, (crc,) = payload[:-4], struct.unpack("<I", payload[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("payload checksum mismatch", frame_index)
    try:
        values = decode_varints(body)
    except VarintError as exc:
        raise TruncatedBitstreamError(str(exc), frame_index) from None
    pos = 0
    mv = None
    if record.kind == KIND_P:
        n_mb = geom.mb_rows * geom.mb_cols
        diffs, pos = _take_sparse(values, pos, 2 * n_mb, frame_index, "motion")
        mv = np.cumsum(diffs.reshape(-1, 2), axis=0).reshape(geom.mb_rows, geom.mb_cols, 2)
        if np.abs(mv).max(initial=0) > MAX_SEARCH_RANGE:
            raise MotionVectorRangeError(
                f"motion vector component {int(np.abs(mv).max())} exceeds {MAX_SEARCH_RANGE}", frame_index
            )
    levels, pos = _take_sparse(values, pos, geom.n_coeffs, frame_index, "coefficient")
    if pos != values.size:
        raise BitstreamError(f"{values.size - pos} unexpected symbols after coefficients", frame_index)
    return mv, levels


# --- encoder --------------------------------------------------------------

class _LRU:
    def __init__(self, maxsize):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        return None

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)

    def clear(self):
        with self._lock:
            self._data.clear()


# encode is pure; these only save recomputation across crf trials and regimes
_MOTION_CACHE = _LRU(64)
_ENCODE_CACHE = _LRU(48)
_MC_INDEX_CACHE = _LRU(2)  # large: one int64 index per coded sample and frame


def clear_caches():
    _MOTION_CACHE.clear()
    _ENCODE_CACHE.clear()
    _MC_INDEX_CACHE.clear()


def _motion_fields(clip: Clip, cfg: GopConfig, digest: str):
    key = (digest, cfg.search_range)
    fields = _MOTION_CACHE.get(key)
    if fields is None:
        geom = _Geometry(clip.width, clip.height)
        fields = [None]
        chunk = 16  # bounds the float32 working set
        for start in range(1, clip.frame_count, chunk):
            stop = min(start + chunk, clip.frame_count)
            fields.extend(_motion_search(clip.y[start - 1:stop - 1], clip.y[start:stop], geom, cfg.search_range))
        _MOTION_CACHE.put(key, fields)
    return fields


def encode_with_reconstruction(clip: Clip, crf: int, cfg: GopConfig = GopConfig()):
    """Encode and also return the encoder's reconstruction (equal to ``decode`` of the result)."""
    crf = check_crf(crf)
    digest = clip.digest()
    key = (digest, crf, cfg)
    hit = _ENCODE_CACHE.get(key)
    if hit is not None:
        return hit
    geom = _Geometry(clip.width, clip.height)
    qscale = crf_to_qscale(crf)
    fields = _motion_fields(clip, cfg, digest)
    index = _MC_INDEX_CACHE.get((digest, cfg.search_range))
    if index is None:
        index = [None] + [_mc_index(mv, geom) for mv in fields[1:]]
        _MC_INDEX_CACHE.put((digest, cfg.search_range), index)
    records = []
    recon_y, recon_cb, recon_cr = [], [], []
    ref = None
    planes = [geom.pad_planes(clip.y, False), geom.pad_planes(clip.cb, True), geom.pad_planes(clip.cr, True)]
    for t in range(clip.frame_count):
        src = [p[t] for p in planes]
        if t % cfg.gop_size == 0:
            levels = _forward(src, geom, qscale, 128.0)
            records.append(FrameRecord(KIND_I, _pack([_sparse_symbols(levels)])))
            ref = _reconstruct_intra(levels, geom, qscale)
        else:
            mv = fields[t]
            pred = _compensate(ref, index[t])
            resid = [s.astype(np.int16) - p for s, p in zip(src, pred)]
            levels = _forward(resid, geom, qscale, 0.0)
            records.append(FrameRecord(KIND_P, _pack([_sparse_symbols(_mv_vector(mv)),
                                                      _sparse_symbols(levels)])))
            ref = _reconstruct_inter(ref, mv, levels, geom, qscale, pred)
        recon_y.append(ref[0][:clip.height, :clip.width])
        recon_cb.append(ref[1][:clip.height // 2, :clip.width // 2])
        recon_cr.append(ref[2][:clip.height // 2, :clip.width // 2])
    bs = Bitstream(clip.width, clip.height, clip.fps, cfg.gop_size, crf, tuple(records))
    recon = Clip(np.stack(recon_y), np.stack(recon_cb), np.stack(recon_cr), clip.fps)
    _ENCODE_CACHE.put(key, (bs, recon))
    return bs, recon


def encode(clip: Clip, crf: int, cfg: GopConfig = GopConfig()) -> Bitstream:
    return encode_with_reconstruction(clip, crf, cfg)[0]


def decode(bs: Bitstream) -> Clip:
    if not bs.frames:
        raise BitstreamError("bitstream has no frames")
    if bs.frames[0].kind != KIND_I:
        raise BitstreamError("first frame must be an I frame", 0)
    geom = _Geometry(bs.width, bs.height)
    qscale = crf_to_qscale(bs.crf)
    ys, cbs, crs = [], [], []
    ref = None
    for i, record in enumerate(bs.frames):
        mv, levels = _unpack(record, geom, i)
        if record.kind == KIND_I:
            ref = _reconstruct_intra(levels, geom, qscale)
        else:
            ref = _reconstruct_inter(ref, mv, levels, geom, qscale)
        ys.append(ref[0][:bs.height, :bs.width])
        cbs.append(ref[1][:bs.height // 2, :bs.width // 2])
        crs.append(ref[2][:bs.height // 2, :bs.width // 2])
    return Clip(np.stack(ys), np.stack(cbs), np.stack(crs), bs.fps)


def decode_bytes(data: bytes) -> Clip:
    return decode(Bitstream.from_bytes(data))


def drop_iframes(bs: Bitstream) -> Bitstream:
    """Delete every I frame but the first, leaving P frames to predict from stale pictures."""
    kept = tuple(r for i, r in enumerate(bs.frames) if i == 0 or r.kind != KIND_I)
    return Bitstream(bs.width, bs.height, bs.fps, bs.gop_size, bs.crf, kept)


# --- rate ---------------------------------------------------------------------

def measure_bitrate(bs: Bitstream) -> float:
    """Payload bits per second."""
    if bs.frame_count == 0:
        return 0.0
    return bs.payload_bytes * 8 * float(bs.fps) / bs.frame_count


def stream_bitrate(bs: Bitstream) -> float:
    """Bits per second of the whole serialised stream, container overhead included."""
    if bs.frame_count == 0:
        return 0.0
    size = _HEADER.size + bs.frame_count * _RECORD.size + bs.payload_bytes
    return size * 8 * float(bs.fps) / bs.frame_count


def encode_at_bitrate(clip: Clip, target_bps: float, cfg: GopConfig = GopConfig()) -> Bitstream:
    """Best-quality (lowest crf) encode whose bitrate is within 5% over ``target_bps``.

    The bound is applied to :func:`stream_bitrate`, so it also holds for the
    payload-only :func:`measure_bitrate` and for the size of a written file.

    This is a bisection over integer crf that keeps a (fails, fits) bracket.
    Probes are placed where a straight line through the two measured
    log-rates nearest the limit predicts it, which usually settles in three
    or four encodes; crf 51 is only encoded when nothing below it fits. The result is the same as a plain bisection whenever
    the rate is non-increasing in crf.
    """
    if not target_bps > 0:
        raise InvalidParameterError(f"target bitrate must be positive, got {target_bps}")
    limit = RATE_TOLERANCE * target_bps
    tried = {}

    def rate(crf):
        if crf not in tried:
            tried[crf] = encode(clip, crf, cfg)
        return stream_bitrate(tried[crf])

    lo, hi = -1, 51  # crf lo fails (-1: none tried); crf hi fits, or is 51 and untested
    last_side, repeats = None, 0
    while hi - lo > 1:
        if not tried:
            guess = CRF_ANCHOR
        elif repeats >= 2:
            guess = (lo + hi + 1) // 2
        else:
            # log-rate line through the measurements nearest the limit; with only
            # one point, assume the rate halves every 6 crf
            pts = sorted(((c, rate(c)) for c in tried), key=lambda cr: abs(math.log(cr[1] / limit)))
            c0, r0 = pts[0]
            slope = -math.log(2) / 6
            if len(pts) > 1 and pts[1][1] != r0:
                c1, r1 = pts[1]
                slope = (math.log(r1) - math.log(r0)) / (c1 - c0)
            guess = math.ceil(c0 + (math.log(limit) - math.log(r0)) / slope) if slope < 0 else (lo + hi + 1) // 2
        guess = min(max(guess, lo + 1), hi - 1)
        side = "hi" if rate(guess) <= limit else "lo"
        if side == "hi":
            hi = guess
        else:
            lo = guess
        repeats = repeats + 1 if side == last_side else 0
        last_side = side
    if rate(hi) > limit:
        raise UnreachableBitrateError(target_bps, rate(hi))
    return tried[hi]
