import math
import struct
import zlib
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vidcorrupt import codec
from vidcorrupt.codec import (Bitstream, FrameRecord, GopConfig, decode, decode_bytes, drop_iframes,
                              encode, encode_at_bitrate, encode_with_reconstruction, estimate_motion,
                              measure_bitrate, read_tvc, stream_bitrate, write_tvc)
from vidcorrupt.errors import (BadMagicError, BitstreamError, CoefficientOverflowError,
                               InvalidInputError, InvalidParameterError, MotionVectorRangeError,
                               TruncatedBitstreamError, UnreachableBitrateError)
from vidcorrupt.frame import Clip, Frame
from vidcorrupt.transform import psnr
from vidcorrupt.varint import encode_varints

from conftest import constant_clip, textured_clip


def brute_force_motion(ref, tgt, r=7, mb=16):
    """Per-block exhaustive SAD with ties broken by (|dx|+|dy|, dy, dx)."""
    ref = np.pad(ref.astype(int), r, mode="edge")
    tgt = tgt.astype(int)
    rows, cols = tgt.shape[0] // mb, tgt.shape[1] // mb
    out = np.zeros((rows, cols, 2), int)
    for by in range(rows):
        for bx in range(cols):
            block = tgt[by * mb:(by + 1) * mb, bx * mb:(bx + 1) * mb]
            best = None
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    y0, x0 = r + by * mb + dy, r + bx * mb + dx
                    sad = np.abs(ref[y0:y0 + mb, x0:x0 + mb] - block).sum()
                    key = (sad, abs(dx) + abs(dy), dy, dx)
                    if best is None or key < best:
                        best = key
            out[by, bx] = best[3], best[2]
    return out


def test_static_and_constant_frames_give_zero_motion():
    c = textured_clip(frames=1, width=64, height=48)
    assert not estimate_motion(c.frame(0), c.frame(0)).any()
    flat = Frame.constant(48, 32, 77)
    assert not estimate_motion(flat, Frame.constant(48, 32, 200)).any()


def test_translation_matches_brute_force():
    c = textured_clip(seed=4, frames=2, width=64, height=48, dx=2)
    mv = estimate_motion(c.frame(0), c.frame(1))
    assert np.array_equal(mv, brute_force_motion(c.y[0], c.y[1]))
    assert np.all(mv[:, :-1] == (2, 0))  # blocks away from the right edge


def test_random_pair_matches_brute_force():
    rng = np.random.default_rng(9)
    a = rng.integers(0, 256, (32, 48), dtype=np.uint8)
    b = np.clip(np.roll(a, (1, -3), axis=(0, 1)).astype(int) + rng.integers(-4, 5, a.shape), 0, 255)
    fa = Frame(a, np.zeros((16, 24), np.uint8), np.zeros((16, 24), np.uint8))
    fb = Frame(b.astype(np.uint8), np.zeros((16, 24), np.uint8), np.zeros((16, 24), np.uint8))
    assert np.array_equal(estimate_motion(fa, fb), brute_force_motion(a, b))


def test_motion_size_mismatch():
    with pytest.raises(InvalidInputError):
        estimate_motion(Frame.constant(32, 32), Frame.constant(48, 32))


def test_gop_structure():
    assert encode(textured_clip(frames=1), 23).kinds() == "I"
    bs = encode(textured_clip(frames=24), 23, GopConfig(gop_size=12))
    assert [i for i, k in enumerate(bs.kinds()) if k == "I"] == [0, 12]
    assert bs.kinds().count("P") == 22


@pytest.mark.parametrize("frames,gop", [(1, 12), (13, 12), (10, 3), (7, 1)])
def test_iframe_count_is_ceiling(frames, gop):
    bs = encode(textured_clip(frames=frames), 30, GopConfig(gop_size=gop))
    assert bs.kinds()[0] == "I"
    assert bs.kinds().count("I") == math.ceil(frames / gop)


def test_constant_clip_is_exact_at_crf0():
    c = constant_clip(frames=8, width=48, height=32)
    assert decode(encode(c, 0)) == c


def test_decode_matches_encoder_reconstruction():
    c = textured_clip(frames=14, width=80, height=48, dx=1, dy=1, noise=3)
    for crf in (10, 35):
        bs, recon = encode_with_reconstruction(c, crf)
        assert decode(bs) == recon
        assert decode_bytes(bs.to_bytes()) == recon


def test_header_fidelity_and_odd_macroblock_padding():
    c = textured_clip(frames=3, width=40, height=26).replace(fps=Fraction(30000, 1001))
    out = decode(encode(c, 20))
    assert (out.width, out.height, out.frame_count, out.fps) == (40, 26, 3, Fraction(30000, 1001))


def _payload(values):
    body = encode_varints(np.asarray(values, dtype=np.uint64))
    return body + struct.pack("<I", zlib.crc32(body))


def test_hand_built_empty_iframe_decodes_to_mid_gray():
    bs = Bitstream(16, 16, Fraction(25), 12, 23, (FrameRecord("I", _payload([0])),))
    out = decode(bs)
    assert np.all(out.y == 128) and np.all(out.cb == 128) and np.all(out.cr == 128)


def test_run_overflow_and_motion_range_errors():
    n = 6 * 64  # one macroblock
    bs = Bitstream(16, 16, Fraction(25), 12, 23, (FrameRecord("I", _payload([1, n, 2])),))
    with pytest.raises(CoefficientOverflowError) as info:
        decode(bs)
    assert info.value.frame_index == 0
    p = FrameRecord("P", _payload([1, 0, 40, 0]))  # dx = +20
    bs = Bitstream(16, 16, Fraction(25), 12, 23, (FrameRecord("I", _payload([0])), p))
    with pytest.raises(MotionVectorRangeError) as info:
        decode(bs)
    assert info.value.frame_index == 1


def test_stream_must_start_with_iframe():
    with pytest.raises(BitstreamError):
        decode(Bitstream(16, 16, Fraction(25), 12, 23, (FrameRecord("P", _payload([0, 0])),)))


def test_bad_magic_and_truncation():
    data = encode(textured_clip(frames=3), 23).to_bytes()
    with pytest.raises(BadMagicError):
        decode_bytes(b"XXXX" + data[4:])
    with pytest.raises(TruncatedBitstreamError) as info:
        decode_bytes(data[:-10])
    assert info.value.frame_index == 2
    with pytest.raises(BitstreamError):
        decode_bytes(data + b"\0")


def test_byte_flips_in_payload_raise_typed_errors():
    bs = encode(textured_clip(frames=4, noise=2), 28)
    data = bytearray(bs.to_bytes())
    # payload byte ranges
    spans, pos = [], codec._HEADER.size
    for r in bs.frames:
        pos += codec._RECORD.size
        spans.append((pos, pos + len(r.payload)))
        pos += len(r.payload)
    rng = np.random.default_rng(2024)
    for _ in range(200):
        lo, hi = spans[rng.integers(len(spans))]
        i = int(rng.integers(lo, hi))
        mutated = bytearray(data)
        mutated[i] ^= int(rng.integers(1, 256))
        with pytest.raises(BitstreamError):
            decode_bytes(bytes(mutated))


def test_tvc_file_round_trip(tmp_path):
    bs = encode(textured_clip(frames=5), 31)
    write_tvc(bs, tmp_path / "a.tvc")
    assert read_tvc(tmp_path / "a.tvc") == bs


def test_measure_bitrate_arithmetic():
    frames = tuple(FrameRecord("I", bytes(4000)) for _ in range(25))
    bs = Bitstream(16, 16, Fraction(25), 12, 23, frames)
    assert measure_bitrate(bs) == 800_000
    assert measure_bitrate(Bitstream(16, 16, Fraction(25), 12, 23, ())) == 0
    assert stream_bitrate(bs) > measure_bitrate(bs)


def test_quality_and_size_fall_with_crf():
    c = textured_clip(seed=1, frames=12, width=96, height=64, dx=1, noise=4)
    sizes, scores = [], []
    for crf in (0, 23, 30, 40, 50):
        bs, recon = encode_with_reconstruction(c, crf)
        sizes.append(bs.payload_bytes)
        scores.append(psnr(c, recon))
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    assert all(a >= b for a, b in zip(scores, scores[1:]))
    assert sizes[2] > sizes[3] > sizes[4]


def test_encoding_is_deterministic():
    c = textured_clip(frames=6, dx=1, noise=2)
    first = encode(c, 27).to_bytes()
    codec.clear_caches()
    assert encode(c, 27).to_bytes() == first


def linear_scan_crf(clip, target_bps):
    for crf in range(52):
        if stream_bitrate(encode(clip, crf)) <= 1.05 * target_bps:
            return crf
    return None


@pytest.mark.parametrize("target", [2e5, 5e5, 1.2e6])
def test_binary_search_matches_linear_scan(target):
    c = textured_clip(seed=2, frames=6, width=128, height=64, dx=1, noise=6)
    expect = linear_scan_crf(c, target)
    if expect is None:
        with pytest.raises(UnreachableBitrateError):
            encode_at_bitrate(c, target)
    else:
        bs = encode_at_bitrate(c, target)
        assert bs.crf == expect
        assert measure_bitrate(bs) <= 1.05 * target


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 51), st.floats(0.97, 1.03))
def test_search_matches_scan_at_exact_limits(k, scale):
    # targets that put the 5% limit right at (or near) the rate of crf k
    c = textured_clip(seed=5, frames=4, width=48, height=32, dx=1, noise=3)
    target = stream_bitrate(encode(c, k)) / 1.05 * scale
    expect = linear_scan_crf(c, target)
    if expect is None:
        with pytest.raises(UnreachableBitrateError):
            encode_at_bitrate(c, target)
    else:
        assert encode_at_bitrate(c, target).crf == expect


def test_huge_target_gives_crf0():
    assert encode_at_bitrate(textured_clip(frames=2), 1e9).crf == 0


def test_unreachable_target_reports_crf51_rate():
    rng = np.random.default_rng(0)
    noise = Clip(rng.integers(0, 256, (4, 64, 64), dtype=np.uint8),
                 rng.integers(0, 256, (4, 32, 32), dtype=np.uint8),
                 rng.integers(0, 256, (4, 32, 32), dtype=np.uint8))
    with pytest.raises(UnreachableBitrateError) as info:
        encode_at_bitrate(noise, 1000)
    assert info.value.crf51_bps == pytest.approx(stream_bitrate(encode(noise, 51)))


def test_bad_parameters():
    with pytest.raises(InvalidParameterError):
        GopConfig(gop_size=0)
    with pytest.raises(InvalidParameterError):
        GopConfig(search_range=16)
    with pytest.raises(InvalidParameterError):
        encode_at_bitrate(textured_clip(frames=1), 0)


def test_drop_iframes_keeps_first():
    bs = encode(textured_clip(frames=25), 23)
    moshed = drop_iframes(bs)
    assert moshed.kinds() == "I" + "P" * 22
    assert decode(moshed).frame_count == 23


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 51), st.integers(1, 6))
def test_closed_loop_property(seed, crf, gop):
    c = textured_clip(seed=seed, frames=5, width=32, height=32, dx=seed % 3 - 1, noise=seed % 5)
    bs, recon = encode_with_reconstruction(c, crf, GopConfig(gop_size=gop))
    assert decode(Bitstream.from_bytes(bs.to_bytes())) == recon
