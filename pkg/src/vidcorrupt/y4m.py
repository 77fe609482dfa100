"""YUV4MPEG2 reader/writer (4:2:0 only)."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import Y4MHeaderError, Y4MTruncatedError, UnsupportedChromaError
from .frame import Clip, pad_even

SIGNATURE = b"YUV4MPEG2"
_C420 = {"420jpeg", "420", "420paldv", "420mpeg2", "420p"}


def _parse_header(line: bytes):
    tokens = line.split(b" ")
    if tokens[0] != SIGNATURE:
        raise Y4MHeaderError("missing YUV4MPEG2 signature", 0)
    width = height = None
    fps = Fraction(25, 1)
    offset = len(SIGNATURE) + 1
    for tok in tokens[1:]:
        if not tok:
            offset += 1
            continue
        tag, value = chr(tok[0]), tok[1:].decode("ascii", "replace")
        try:
            if tag == "W":
                width = int(value)
            elif tag == "H":
                height = int(value)
            elif tag == "F":
                num, den = value.split(":")
                fps = Fraction(int(num), int(den))
            elif tag == "C":
                if value not in _C420:
                    raise UnsupportedChromaError(f"unsupported chroma tag C{value}", offset)
            # I, A, X tags carry nothing we need
        except (ValueError, ZeroDivisionError) as exc:
            raise Y4MHeaderError(f"bad header field {tok!r}: {exc}", offset) from None
        offset += len(tok) + 1
    if width is None or height is None or width <= 0 or height <= 0:
        raise Y4MHeaderError("header must declare positive W and H", 0)
    if fps <= 0:
        raise Y4MHeaderError(f"non-positive frame rate {fps}", 0)
    return width, height, fps


def parse_y4m(data: bytes) -> Clip:
    eol = data.find(b"\n")
    if eol < 0:
        raise Y4MHeaderError("header line is not terminated", len(data))
    width, height, fps = _parse_header(data[:eol])
    cw, ch = (width + 1) // 2, (height + 1) // 2
    ysize, csize = width * height, cw * ch
    frame_size = ysize + 2 * csize

    ys, cbs, crs = [], [], []
    pos = eol + 1
    index = 0
    while pos < len(data):
        if not data.startswith(b"FRAME", pos):
            raise Y4MHeaderError(f"expected FRAME marker for frame {index}", pos)
        hdr_end = data.find(b"\n", pos)
        if hdr_end < 0:
            raise Y4MTruncatedError(f"frame {index} header is not terminated", pos, index)
        start = hdr_end + 1
        if start + frame_size > len(data):
            raise Y4MTruncatedError(
                f"frame {index} payload truncated: {len(data) - start} of {frame_size} bytes",
                len(data),
                index,
            )
        buf = np.frombuffer(data, np.uint8, frame_size, start)
        ys.append(buf[:ysize].reshape(height, width))
        cbs.append(buf[ysize:ysize + csize].reshape(ch, cw))
        crs.append(buf[ysize + csize:].reshape(ch, cw))
        pos = start + frame_size
        index += 1
    if not ys:
        raise Y4MTruncatedError("stream contains no frames", pos, 0)
    y = pad_even(np.stack(ys))
    # chroma of an odd-width source already has ceil(w/2) columns
    return Clip(y, np.stack(cbs), np.stack(crs), fps)


def read_y4m(path) -> Clip:
    with open(path, "rb") as fh:
        return parse_y4m(fh.read())


def y4m_header(clip: Clip) -> bytes:
    fps = clip.fps
    return (
        f"YUV4MPEG2 W{clip.width} H{clip.height} F{fps.numerator}:{fps.denominator} Ip A1:1 C420jpeg\n"
    ).encode("ascii")


def serialize_y4m(clip: Clip) -> bytes:
    parts = [y4m_header(clip)]
    for i in range(clip.frame_count):
        parts.append(b"FRAME\n")
        parts.append(clip.y[i].tobytes())
        parts.append(clip.cb[i].tobytes())
        parts.append(clip.cr[i].tobytes())
    return b"".join(parts)


def write_y4m(clip: Clip, path):
    with open(path, "wb") as fh:
        fh.write(serialize_y4m(clip))
