"""Vectorised LEB128-style varints and zigzag signed mapping over numpy arrays."""
import numpy as np

MAX_VARINT_BYTES = 5  # enough for values < 2**35


class VarintError(ValueError):
    pass


def zigzag_signed(v):
    v = np.asarray(v, dtype=np.int64)
    return np.where(v >= 0, v << 1, ((-v) << 1) - 1).astype(np.uint64)


def unzigzag_signed(u):
    u = np.asarray(u, dtype=np.int64)
    return np.where(u & 1, -((u + 1) >> 1), u >> 1)


def encode_varints(values) -> bytes:
    v = np.asarray(values, dtype=np.uint64).ravel()
    if v.size == 0:
        return b""
    if v.max() >= np.uint64(1) << np.uint64(7 * MAX_VARINT_BYTES):
        raise VarintError("value too large for varint encoding")
    nbytes = np.ones(v.size, dtype=np.int64)
    for k in range(1, MAX_VARINT_BYTES):
        nbytes += v >= (np.uint64(1) << np.uint64(7 * k))
    ends = np.cumsum(nbytes)
    starts = ends - nbytes
    out = np.empty(int(ends[-1]), dtype=np.uint8)
    for k in range(MAX_VARINT_BYTES):
        sel = nbytes > k
        if not sel.any():
            break
        chunk = (v[sel] >> np.uint64(7 * k)) & np.uint64(0x7F)
        more = (nbytes[sel] > k + 1).astype(np.uint64) << np.uint64(7)
        out[starts[sel] + k] = (chunk | more).astype(np.uint8)
    return out.tobytes()


def decode_varints(data) -> np.ndarray:
    """Decode a buffer that consists solely of varints; returns int64 values."""
    b = np.frombuffer(data, dtype=np.uint8)
    if b.size == 0:
        return np.zeros(0, dtype=np.int64)
    term = (b & 0x80) == 0
    if not term[-1]:
        raise VarintError("buffer ends inside a varint")
    ends = np.flatnonzero(term)
    starts = np.concatenate(([0], ends[:-1] + 1))
    lengths = ends - starts + 1
    if lengths.max() > MAX_VARINT_BYTES:
        raise VarintError("varint longer than %d bytes" % MAX_VARINT_BYTES)
    gid = np.repeat(np.arange(ends.size), lengths)
    pos = np.arange(b.size) - starts[gid]
    parts = (b & 0x7F).astype(np.int64) << (7 * pos)
    return np.add.reduceat(parts, starts)
