import numpy as np


def round_half_away(x):
    """Round to nearest integer, ties away from zero (np.round would go to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.trunc(x + np.copysign(0.5, x))


def to_u8(x):
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)
