import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from vidcorrupt.codec import clear_caches
from vidcorrupt.frame import Clip
from vidcorrupt.synthcorpus import CorpusParams


def constant_clip(frames=4, width=32, height=32, y=100, cb=90, cr=160, fps=25):
    return Clip(
        np.full((frames, height, width), y, np.uint8),
        np.full((frames, height // 2, width // 2), cb, np.uint8),
        np.full((frames, height // 2, width // 2), cr, np.uint8),
        fps,
    )


def textured_clip(seed=0, frames=8, width=64, height=48, dx=1, dy=0, noise=0.0):
    """Smooth random texture panning by (dx, dy) pixels per frame."""
    rng = np.random.default_rng(seed)
    pad = 4 + frames * (abs(dx) + abs(dy))
    base = gaussian_filter(rng.normal(0, 1, (height + 2 * pad, width + 2 * pad)), 2.0)
    base = 128 + 60 * base / base.std()
    ys = []
    for t in range(frames):
        oy, ox = pad + t * dy, pad + t * dx
        f = base[oy:oy + height, ox:ox + width]
        if noise:
            f = f + rng.normal(0, noise, f.shape)
        ys.append(f)
    y = np.clip(np.rint(ys), 0, 255).astype(np.uint8)
    cb = np.clip(128 + (y[:, ::2, ::2].astype(int) - 128) // 3, 0, 255).astype(np.uint8)
    cr = np.clip(128 - (y[:, 1::2, 1::2].astype(int) - 128) // 4, 0, 255).astype(np.uint8)
    return Clip(y, cb, cr, 25)


SMALL = CorpusParams(clip_count=3, frames=12, width=64, height=48, seed=11)


@pytest.fixture(autouse=True)
def _fresh_codec_caches():
    clear_caches()
    yield


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
