"""Procedural legitimate/fake clip pairs.

A legitimate clip is a drifting band-limited texture with an oscillating
textured ellipse (the head stand-in). Its fake copies the clip and blends a
modified version of the inner face region back in with a feathered mask, a
colour mismatch and a slight blur: the usual tells of a face swap.
"""
from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidInputError, InvalidParameterError
from .frame import DEFAULT_FPS, Clip, rgb_array_to_planes
from ._numeric import to_u8
from .y4m import read_y4m, write_y4m

REAL, FAKE = "real", "fake"
DEFAULT_STRENGTH = 0.75
FEATHER_PX = 4.0
MANIFEST_NAME = "manifest.tsv"
MANIFEST_COLUMNS = ("pair_id", "label", "seed", "width", "height", "frames", "fps")


@dataclass(frozen=True)
class CorpusParams:
    clip_count: int = 20
    frames: int = 48
    width: int = 256
    height: int = 144
    seed: int = 7
    artifact_strength: float = DEFAULT_STRENGTH
    fps: Fraction = DEFAULT_FPS

    def __post_init__(self):
        if self.clip_count < 1:
            raise InvalidParameterError(f"clip_count must be >= 1, got {self.clip_count}")
        if self.frames < 1:
            raise InvalidParameterError(f"frames must be >= 1, got {self.frames}")
        if self.width < 32 or self.height < 32 or self.width % 2 or self.height % 2:
            raise InvalidParameterError(f"size must be even and >= 32, got {self.width}x{self.height}")
        if not 0 < self.artifact_strength <= 1:
            raise InvalidParameterError(
                f"artifact_strength must be in (0, 1], got {self.artifact_strength}"
            )
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError(f"seed must fit in 64 bits, got {self.seed}")


@dataclass(frozen=True, eq=False)
class LabeledClip:
    clip: Clip
    label: str
    pair_id: int
    seed: int

    @property
    def is_fake(self):
        return self.label == FAKE


@dataclass(frozen=True)
class _Scene:
    """Everything about a clip that is fixed by its seed."""

    texture: np.ndarray      # (H + 2m, W + 2m, 3) float RGB background
    margin: int
    drift: np.ndarray        # (frames, 2) integer background offsets (x, y)
    head_rgb: np.ndarray     # (2*ry+1, 2*rx+1, 3) float RGB head texture
    radii: tuple             # (rx, ry)
    centers: np.ndarray      # (frames, 2) float head centres (x, y)
    noise_sigma: float


def _band_limited(rng, shape, sigma):
    field = gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return field / (field.std() + 1e-12)


def _scene(seed: int, params: CorpusParams) -> _Scene:
    rng = np.random.default_rng([seed, 0])
    w, h, n = params.width, params.height, params.frames
    m = 24
    th, tw = h + 2 * m, w + 2 * m

    coarse = _band_limited(rng, (th, tw), rng.uniform(3.0, 5.0))
    fine = _band_limited(rng, (th, tw), rng.uniform(1.0, 1.3))
    base = rng.uniform(60, 190, 3)
    tint = rng.uniform(-1, 1, 3)
    texture = (base + coarse[..., None] * rng.uniform(30, 40) * (1 + 0.3 * tint)
               + fine[..., None] * rng.uniform(10, 14))

    t = np.arange(n)
    vel = rng.uniform(-0.5, 0.5, 2)
    wobble = rng.uniform(1.0, 4.0, 2)
    period = rng.uniform(20, 60, 2)
    phase = rng.uniform(0, 2 * np.pi, 2)
    drift = vel[None, :] * t[:, None] + wobble * np.sin(2 * np.pi * t[:, None] / period + phase)
    drift = np.clip(np.rint(drift), -m, m).astype(int)

    rx = int(rng.uniform(0.12, 0.14) * w)
    ry = int(rx * rng.uniform(1.2, 1.4))
    yy, xx = np.mgrid[-ry:ry + 1, -rx:rx + 1]
    skin = rng.uniform([150, 100, 80], [220, 170, 140])
    shade = _band_limited(rng, yy.shape, 4.0) * rng.uniform(8, 16)
    pores = _band_limited(rng, yy.shape, 0.7) * rng.uniform(5, 7)
    head = skin + (shade + pores)[..., None]
    # darker eyes and mouth so the face has structure that moves with the head
    for cx, cy, ax, ay in ((-0.4, -0.2, 0.18, 0.08), (0.4, -0.2, 0.18, 0.08), (0.0, 0.45, 0.35, 0.07)):
        blob = ((xx / rx - cx) / ax) ** 2 + ((yy / ry - cy) / ay) ** 2 < 1
        head[blob] *= rng.uniform(0.35, 0.6)

    amp = rng.uniform([3, 2], [10, 6])
    hperiod = rng.uniform(16, 40, 2)
    hphase = rng.uniform(0, 2 * np.pi, 2)
    c0 = np.array([w * rng.uniform(0.35, 0.65), h * rng.uniform(0.45, 0.6)])
    centers = c0 + amp * np.sin(2 * np.pi * t[:, None] / hperiod + hphase)
    return _Scene(texture, m, drift, head, (rx, ry), centers, rng.uniform(1.5, 2.0))


def _head_mask(cx, cy, rx, ry, h, w):
    # anti-aliased ellipse coverage, about one pixel of soft edge
    yy, xx = np.mgrid[0:h, 0:w]
    r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    return np.clip((1.0 - r) * min(rx, ry) + 0.5, 0.0, 1.0)


def _render_rgb(scene: _Scene, params: CorpusParams, seed: int):
    rng = np.random.default_rng([seed, 1])
    w, h, m = params.width, params.height, scene.margin
    rx, ry = scene.radii
    frames = np.empty((params.frames, h, w, 3))
    for t in range(params.frames):
        ox, oy = scene.drift[t]
        img = scene.texture[m + oy:m + oy + h, m + ox:m + ox + w].copy()
        cx, cy = scene.centers[t]
        ix, iy = int(round(cx)), int(round(cy))
        # paste the head texture at integer position, then cover with the soft mask
        layer = np.zeros_like(img)
        y0, x0 = iy - ry, ix - rx
        ys, xs = slice(max(y0, 0), min(y0 + 2 * ry + 1, h)), slice(max(x0, 0), min(x0 + 2 * rx + 1, w))
        layer[ys, xs] = scene.head_rgb[ys.start - y0:ys.stop - y0, xs.start - x0:xs.stop - x0]
        alpha = _head_mask(ix, iy, rx, ry, h, w)[..., None]
        img = img * (1 - alpha) + layer * alpha
        frames[t] = img + rng.normal(0, scene.noise_sigma, img.shape)
    return frames


def gen_real_clip(seed: int, params: CorpusParams = CorpusParams()) -> Clip:
    scene = _scene(seed, params)
    y, cb, cr = rgb_array_to_planes(np.clip(_render_rgb(scene, params, seed), 0, 255))
    return Clip(y, cb, cr, params.fps)


def _feather(cx, cy, rx, ry, h, w, step=1.0):
    """Patch mask: 1 inside the face ellipse, linear fall-off over FEATHER_PX outside it."""
    yy, xx = np.mgrid[0:h, 0:w] * step + (step - 1) / 2.0
    r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    dist = (r - 1.0) * min(rx, ry)
    return np.clip(1.0 - dist / FEATHER_PX, 0.0, 1.0)


def patch_geometry(seed: int, params: CorpusParams):
    """Per-frame face-patch centres and radii (the region a fake may alter)."""
    scene = _scene(seed, params)
    rx, ry = scene.radii
    return np.rint(scene.centers), (0.8 * rx, 0.8 * ry)


def gen_fake_clip(real: Clip, seed: int, params: CorpusParams = CorpusParams()) -> Clip:
    s = params.artifact_strength
    rng = np.random.default_rng([seed, 2])
    centers, (prx, pry) = patch_geometry(seed, params)
    gain = 1.0 + s * rng.uniform(0.08, 0.18) * rng.choice([-1, 1])
    offsets = s * rng.uniform(6, 14, 3) * rng.choice([-1, 1], 3)
    jitter = s * rng.normal(0, 1.5, (real.frame_count, 3))
    blur_sigma = 1.2

    planes = [p.astype(np.float64) for p in real.planes()]
    out = [p.copy() for p in planes]
    for t in range(real.frame_count):
        cx, cy = centers[t]
        for i, p in enumerate(planes):
            step = 1.0 if i == 0 else 2.0
            ph, pw = p.shape[1:]
            alpha = _feather(cx, cy, prx, pry, ph, pw, step)
            if not alpha.any():
                continue
            src = p[t]
            patch = (1 - s) * src + s * gaussian_filter(src, blur_sigma / step, mode="nearest")
            if i == 0:
                patch = (patch - 128.0) * gain + 128.0 + offsets[0] + jitter[t, 0]
            else:
                patch = patch + offsets[i] + jitter[t, i]
            out[i][t] = src + alpha * (patch - src)
    return Clip(*(to_u8(p) for p in out), real.fps)


def pair_seeds(params: CorpusParams):
    rng = np.random.default_rng(params.seed)
    return [int(v) for v in rng.integers(0, 2 ** 63, params.clip_count)]


def gen_corpus(params: CorpusParams = CorpusParams()):
    """``clip_count`` real clips, each followed by its fake."""
    corpus = []
    for pair_id, seed in enumerate(pair_seeds(params)):
        real = gen_real_clip(seed, params)
        corpus.append(LabeledClip(real, REAL, pair_id, seed))
        corpus.append(LabeledClip(gen_fake_clip(real, seed, params), FAKE, pair_id, seed))
    return corpus


# --- on-disk layout -------------------------------------------------------

def clip_filename(pair_id, label):
    return f"{pair_id}_{label}.y4m"


def manifest_text(corpus) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for item in corpus:
        c = item.clip
        writer.writerow([item.pair_id, item.label, item.seed, c.width, c.height, c.frame_count,
                         f"{c.fps.numerator}/{c.fps.denominator}"])
    return buf.getvalue()


def parse_manifest(text: str):
    rows = list(csv.DictReader(io.StringIO(text), delimiter="\t"))
    for row in rows:
        missing = [c for c in MANIFEST_COLUMNS if c not in row]
        if missing:
            raise InvalidParameterError(f"manifest row lacks columns {missing}")
        if row["label"] not in (REAL, FAKE):
            raise InvalidParameterError(f"bad label {row['label']!r} in manifest")
    return rows


def manifest_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_corpus(corpus, out_dir) -> str:
    """Write ``<pair_id>_<label>.y4m`` files plus the manifest; returns the manifest hash."""
    os.makedirs(out_dir, exist_ok=True)
    for item in corpus:
        write_y4m(item.clip, os.path.join(out_dir, clip_filename(item.pair_id, item.label)))
    text = manifest_text(corpus)
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return manifest_hash(text)


def load_corpus(corpus_dir):
    with open(os.path.join(corpus_dir, MANIFEST_NAME), encoding="utf-8") as fh:
        rows = parse_manifest(fh.read())
    corpus = []
    for row in rows:
        pair_id = int(row["pair_id"])
        clip = read_y4m(os.path.join(corpus_dir, clip_filename(pair_id, row["label"])))
        corpus.append(LabeledClip(clip, row["label"], pair_id, int(row["seed"])))
    reals = {it.pair_id for it in corpus if it.label == REAL}
    orphans = sorted(it.pair_id for it in corpus if it.label == FAKE and it.pair_id not in reals)
    if orphans:
        raise InvalidInputError(f"fake clips without a real partner: pair ids {orphans}")
    return corpus


def corpus_hash(corpus) -> str:
    """Hash of the manifest plus every clip's content, independent of list order."""
    corpus = sorted(corpus, key=lambda it: (it.pair_id, it.label, it.seed))
    h = hashlib.sha256(manifest_text(corpus).encode("utf-8"))
    for item in corpus:
        h.update(item.clip.digest().encode("ascii"))
    return h.hexdigest()
