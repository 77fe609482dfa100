"""Baseline fakeness detector: hand-made clip statistics + logistic regression.

Any object with a ``score(clip) -> float`` method can stand in for
:class:`DetectorModel` in the harness.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidInputError, InvalidParameterError, ParseError
from .frame import Clip
from ._numeric import to_u8
from .synthcorpus import FAKE
from .transform import dct8, to_blocks

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "hf_ratio_mean", "hf_ratio_std",
    "blockiness_mean", "blockiness_std",
    "edge_skew_mean", "edge_skew_std",
    "temporal_residual_mean", "temporal_residual_std",
    "chroma_luma_corr_mean", "chroma_luma_corr_std",
    "luma_mean", "luma_std",
    "chroma_std", "mid_ratio_mean",
    "chroma_edge_ratio_mean", "chroma_edge_ratio_std",
)
N_FEATURES = len(FEATURE_NAMES)

# zigzag-diagonal bands over the 8x8 DCT (u + v)
_UV = np.add.outer(np.arange(8), np.arange(8))
_HF_BAND = _UV >= 6
_MID_BAND = (_UV >= 2) & (_UV < 6)
_AC = _UV > 0
_BANDS = np.stack([_AC.ravel(), _HF_BAND.ravel(), _MID_BAND.ravel()], axis=1).astype(np.float64)
_EPS = 1e-9


def _crop8(a):
    h, w = a.shape[-2:]
    return a[..., : h - h % 8, : w - w % 8]


def _safe_ratio(num, den):
    return np.where(den > _EPS, num / np.maximum(den, _EPS), 0.0)


def _skew_rows(x):
    """Skewness of each row of a 2-D array; 0 for constant rows."""
    mu = x.mean(axis=1, keepdims=True)
    d = x - mu
    var = (d * d).mean(axis=1)
    m3 = (d * d * d).mean(axis=1)
    sd = np.sqrt(var)
    return np.where(sd > 1e-6, m3 / np.maximum(sd, 1e-6) ** 3, 0.0)


def _grad_mag(p):
    """Central-difference gradient magnitude on the interior of the last two axes."""
    gy = (p[..., 2:, 1:-1] - p[..., :-2, 1:-1]) * 0.5
    gx = (p[..., 1:-1, 2:] - p[..., 1:-1, :-2]) * 0.5
    return np.sqrt(gx * gx + gy * gy)


def _blockiness(y):
    """Per frame: mean |step| across 8-aligned column/row boundaries minus the off-grid mean."""
    dx = np.abs(np.diff(y, axis=2))  # step between column j and j+1
    dy = np.abs(np.diff(y, axis=1))
    on_x = (np.arange(dx.shape[2]) % 8) == 7
    on_y = (np.arange(dy.shape[1]) % 8) == 7
    vals = np.zeros(y.shape[0])
    parts = []
    if on_x.any() and (~on_x).any():
        parts.append(dx[:, :, on_x].mean(axis=(1, 2)) - dx[:, :, ~on_x].mean(axis=(1, 2)))
    if on_y.any() and (~on_y).any():
        parts.append(dy[:, on_y, :].mean(axis=(1, 2)) - dy[:, ~on_y, :].mean(axis=(1, 2)))
    if parts:
        vals = np.mean(parts, axis=0)
    return vals


def _local_corr(a, b, size=8):
    """Pearson correlation of a and b inside each size x size tile; 0 where either is flat."""
    a = _crop8(a)
    b = _crop8(b)
    ab = to_blocks(a, size)
    bb = to_blocks(b, size)
    ab = ab.reshape(ab.shape[:-2] + (-1,))
    bb = bb.reshape(bb.shape[:-2] + (-1,))
    ac = ab - ab.mean(axis=-1, keepdims=True)
    bc = bb - bb.mean(axis=-1, keepdims=True)
    den = np.sqrt((ac * ac).sum(-1) * (bc * bc).sum(-1))
    return _safe_ratio((ac * bc).sum(-1), den)


def extract_features(clip: Clip) -> np.ndarray:
    """16 per-clip statistics; depends on samples only (never on fps).

    hf/mid ratio: share of a luma block's AC energy with u+v >= 6 / 2 <= u+v < 6;
    blockiness: grid-aligned minus off-grid luma step; edge skew: skewness of the
    chroma gradient magnitude per frame; temporal residual: mean |frame difference|;
    chroma/luma corr: per-tile correlation between 2x2-averaged luma and Cb, Cr;
    chroma edge ratio: chroma gradient energy over luma gradient energy per frame.
    """
    y = clip.y.astype(np.float32)
    cb = clip.cb.astype(np.float32)
    cr = clip.cr.astype(np.float32)
    f = np.zeros(N_FEATURES)

    yc = _crop8(y)
    if yc.shape[-1] and yc.shape[-2]:
        coeffs = dct8(to_blocks(yc - 128.0))
        bands = (coeffs * coeffs).reshape(-1, 64) @ _BANDS
        ac, hf, mid = bands[:, 0], _safe_ratio(bands[:, 1], bands[:, 0]), _safe_ratio(bands[:, 2], bands[:, 0])
        f[0], f[1] = hf.mean(), hf.std()
        f[13] = mid.mean()

    blk = _blockiness(y)
    f[2], f[3] = blk.mean(), blk.std()

    cg = np.sqrt(_grad_mag(cb) ** 2 + _grad_mag(cr) ** 2)
    skews = _skew_rows(cg.reshape(clip.frame_count, -1))
    f[4], f[5] = skews.mean(), skews.std()

    if clip.frame_count > 1:
        res = np.abs(np.diff(y, axis=0)).mean(axis=(1, 2))
        f[6], f[7] = res.mean(), res.std()

    ysub = (y[:, 0::2, 0::2] + y[:, 1::2, 0::2] + y[:, 0::2, 1::2] + y[:, 1::2, 1::2]) / 4.0
    if _crop8(ysub).size:
        corr = np.concatenate([np.abs(_local_corr(ysub, cb)).ravel(), np.abs(_local_corr(ysub, cr)).ravel()])
        f[8], f[9] = corr.mean(), corr.std()

    f[10] = y.mean() / 255.0
    f[11] = y.std() / 255.0
    f[12] = (cb.std() + cr.std()) / 2 / 255.0

    ge = (_grad_mag(ysub) ** 2).mean(axis=(1, 2))
    ce = (cg * cg).mean(axis=(1, 2))
    ratio = _safe_ratio(ce, ge)
    f[14], f[15] = ratio.mean(), ratio.std()
    return f


# --- augmentation ---------------------------------------------------------

@dataclass(frozen=True)
class AugmentationSpec:
    noise_sigma: float = 0.0
    noise_prob: float = 1.0
    blur_radius: float = 0.0
    blur_prob: float = 1.0
    flip_prob: float = 0.0
    grayscale_prob: float = 0.0
    brightness_range: tuple = (0.0, 0.0)
    contrast_range: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.noise_sigma < 0 or self.blur_radius < 0:
            raise InvalidParameterError("noise_sigma and blur_radius must be >= 0")
        for name in ("noise_prob", "blur_prob", "flip_prob", "grayscale_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise InvalidParameterError(f"{name} must be in [0, 1]")
        b0, b1 = self.brightness_range
        c0, c1 = self.contrast_range
        if b0 > b1 or c0 > c1 or c0 < 0:
            raise InvalidParameterError("brightness/contrast ranges must be ordered, contrast >= 0")
        object.__setattr__(self, "brightness_range", (float(b0), float(b1)))
        object.__setattr__(self, "contrast_range", (float(c0), float(c1)))

    @property
    def enabled(self):
        return self != AugmentationSpec()

    @classmethod
    def standard(cls):
        """Training preset: noise, blur, flips, occasional grayscale, brightness/contrast."""
        return cls(noise_sigma=4.0, noise_prob=0.5, blur_radius=1.0, blur_prob=0.5, flip_prob=0.5,
                   grayscale_prob=0.1, brightness_range=(-12.0, 12.0), contrast_range=(0.85, 1.15))

    def to_text(self):
        parts = []
        for f_ in fields(self):
            v = getattr(self, f_.name)
            if isinstance(v, tuple):
                v = ":".join(repr(x) for x in v)
            else:
                v = repr(float(v))
            parts.append(f"{f_.name}={v}")
        return " ".join(parts)

    @classmethod
    def from_text(cls, text):
        kwargs = {}
        for item in text.split():
            name, _, value = item.partition("=")
            if ":" in value:
                kwargs[name] = tuple(float(x) for x in value.split(":"))
            else:
                kwargs[name] = float(value)
        return cls(**kwargs)


def augment(clip: Clip, spec: AugmentationSpec, seed: int) -> Clip:
    if not spec.enabled:
        return clip
    rng = np.random.default_rng([seed, 17])
    flip = rng.random() < spec.flip_prob
    gray = rng.random() < spec.grayscale_prob
    brightness = rng.uniform(*spec.brightness_range)
    contrast = rng.uniform(*spec.contrast_range)
    do_blur = spec.blur_radius > 0 and rng.random() < spec.blur_prob
    do_noise = spec.noise_sigma > 0 and rng.random() < spec.noise_prob

    planes = [p.astype(np.float64) for p in clip.planes()]
    if flip:
        planes = [p[:, :, ::-1] for p in planes]
    if gray:
        planes[1] = np.full_like(planes[1], 128.0)
        planes[2] = np.full_like(planes[2], 128.0)
    if brightness != 0 or contrast != 1:
        planes[0] = (planes[0] - 128.0) * contrast + 128.0 + brightness
    if do_blur:
        r = spec.blur_radius
        planes = [gaussian_filter(p, (0, s, s), mode="nearest")
                  for p, s in zip(planes, (r, r / 2, r / 2))]
    if do_noise:
        planes = [p + rng.normal(0.0, spec.noise_sigma, p.shape) for p in planes]
    return Clip(*(to_u8(p) for p in planes), clip.fps)


# --- logistic regression --------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    l2: float = 1e-3
    seed: int = 0
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    augment_copies: int = 2

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be positive")
        if self.epochs < 0:
            raise InvalidParameterError("epochs must be >= 0")
        if self.l2 < 0:
            raise InvalidParameterError("l2 must be >= 0")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))


def loss_and_grad(w, b, X, y, l2):
    """Mean binary cross-entropy of sigmoid(Xw + b) plus (l2/2)|w|^2; bias is not penalised."""
    z = X @ w + b
    # log(1 + e^z) - y z, evaluated stably
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * float(w @ w)
    r = sigmoid(z) - y
    gw = X.T @ r / len(y) + l2 * w
    gb = float(np.mean(r))
    return float(loss), gw, gb


def prior_bias(y):
    p = float(np.mean(y))
    return math.log(p / (1 - p))


def fit_logistic(X, y, cfg: TrainConfig):
    """Full-batch gradient descent from w = 0, b = class-prior log-odds.

    Returns (w, b, losses, learning_rate); losses[k] is the loss before epoch k,
    with the final loss appended. The rate is halved whenever a step would
    increase the loss.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.min() == y.max():
        raise InvalidInputError("training data must contain both classes")
    w = np.zeros(X.shape[1])
    b = prior_bias(y)
    lr = cfg.learning_rate
    loss, gw, gb = loss_and_grad(w, b, X, y, cfg.l2)
    losses = [loss]
    for _ in range(cfg.epochs):
        while True:
            w_new, b_new = w - lr * gw, b - lr * gb
            new_loss, new_gw, new_gb = loss_and_grad(w_new, b_new, X, y, cfg.l2)
            if new_loss <= loss or lr < 1e-12:
                break
            lr /= 2
            log.warning("training loss rose; halving learning rate to %g", lr)
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        losses.append(loss)
    return w, b, losses, lr


@dataclass(frozen=True, eq=False)
class DetectorModel:
    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    seed: int = 0
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec)
    train_loss: float = float("nan")

    def __post_init__(self):
        for name in ("weights", "feature_mean", "feature_scale"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != (N_FEATURES,) or not np.all(np.isfinite(a)):
                raise InvalidParameterError(f"{name} must be {N_FEATURES} finite values")
            object.__setattr__(self, name, a)
        if np.any(self.feature_scale <= 0):
            raise InvalidParameterError("feature_scale entries must be positive")

    @classmethod
    def constant(cls, bias):
        """A model that ignores its input; sigmoid(bias) for every clip."""
        return cls(np.zeros(N_FEATURES), float(bias), np.zeros(N_FEATURES), np.ones(N_FEATURES))

    def normalize(self, feats):
        return (np.asarray(feats) - self.feature_mean) / self.feature_scale

    def score_features(self, feats) -> float:
        return float(sigmoid(self.normalize(feats) @ self.weights + self.bias))

    def score(self, clip: Clip) -> float:
        return self.score_features(extract_features(clip))

    # -- persistence

    FORMAT = "vidcorrupt-detector 1"

    def to_text(self) -> str:
        def vec(a):
            return " ".join(repr(float(x)) for x in a)

        lines = [
            self.FORMAT,
            f"features {N_FEATURES}",
            f"weights {vec(self.weights)}",
            f"bias {float(self.bias)!r}",
            f"feature_mean {vec(self.feature_mean)}",
            f"feature_scale {vec(self.feature_scale)}",
            f"seed {int(self.seed)}",
            f"augmentation {self.augmentation.to_text()}",
            f"train_loss {float(self.train_loss)!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DetectorModel":
        lines = text.splitlines()
        if not lines or lines[0].strip() != cls.FORMAT:
            raise ParseError(f"not a detector model file (expected {cls.FORMAT!r} first line)", 0)
        values = {}
        for line in lines[1:]:
            if not line.strip():
                continue
            key, _, rest = line.partition(" ")
            values[key] = rest
        try:
            if int(values["features"]) != N_FEATURES:
                raise ParseError(f"model has {values['features']} features, expected {N_FEATURES}")
            vec = lambda k: np.array([float(x) for x in values[k].split()])  # noqa: E731
            return cls(
                weights=vec("weights"),
                bias=float(values["bias"]),
                feature_mean=vec("feature_mean"),
                feature_scale=vec("feature_scale"),
                seed=int(values.get("seed", 0)),
                augmentation=AugmentationSpec.from_text(values.get("augmentation", "")),
                train_loss=float(values.get("train_loss", "nan")),
            )
        except (KeyError, ValueError, TypeError, InvalidParameterError) as exc:
            raise ParseError(f"malformed detector model: {exc}") from None

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def training_features(corpus, cfg: TrainConfig):
    """Feature matrix and labels, including ``augment_copies`` augmented copies per clip when enabled."""
    X, y = [], []
    for k, item in enumerate(corpus):
        label = 1.0 if item.label == FAKE else 0.0
        X.append(extract_features(item.clip))
        y.append(label)
        if cfg.augmentation.enabled:
            for c in range(cfg.augment_copies):
                aug_seed = (cfg.seed * 1_000_003 + k) * 31 + c
                X.append(extract_features(augment(item.clip, cfg.augmentation, aug_seed)))
                y.append(label)
    return np.array(X), np.array(y)


def train_on_features(X, y, cfg: TrainConfig) -> DetectorModel:
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    w, b, losses, _ = fit_logistic((X - mean) / scale, y, cfg)
    return DetectorModel(w, b, mean, scale, cfg.seed, cfg.augmentation, losses[-1])


def train(corpus, cfg: TrainConfig = TrainConfig()) -> DetectorModel:
    labels = {item.label for item in corpus}
    if len(labels) < 2:
        raise InvalidInputError("training corpus must contain real and fake clips")
    X, y = training_features(corpus, cfg)
    return train_on_features(X, y, cfg)


def score(model, clip: Clip) -> float:
    return float(model.score(clip))


def label_for_score(s: float, threshold: float = 0.5) -> str:
    return FAKE if s > threshold else "real"


def classify(model, clip: Clip, threshold: float = 0.5) -> str:
    return label_for_score(score(model, clip), threshold)
