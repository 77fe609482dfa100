"""Composable corruption steps and the 21-regime benchmark catalog.

Regimes are written as ``step (+ step)*`` with steps ``<height>p``,
``BR<mbps>``, ``CRF<int>`` and ``Datamosh``; ``Uncorrupted`` is the empty
regime. Whitespace is ignored.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import codec
from .codec import GopConfig
from .errors import InvalidInputError, InvalidParameterError, PipelineError, VidCorruptError
from .frame import MIN_HEIGHT, Clip, rescale
from ._numeric import round_half_away
from .transform import check_crf

DATAMOSH_DEFAULT_CRF = 23
UNCORRUPTED = "Uncorrupted"


@dataclass(frozen=True)
class Resolution:
    target_height: int

    def __post_init__(self):
        if self.target_height < MIN_HEIGHT or self.target_height % 2:
            raise InvalidParameterError(
                f"resolution must be an even height >= {MIN_HEIGHT}, got {self.target_height}"
            )

    @property
    def label(self):
        return f"{self.target_height}p"


@dataclass(frozen=True)
class Bitrate:
    target_mbps: float

    def __post_init__(self):
        if not self.target_mbps > 0:
            raise InvalidParameterError(f"bitrate must be positive, got {self.target_mbps}")
        object.__setattr__(self, "target_mbps", float(self.target_mbps))

    @property
    def label(self):
        return f"BR{self.target_mbps!r}"


@dataclass(frozen=True)
class CrfEncode:
    crf: int

    def __post_init__(self):
        object.__setattr__(self, "crf", check_crf(self.crf))

    @property
    def label(self):
        return f"CRF{self.crf}"


@dataclass(frozen=True)
class Datamosh:
    @property
    def label(self):
        return "Datamosh"


CorruptionSpec = (Resolution, Bitrate, CrfEncode, Datamosh)


@dataclass(frozen=True)
class Regime:
    steps: tuple = field(default=())

    def __post_init__(self):
        steps = tuple(self.steps)
        kinds = [type(s) for s in steps]
        if len(set(kinds)) != len(kinds):
            raise InvalidParameterError(f"regime repeats a step kind: {[s.label for s in steps]}")
        if Datamosh in kinds and kinds[-1] is not Datamosh:
            raise InvalidParameterError("Datamosh must be the last step")
        object.__setattr__(self, "steps", steps)

    @property
    def name(self):
        if not self.steps:
            return UNCORRUPTED
        return " + ".join(s.label for s in self.steps)

    def __str__(self):
        return self.name


_STEP_PATTERNS = [
    (re.compile(r"^(\d+)p$", re.I), lambda m: Resolution(int(m.group(1)))),
    (re.compile(r"^BR(\d+(?:\.\d*)?|\.\d+)$", re.I), lambda m: Bitrate(float(m.group(1)))),
    (re.compile(r"^CRF(\d+)$", re.I), lambda m: CrfEncode(int(m.group(1)))),
    (re.compile(r"^datamosh$", re.I), lambda m: Datamosh()),
]


def parse_step(text: str):
    token = re.sub(r"\s+", "", text)
    for pattern, build in _STEP_PATTERNS:
        m = pattern.match(token)
        if m:
            return build(m)
    raise InvalidParameterError(f"unrecognised corruption step {text!r}")


def parse_regime(text: str) -> Regime:
    compact = re.sub(r"\s+", "", text)
    if not compact or compact.lower() in ("uncorrupted", "none"):
        return Regime(())
    return Regime(tuple(parse_step(part) for part in compact.split("+")))


_CATALOG_LABELS = [
    "720p", "480p", "240p",
    "BR1.0", "BR0.5", "CRF30", "CRF40", "CRF50",
    "720p + BR1.0", "720p + BR0.5", "720p + CRF30", "720p + CRF30 + Datamosh",
    "480p + BR1.0", "480p + BR0.5", "480p + CRF40", "480p + CRF40 + Datamosh",
    "240p + BR1.0", "240p + BR0.5", "240p + CRF50", "240p + CRF50 + Datamosh",
    UNCORRUPTED,
]


def regime_catalog():
    """The benchmark rows in table order, ``Uncorrupted`` last."""
    return [parse_regime(label) for label in _CATALOG_LABELS]


# --- operators ------------------------------------------------------------

def effective_height(target_height, source_height, reference_height=None):
    """Map a nominal target height onto a source clip.

    With ``reference_height`` set, the source is treated as if it were that tall,
    so a 144-line clip with reference 720 maps "240p" to 48 lines.
    """
    if reference_height is None:
        return target_height
    h = 2 * int(round_half_away(source_height * target_height / reference_height / 2))
    return max(MIN_HEIGHT, h)


def apply_resolution(clip: Clip, target_height: int) -> Clip:
    return rescale(clip, target_height)


def apply_crf(clip: Clip, crf: int, cfg: GopConfig = GopConfig()) -> Clip:
    return codec.encode_with_reconstruction(clip, crf, cfg)[1]


def apply_bitrate(clip: Clip, target_mbps: float, cfg: GopConfig = GopConfig()) -> Clip:
    bs = codec.encode_at_bitrate(clip, target_mbps * 1e6, cfg)
    return codec.encode_with_reconstruction(clip, bs.crf, cfg)[1]


def mosh(bs: codec.Bitstream) -> Clip:
    return codec.decode(codec.drop_iframes(bs))


def apply_datamosh(clip: Clip, crf: int = DATAMOSH_DEFAULT_CRF, cfg: GopConfig = GopConfig()) -> Clip:
    if clip.frame_count < 2:
        raise InvalidInputError("datamosh needs at least two frames")
    return mosh(codec.encode(clip, crf, cfg))


@dataclass
class PipelineTrace:
    clip: Clip
    streams: list  # per step: the bitstream the step decoded, or None


def run_pipeline(clip: Clip, regime: Regime, cfg: GopConfig = GopConfig(),
                 reference_height=None) -> PipelineTrace:
    """Apply the regime left to right, keeping each step's intermediate bitstream.

    A Datamosh step directly after an encoding step moshes that step's stream
    instead of re-encoding, so there is only one lossy generation.
    """
    source_height = clip.height
    streams = []
    last_stream = None
    for i, step in enumerate(regime.steps):
        try:
            if isinstance(step, Resolution):
                h = effective_height(step.target_height, source_height, reference_height)
                clip = apply_resolution(clip, h)
                last_stream = None
            elif isinstance(step, CrfEncode):
                last_stream, clip = codec.encode_with_reconstruction(clip, step.crf, cfg)
            elif isinstance(step, Bitrate):
                bs = codec.encode_at_bitrate(clip, step.target_mbps * 1e6, cfg)
                last_stream, clip = codec.encode_with_reconstruction(clip, bs.crf, cfg)
            elif isinstance(step, Datamosh):
                if clip.frame_count < 2:
                    raise InvalidInputError("datamosh needs at least two frames")
                source = last_stream if last_stream is not None else codec.encode(
                    clip, DATAMOSH_DEFAULT_CRF, cfg)
                last_stream = codec.drop_iframes(source)
                clip = codec.decode(last_stream)
            else:
                raise InvalidParameterError(f"unknown step {step!r}")
        except VidCorruptError as exc:
            raise PipelineError(i, step.label, exc) from exc
        streams.append(last_stream)
    return PipelineTrace(clip, streams)


def apply_pipeline(clip: Clip, regime, cfg: GopConfig = GopConfig(), reference_height=None) -> Clip:
    if isinstance(regime, str):
        regime = parse_regime(regime)
    return run_pipeline(clip, regime, cfg, reference_height).clip
