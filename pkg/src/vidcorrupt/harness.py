"""Benchmark harness: corrupt every clip under every regime, score, tally.

Accuracies are per video. Each row keeps its integer tallies so the
reported fractions are exact; floats only appear when rendering.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from .codec import GopConfig
from .corruptions import parse_regime, regime_catalog, run_pipeline
from .detector import AugmentationSpec, DetectorModel, TrainConfig, extract_features, label_for_score, train
from .errors import InvalidInputError, InvalidParameterError, VidCorruptError
from .synthcorpus import FAKE, REAL, corpus_hash

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5
# The synthetic corpus stands in for 720p broadcast footage; regime heights are
# scaled relative to this before being applied.
DEFAULT_REFERENCE_HEIGHT = 720
CSV_COLUMNS = ("regime", "auth_accuracy", "detect_accuracy", "n_real", "n_fake", "excluded")
AUTH_TITLE = "Video authentication accuracy"
DETECT_TITLE = "Deepfake detection accuracy"


class ConstantDetector:
    """Scores every clip with the same value; handy as a reference scorer."""

    def __init__(self, value):
        if not 0 <= value <= 1:
            raise InvalidParameterError(f"constant score must be in [0, 1], got {value}")
        self.value = float(value)

    def score(self, clip):
        return self.value

    def metadata(self):
        return {"detector": "constant", "score": repr(self.value)}


def detector_metadata(detector) -> dict:
    if hasattr(detector, "metadata"):
        return dict(detector.metadata())
    if isinstance(detector, DetectorModel):
        return {
            "detector": "logistic-baseline",
            "model_sha256": hashlib.sha256(detector.to_text().encode()).hexdigest(),
            "seed": str(detector.seed),
            "augmentation": "on" if detector.augmentation.enabled else "off",
        }
    return {"detector": type(detector).__name__}


# --- results --------------------------------------------------------------

def _fraction(num, den):
    return Fraction(num, den) if den else None


@dataclass(frozen=True)
class EvalResult:
    regime: str
    auth_correct: int
    n_real: int
    detect_correct: int
    n_fake: int
    mean_score_real: float
    mean_score_fake: float
    excluded_real: int = 0
    excluded_fake: int = 0

    @property
    def auth_accuracy(self):
        """Exact fraction of real clips called real (None when no real clip survived)."""
        return _fraction(self.auth_correct, self.n_real)

    @property
    def detect_accuracy(self):
        return _fraction(self.detect_correct, self.n_fake)

    @property
    def excluded(self):
        return self.excluded_real + self.excluded_fake


@dataclass(frozen=True)
class EvalReport:
    results: tuple
    detector: dict
    corpus_hash: str
    threshold: float = DEFAULT_THRESHOLD
    reference_height: int | None = DEFAULT_REFERENCE_HEIGHT
    timestamp: str = ""

    def __post_init__(self):
        object.__setattr__(self, "results", tuple(self.results))

    @property
    def regimes(self):
        return [r.regime for r in self.results]

    def row(self, regime) -> EvalResult:
        name = regime if isinstance(regime, str) else regime.name
        name = parse_regime(name).name
        for r in self.results:
            if r.regime == name:
                return r
        raise KeyError(name)


@dataclass(frozen=True)
class CaseStudyResult:
    clip_id: str
    regime: str
    score_uncorrupted: float
    score_corrupted: float
    threshold: float = DEFAULT_THRESHOLD

    @property
    def labels(self):
        return (label_for_score(self.score_uncorrupted, self.threshold),
                label_for_score(self.score_corrupted, self.threshold))

    def render(self):
        a, b = self.labels
        return (f"clip: {self.clip_id}\n"
                f"uncorrupted: score {self.score_uncorrupted:.4f} -> {a}\n"
                f"{self.regime}: score {self.score_corrupted:.4f} -> {b}\n")


# --- evaluation -----------------------------------------------------------

def _resolve_regimes(regimes):
    if regimes is None:
        return regime_catalog()
    return [parse_regime(r) if isinstance(r, str) else r for r in regimes]


def _score_all(detectors, clip):
    """Scores from every detector; baseline models share one feature extraction."""
    feats = None
    out = []
    for d in detectors:
        if isinstance(d, DetectorModel):
            if feats is None:
                feats = extract_features(clip)
            s = d.score_features(feats)
        else:
            s = d.score(clip)
        s = float(s)
        if not 0 <= s <= 1:
            raise InvalidInputError(f"detector returned score {s} outside [0, 1]")
        out.append(s)
    return out


def _clip_job(args):
    """Scores of one clip for every (regime, detector); None marks a failed corruption."""
    detectors, item, regimes, cfg, reference_height = args
    seen = {}  # several regimes can leave a clip bit-identical
    out = []
    for regime in regimes:
        try:
            clip = run_pipeline(item.clip, regime, cfg, reference_height).clip
        except VidCorruptError as exc:
            log.warning("pair %s (%s) excluded from %s: %s", item.pair_id, item.label, regime.name, exc)
            out.append([None] * len(detectors))
            continue
        key = clip.digest()
        if key not in seen:
            seen[key] = _score_all(detectors, clip)
        out.append(list(seen[key]))
    return out


def _tally(regime_name, scored, threshold):
    """scored: (label, score or None) pairs in canonical order."""
    correct = {REAL: 0, FAKE: 0}
    excluded = {REAL: 0, FAKE: 0}
    scores = {REAL: [], FAKE: []}
    for label, s in scored:
        if s is None:
            excluded[label] += 1
            continue
        scores[label].append(s)
        correct[label] += label_for_score(s, threshold) == label

    def mean(xs):
        return math.fsum(xs) / len(xs) if xs else float("nan")

    return EvalResult(
        regime=regime_name,
        auth_correct=correct[REAL], n_real=len(scores[REAL]),
        detect_correct=correct[FAKE], n_fake=len(scores[FAKE]),
        mean_score_real=mean(scores[REAL]), mean_score_fake=mean(scores[FAKE]),
        excluded_real=excluded[REAL], excluded_fake=excluded[FAKE],
    )


def _check_corpus(corpus):
    if not corpus or {item.label for item in corpus} != {REAL, FAKE}:
        raise InvalidInputError("evaluation corpus must contain both real and fake clips")


def _now():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def evaluate_many(detectors, corpus, regimes=None, threshold=DEFAULT_THRESHOLD, workers=1,
                  cfg: GopConfig = GopConfig(), reference_height=DEFAULT_REFERENCE_HEIGHT):
    """Evaluate several detectors on one corpus, corrupting each clip once per regime.

    Jobs are per clip and results are folded in (pair_id, label) order, so the
    reports do not depend on corpus order or on ``workers``.
    """
    _check_corpus(corpus)
    if workers < 1:
        raise InvalidParameterError(f"workers must be >= 1, got {workers}")
    detectors = list(detectors)
    regimes = _resolve_regimes(regimes)
    items = sorted(corpus, key=lambda it: (it.pair_id, it.label, it.seed))
    jobs = [(detectors, item, regimes, cfg, reference_height) for item in items]
    if workers == 1 or len(jobs) == 1:
        per_clip = [_clip_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            per_clip = list(pool.map(_clip_job, jobs))

    c_hash = corpus_hash(corpus)
    stamp = _now()
    reports = []
    for d, detector in enumerate(detectors):
        rows = [
            _tally(regime.name, [(item.label, per_clip[i][r][d]) for i, item in enumerate(items)], threshold)
            for r, regime in enumerate(regimes)
        ]
        reports.append(EvalReport(tuple(rows), detector_metadata(detector), c_hash,
                                  threshold, reference_height, stamp))
    return reports


def evaluate(detector, corpus, regimes=None, threshold=DEFAULT_THRESHOLD, workers=1,
             cfg: GopConfig = GopConfig(), reference_height=DEFAULT_REFERENCE_HEIGHT) -> EvalReport:
    return evaluate_many([detector], corpus, regimes, threshold, workers, cfg, reference_height)[0]


# --- report files ---------------------------------------------------------

def _pct(frac):
    return "n/a" if frac is None else f"{float(frac) * 100:.1f}%"


def _dec(frac):
    return "" if frac is None else f"{float(frac):.6f}"


def render_markdown(report: EvalReport) -> str:
    out = io.StringIO()
    out.write("# Corruption benchmark\n\n")
    out.write(f"- corpus: `{report.corpus_hash}`\n")
    for k in sorted(report.detector):
        out.write(f"- {k}: `{report.detector[k]}`\n")
    out.write(f"- threshold: {report.threshold!r}\n")
    ref = "none" if report.reference_height is None else f"{report.reference_height}p"
    out.write(f"- reference height: {ref}\n")
    for title, attr, n_attr in ((AUTH_TITLE, "auth_accuracy", "n_real"),
                                (DETECT_TITLE, "detect_accuracy", "n_fake")):
        out.write(f"\n## {title}\n\n| Corruption | Accuracy | Videos | Excluded |\n|---|---:|---:|---:|\n")
        for r in report.results:
            out.write(f"| {r.regime} | {_pct(getattr(r, attr))} | {getattr(r, n_attr)} | "
                      f"{r.excluded_real if n_attr == 'n_real' else r.excluded_fake} |\n")
    return out.getvalue()


def render_csv(report: EvalReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.results:
        w.writerow([r.regime, _dec(r.auth_accuracy), _dec(r.detect_accuracy), r.n_real, r.n_fake, r.excluded])
    return out.getvalue()


def report_to_json(report: EvalReport) -> str:
    def num(x):
        return None if x is None or (isinstance(x, float) and math.isnan(x)) else x

    rows = [{
        "regime": r.regime,
        "auth_correct": r.auth_correct, "n_real": r.n_real,
        "detect_correct": r.detect_correct, "n_fake": r.n_fake,
        "excluded_real": r.excluded_real, "excluded_fake": r.excluded_fake,
        "mean_score_real": num(r.mean_score_real), "mean_score_fake": num(r.mean_score_fake),
    } for r in report.results]
    doc = {
        "corpus_hash": report.corpus_hash, "detector": report.detector,
        "threshold": report.threshold, "reference_height": report.reference_height,
        "timestamp": report.timestamp, "results": rows,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> EvalReport:
    doc = json.loads(text)
    nan = float("nan")
    rows = tuple(EvalResult(
        r["regime"], r["auth_correct"], r["n_real"], r["detect_correct"], r["n_fake"],
        nan if r["mean_score_real"] is None else r["mean_score_real"],
        nan if r["mean_score_fake"] is None else r["mean_score_fake"],
        r["excluded_real"], r["excluded_fake"]) for r in doc["results"])
    return EvalReport(rows, doc["detector"], doc["corpus_hash"], doc["threshold"],
                      doc["reference_height"], doc["timestamp"])


_RENDERERS = {"markdown": render_markdown, "md": render_markdown, "csv": render_csv, "json": report_to_json}


def emit_report(report: EvalReport, fmt: str, path) -> Path:
    """Write one rendering of the report. Only the json form carries the timestamp."""
    try:
        render = _RENDERERS[fmt]
    except KeyError:
        raise InvalidParameterError(f"unknown report format {fmt!r}") from None
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render(report))
    return path


def write_report_files(report: EvalReport, out_dir, stem="report"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [emit_report(report, fmt, out_dir / f"{stem}.{ext}")
            for fmt, ext in (("markdown", "md"), ("csv", "csv"), ("json", "json"))]


# --- single-video case study ----------------------------------------------

GABON_REGIME = "240p + CRF50"


def gabon_case(detector, clip, regime=GABON_REGIME, threshold=DEFAULT_THRESHOLD,
               reference_height=DEFAULT_REFERENCE_HEIGHT, clip_id="clip",
               cfg: GopConfig = GopConfig()) -> CaseStudyResult:
    """Score a clip before and after one regime."""
    if isinstance(regime, str):
        regime = parse_regime(regime)
    before = float(detector.score(clip))
    after = float(detector.score(run_pipeline(clip, regime, cfg, reference_height).clip))
    return CaseStudyResult(clip_id, regime.name, before, after, threshold)


# --- augmentation alignment -----------------------------------------------

# Regimes whose degradation resembles the additive noise seen in training.
NOISE_LIKE_REGIMES = ("BR1.0", "BR0.5")


@dataclass(frozen=True)
class AlignmentStudy:
    baseline: EvalReport
    augmented: EvalReport

    def __post_init__(self):
        if self.baseline.regimes != self.augmented.regimes:
            raise InvalidInputError("paired reports must share regime order")

    def deltas(self):
        """(regime, auth delta, detect delta), augmented minus baseline, as exact fractions."""
        out = []
        for a, b in zip(self.augmented.results, self.baseline.results):
            da = None if a.auth_accuracy is None or b.auth_accuracy is None else a.auth_accuracy - b.auth_accuracy
            dd = None if a.detect_accuracy is None or b.detect_accuracy is None else (
                a.detect_accuracy - b.detect_accuracy)
            out.append((a.regime, da, dd))
        return out

    def noise_like_detect_delta(self):
        ds = [dd for name, _, dd in self.deltas() if name in NOISE_LIKE_REGIMES and dd is not None]
        return sum(ds, Fraction(0)) / len(ds) if ds else None

    def sign(self):
        d = self.noise_like_detect_delta()
        if d is None:
            return "n/a"
        return "positive" if d > 0 else "negative" if d < 0 else "zero"

    def render_markdown(self):
        out = io.StringIO()
        out.write("# Augmentation alignment\n\n")
        out.write(f"- corpus: `{self.baseline.corpus_hash}`\n")
        d = self.noise_like_detect_delta()
        shown = "n/a" if d is None else f"{float(d) * 100:+.1f} points"
        out.write(f"- mean detection delta over {', '.join(NOISE_LIKE_REGIMES)}: {shown} ({self.sign()})\n\n")
        out.write("| Corruption | Auth (no aug) | Auth (aug) | Auth delta | Detect (no aug) | Detect (aug) "
                  "| Detect delta |\n|---|---:|---:|---:|---:|---:|---:|\n")
        for (name, da, dd), b, a in zip(self.deltas(), self.baseline.results, self.augmented.results):
            out.write(f"| {name} | {_pct(b.auth_accuracy)} | {_pct(a.auth_accuracy)} | {_delta(da)} | "
                      f"{_pct(b.detect_accuracy)} | {_pct(a.detect_accuracy)} | {_delta(dd)} |\n")
        return out.getvalue()

    def render_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("regime", "auth_delta", "detect_delta"))
        for name, da, dd in self.deltas():
            w.writerow((name, _dec(da), _dec(dd)))
        return out.getvalue()


def _delta(frac):
    return "n/a" if frac is None else f"{float(frac) * 100:+.1f}"


def augmentation_alignment_study(train_corpus, eval_corpus=None, regimes=None, train_cfg: TrainConfig = TrainConfig(),
                                 augmentation: AugmentationSpec | None = None, threshold=DEFAULT_THRESHOLD,
                                 workers=1, cfg: GopConfig = GopConfig(),
                                 reference_height=DEFAULT_REFERENCE_HEIGHT) -> AlignmentStudy:
    """Train with and without augmentation on the same seed, evaluate both on one corpus."""
    if eval_corpus is None:
        eval_corpus = train_corpus
    if augmentation is None:
        augmentation = AugmentationSpec.standard()
    base_cfg = TrainConfig(train_cfg.learning_rate, train_cfg.epochs, train_cfg.l2, train_cfg.seed,
                           AugmentationSpec(), train_cfg.augment_copies)
    aug_cfg = TrainConfig(train_cfg.learning_rate, train_cfg.epochs, train_cfg.l2, train_cfg.seed,
                          augmentation, train_cfg.augment_copies)
    detectors = [train(train_corpus, base_cfg), train(train_corpus, aug_cfg)]
    base, aug = evaluate_many(detectors, eval_corpus, regimes, threshold, workers, cfg, reference_height)
    return AlignmentStudy(base, aug)


# --- config file ----------------------------------------------------------

@dataclass
class HarnessConfig:
    """``[harness]`` section of an INI file; every key is optional."""

    corpus: str | None = None
    model: str | None = None
    out_dir: str | None = None
    threshold: float = DEFAULT_THRESHOLD
    workers: int = 1
    regimes: list | None = None
    reference_height: int | None = DEFAULT_REFERENCE_HEIGHT
    augmentation: AugmentationSpec = field(default_factory=AugmentationSpec.standard)

    @classmethod
    def from_text(cls, text: str) -> "HarnessConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        cfg = cls()
        if cp.has_section("harness"):
            sec = cp["harness"]
            try:
                cfg.corpus = sec.get("corpus", cfg.corpus)
                cfg.model = sec.get("model", cfg.model)
                cfg.out_dir = sec.get("out_dir", cfg.out_dir)
                cfg.threshold = sec.getfloat("threshold", cfg.threshold)
                cfg.workers = sec.getint("workers", cfg.workers)
                if "regimes" in sec:
                    cfg.regimes = [parse_regime(r).name for r in sec["regimes"].split(",") if r.strip()]
                if "reference_height" in sec:
                    v = sec["reference_height"].strip().lower()
                    cfg.reference_height = None if v in ("", "none") else int(v)
            except ValueError as exc:
                raise InvalidParameterError(f"bad harness config: {exc}") from None
        if cp.has_section("augmentation"):
            items = " ".join(f"{k}={v.replace(',', ':')}" for k, v in cp["augmentation"].items())
            try:
                cfg.augmentation = AugmentationSpec.from_text(items)
            except (TypeError, ValueError) as exc:
                raise InvalidParameterError(f"bad augmentation config: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path) -> "HarnessConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())
