"""``vidcorrupt`` command line.

Exit codes: 0 success, 2 usage or validation error, 3 I/O error,
4 domain failure (for example an unreachable bitrate).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import codec, harness
from .corruptions import apply_pipeline, parse_regime
from .detector import AugmentationSpec, DetectorModel, TrainConfig, train
from .errors import (BitstreamError, InvalidInputError, ParseError, PipelineError,
                     UnreachableBitrateError, VidCorruptError)
from .synthcorpus import DEFAULT_STRENGTH, CorpusParams, gen_corpus, load_corpus, write_corpus
from .transform import psnr
from .y4m import read_y4m, write_y4m

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _size(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    return w, h


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _reference(text):
    if text.lower() == "none":
        return None
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'none', got {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("reference height must be positive")
    return v


def build_parser():
    p = _Parser(prog="vidcorrupt", description="Video corruption benchmark for fake-video detectors.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-corpus", help="write a synthetic real/fake corpus")
    s.add_argument("--count", type=int, default=20, help="pairs to generate")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, default=48)
    s.add_argument("--size", type=_size, default=(256, 144), help="WxH")
    s.add_argument("--strength", type=float, default=DEFAULT_STRENGTH)

    s = sub.add_parser("corrupt", help="apply a regime to a .y4m clip")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--regime", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--reference-height", type=_reference, default=None,
                   help="treat the input as this tall when mapping regime heights (default: absolute)")

    s = sub.add_parser("encode", help="encode a .y4m clip to .tvc")
    s.add_argument("--in", dest="inp", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--crf", type=int)
    g.add_argument("--bitrate", type=float, help="target in Mbit/s")
    s.add_argument("--out", required=True)

    s = sub.add_parser("decode", help="decode a .tvc stream to .y4m")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("metrics", help="luma PSNR between two .y4m clips")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)

    s = sub.add_parser("train", help="train the baseline detector on a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out-model", required=True)
    s.add_argument("--augment", type=_on_off, default=False, help="on|off")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    s.add_argument("--config", help="INI file with an [augmentation] section")

    s = sub.add_parser("eval", help="evaluate a detector on every regime")
    _eval_flags(s)
    s.add_argument("--model")

    s = sub.add_parser("study", help="augmentation alignment study (trains two detectors)")
    _eval_flags(s)
    s.add_argument("--train-corpus", help="training corpus (default: --corpus)")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("gabon", help="score one clip before and after a regime")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--regime", default=harness.GABON_REGIME)
    s.add_argument("--threshold", type=float, default=harness.DEFAULT_THRESHOLD)
    s.add_argument("--reference-height", type=_reference, default=harness.DEFAULT_REFERENCE_HEIGHT)
    return p


def _eval_flags(s):
    s.add_argument("--corpus")
    s.add_argument("--out-dir")
    s.add_argument("--threshold", type=float)
    s.add_argument("--workers", type=int)
    s.add_argument("--regimes", help="comma-separated subset (default: full catalog)")
    s.add_argument("--reference-height", help="nominal source height, or 'none' for absolute heights")
    s.add_argument("--config", help="INI file; flags override its values")


# --- commands -------------------------------------------------------------

def _check(cond, message):
    if not cond:
        raise UsageError(message)


def cmd_gen_corpus(a):
    _check(a.count >= 1, "--count must be >= 1")
    _check(a.frames >= 1, "--frames must be >= 1")
    _check(0 <= a.seed < 2 ** 64, "--seed must fit in 64 bits")
    w, h = a.size
    _check(w >= 32 and h >= 32 and w % 2 == 0 and h % 2 == 0, "--size must be even and at least 32x32")
    _check(0 < a.strength <= 1, "--strength must be in (0, 1]")
    params = CorpusParams(clip_count=a.count, frames=a.frames, width=w, height=h, seed=a.seed,
                          artifact_strength=a.strength)
    print(write_corpus(gen_corpus(params), a.out))


def cmd_corrupt(a):
    regime = parse_regime(a.regime)
    write_y4m(apply_pipeline(read_y4m(a.inp), regime, reference_height=a.reference_height), a.out)


def cmd_encode(a):
    clip = read_y4m(a.inp)
    if a.crf is not None:
        bs = codec.encode(clip, a.crf)
    else:
        _check(a.bitrate > 0, "--bitrate must be positive")
        bs = codec.encode_at_bitrate(clip, a.bitrate * 1e6)
    codec.write_tvc(bs, a.out)
    print(f"crf {bs.crf}, {codec.measure_bitrate(bs) / 1e6:.4f} Mbit/s")


def cmd_decode(a):
    write_y4m(codec.decode(codec.read_tvc(a.inp)), a.out)


def format_psnr(value):
    return "inf" if math.isinf(value) else f"{value:.2f}"


def cmd_metrics(a):
    print(format_psnr(psnr(read_y4m(a.a), read_y4m(a.b))))


def _load_config(path):
    return harness.HarnessConfig.load(path) if path else harness.HarnessConfig()


def cmd_train(a):
    _check(a.epochs >= 0, "--epochs must be >= 0")
    aug = _load_config(a.config).augmentation if a.augment else AugmentationSpec()
    model = train(load_corpus(a.corpus), TrainConfig(epochs=a.epochs, seed=a.seed, augmentation=aug))
    model.save(a.out_model)
    print(f"final loss {model.train_loss:.6f}")


def _merged(a):
    cfg = _load_config(a.config)
    for name in ("corpus", "out_dir", "threshold", "workers"):
        v = getattr(a, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(a, "model", None) is not None:
        cfg.model = a.model
    if a.regimes is not None:
        cfg.regimes = [parse_regime(r).name for r in a.regimes.split(",") if r.strip()]
    if a.reference_height is not None:
        try:
            cfg.reference_height = _reference(a.reference_height)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"--reference-height: {exc}") from None
    _check(cfg.corpus is not None, "--corpus is required (flag or config)")
    _check(cfg.workers >= 1, "--workers must be >= 1")
    _check(0 <= cfg.threshold <= 1, "--threshold must be in [0, 1]")
    return cfg


def cmd_eval(a):
    cfg = _merged(a)
    _check(cfg.model is not None, "--model is required (flag or config)")
    model = DetectorModel.load(cfg.model)
    report = harness.evaluate(model, load_corpus(cfg.corpus), cfg.regimes, cfg.threshold, cfg.workers,
                              reference_height=cfg.reference_height)
    if cfg.out_dir:
        harness.write_report_files(report, cfg.out_dir)
    sys.stdout.write(harness.render_markdown(report))


def cmd_study(a):
    cfg = _merged(a)
    eval_corpus = load_corpus(cfg.corpus)
    train_corpus = load_corpus(a.train_corpus) if a.train_corpus else eval_corpus
    study = harness.augmentation_alignment_study(
        train_corpus, eval_corpus, cfg.regimes, TrainConfig(seed=a.seed), cfg.augmentation,
        cfg.threshold, cfg.workers, reference_height=cfg.reference_height)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        harness.write_report_files(study.baseline, out, "baseline")
        harness.write_report_files(study.augmented, out, "augmented")
        (out / "alignment.md").write_text(study.render_markdown(), encoding="utf-8")
        (out / "alignment.csv").write_text(study.render_csv(), encoding="utf-8")
    sys.stdout.write(study.render_markdown())


def cmd_gabon(a):
    _check(0 <= a.threshold <= 1, "--threshold must be in [0, 1]")
    regime = parse_regime(a.regime)
    model = DetectorModel.load(a.model)
    result = harness.gabon_case(model, read_y4m(a.inp), regime, a.threshold, a.reference_height,
                                clip_id=Path(a.inp).name)
    sys.stdout.write(result.render())


COMMANDS = {
    "gen-corpus": cmd_gen_corpus, "corrupt": cmd_corrupt, "encode": cmd_encode, "decode": cmd_decode,
    "metrics": cmd_metrics, "train": cmd_train, "eval": cmd_eval, "study": cmd_study, "gabon": cmd_gabon,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"vidcorrupt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"vidcorrupt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UnreachableBitrateError, PipelineError) as exc:
        cause = getattr(exc, "cause", None)
        code = EXIT_USAGE if isinstance(cause, InvalidInputError) else EXIT_DOMAIN
        print(f"vidcorrupt {args.command}: {exc}", file=sys.stderr)
        return code
    except (OSError, ParseError, BitstreamError) as exc:
        print(f"vidcorrupt {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvalidInputError as exc:
        print(f"vidcorrupt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VidCorruptError as exc:
        print(f"vidcorrupt {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
