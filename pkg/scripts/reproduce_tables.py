#!/usr/bin/env python3
"""Train the baseline on a held-out corpus and print both accuracy tables.

    python scripts/reproduce_tables.py --out runs/tables --workers 1

Writes report.{md,csv,json} and model.txt into --out.  With --study the
augmented detector is trained too and the alignment table is written.
"""
import argparse
import logging
import sys
from pathlib import Path

from vidcorrupt import harness
from vidcorrupt.detector import TrainConfig, train
from vidcorrupt.synthcorpus import CorpusParams, gen_corpus

log = logging.getLogger("reproduce")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/tables")
    ap.add_argument("--train-seed", type=int, default=8)
    ap.add_argument("--train-pairs", type=int, default=40)
    ap.add_argument("--eval-seed", type=int, default=7)
    ap.add_argument("--eval-pairs", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--study", action="store_true", help="also run the augmentation alignment study")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log.info("generating corpora")
    train_corpus = gen_corpus(CorpusParams(seed=args.train_seed, clip_count=args.train_pairs))
    eval_corpus = gen_corpus(CorpusParams(seed=args.eval_seed, clip_count=args.eval_pairs))

    if args.study:
        log.info("training baseline and augmented detectors, evaluating both")
        study = harness.augmentation_alignment_study(train_corpus, eval_corpus, workers=args.workers)
        harness.write_report_files(study.baseline, out, "baseline")
        harness.write_report_files(study.augmented, out, "augmented")
        (out / "alignment.md").write_text(study.render_markdown(), encoding="utf-8")
        (out / "alignment.csv").write_text(study.render_csv(), encoding="utf-8")
        sys.stdout.write(study.render_markdown())
        return 0

    log.info("training")
    model = train(train_corpus, TrainConfig())
    model.save(out / "model.txt")
    log.info("evaluating %d regimes", 21)
    report = harness.evaluate(model, eval_corpus, workers=args.workers)
    harness.write_report_files(report, out)
    sys.stdout.write(harness.render_markdown(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
