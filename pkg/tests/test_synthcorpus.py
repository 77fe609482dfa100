import os

import numpy as np
import pytest

from vidcorrupt.errors import InvalidInputError, InvalidParameterError
from vidcorrupt.synthcorpus import (FAKE, FEATHER_PX, MANIFEST_NAME, REAL, CorpusParams, corpus_hash,
                                    gen_corpus, gen_fake_clip, gen_real_clip, load_corpus,
                                    manifest_text, parse_manifest, patch_geometry, write_corpus)
from vidcorrupt.transform import psnr

P = CorpusParams(clip_count=2, frames=6, width=96, height=64, seed=3)


def test_real_clip_is_deterministic_and_sized():
    a, b = gen_real_clip(42, P), gen_real_clip(42, P)
    assert a == b
    assert (a.frame_count, a.width, a.height) == (6, 96, 64)


def test_different_seeds_differ_in_most_samples():
    a, b = gen_real_clip(1, P), gen_real_clip(2, P)
    assert np.mean(a.y != b.y) > 0.5


def test_head_moves_a_few_pixels():
    centers, _ = patch_geometry(5, CorpusParams(frames=48))
    steps = np.abs(np.diff(centers, axis=0)).max()
    assert 0 < steps <= 4


def test_weak_fake_is_nearly_real():
    params = CorpusParams(clip_count=1, frames=6, width=96, height=64, artifact_strength=0.01)
    real = gen_real_clip(9, params)
    assert psnr(real, gen_fake_clip(real, 9, params)) > 45


def test_fake_changes_only_the_patch():
    real = gen_real_clip(9, P)
    fake = gen_fake_clip(real, 9, P)
    assert gen_fake_clip(real, 9, P) == fake
    centers, (rx, ry) = patch_geometry(9, P)
    yy, xx = np.mgrid[0:P.height, 0:P.width]
    for t in range(P.frames):
        cx, cy = centers[t]
        r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
        outside = (r - 1) * min(rx, ry) > FEATHER_PX + 1
        inside = r < 0.9
        assert np.array_equal(real.y[t][outside], fake.y[t][outside])
        assert np.any(real.y[t][inside] != fake.y[t][inside])
        x0, x1 = int(cx - rx - FEATHER_PX - 2), int(cx + rx + FEATHER_PX + 3)
        y0, y1 = int(cy - ry - FEATHER_PX - 2), int(cy + ry + FEATHER_PX + 3)
        diff = real.y[t] != fake.y[t]
        diff[max(y0, 0):y1, max(x0, 0):x1] = False
        assert not diff.any()


def test_corpus_layout_and_balance():
    corpus = gen_corpus(CorpusParams(clip_count=10, frames=2, width=32, height=32))
    assert len(corpus) == 20
    assert sum(c.label == REAL for c in corpus) == sum(c.label == FAKE for c in corpus) == 10
    reals = {c.pair_id for c in corpus if c.label == REAL}
    assert {c.pair_id for c in corpus if c.label == FAKE} == reals


def test_regeneration_is_bit_exact():
    a, b = gen_corpus(P), gen_corpus(P)
    assert corpus_hash(a) == corpus_hash(b)
    assert corpus_hash(a) != corpus_hash(gen_corpus(CorpusParams(clip_count=2, frames=6, width=96, height=64, seed=4)))


def test_corpus_hash_ignores_order():
    a = gen_corpus(P)
    assert corpus_hash(a) == corpus_hash(a[::-1])


def test_manifest_and_files_round_trip(tmp_path):
    corpus = gen_corpus(P)
    digest = write_corpus(corpus, tmp_path)
    assert sorted(os.listdir(tmp_path)) == sorted(
        [MANIFEST_NAME, "0_real.y4m", "0_fake.y4m", "1_real.y4m", "1_fake.y4m"])
    text = (tmp_path / MANIFEST_NAME).read_text()
    assert text.splitlines()[0] == "pair_id\tlabel\tseed\twidth\theight\tframes\tfps"
    assert text == manifest_text(corpus)
    rows = parse_manifest(text)
    assert [r["label"] for r in rows] == [REAL, FAKE, REAL, FAKE]
    loaded = load_corpus(tmp_path)
    assert corpus_hash(loaded) == corpus_hash(corpus)
    assert write_corpus(corpus, tmp_path / "again") == digest


def test_orphan_fake_is_rejected(tmp_path):
    corpus = gen_corpus(P)
    write_corpus([c for c in corpus if not (c.pair_id == 1 and c.label == REAL)], tmp_path)
    with pytest.raises(InvalidInputError):
        load_corpus(tmp_path)


@pytest.mark.parametrize("kwargs", [
    {"clip_count": 0}, {"frames": 0}, {"width": 30}, {"height": 33},
    {"artifact_strength": 0.0}, {"artifact_strength": 1.5}, {"seed": -1},
])
def test_params_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        CorpusParams(**kwargs)
