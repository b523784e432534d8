import csv

import numpy as np
import pytest

from warpdetect.classify import LinearModel
from warpdetect.dataio import SynthConfig, synth_continuous
from warpdetect.detect import (
    BowScorer,
    ContinuousConfig,
    WarpScorer,
    WindowGrid,
    candidate_window_lengths,
    detect_continuous,
    excise_event,
    export_score_table,
    overlap,
    span_loss,
    train_continuous,
)
from warpdetect.encoding import FrameEncoder
from warpdetect.seqcore import Sequence
from warpdetect.warprep import fit_mean_warp, fixed_warp, represent


def test_overlap_examples():
    assert overlap((1, 10), (1, 10)) == 1.0
    assert overlap((1, 10), (11, 20)) == 0.0
    assert overlap((1, 10), (6, 15)) == pytest.approx(5 / 15)
    assert span_loss((3, 4), (3, 4)) == 0.0


def test_candidate_lengths():
    assert candidate_window_lengths([10, 20, 30], 3).lengths == (10, 20, 30)
    assert candidate_window_lengths([12, 12, 12], 5).lengths == (12,)
    assert candidate_window_lengths([10, 30], 1).lengths == (20,)
    with pytest.raises(ValueError):
        candidate_window_lengths([], 3)
    with pytest.raises(ValueError):
        WindowGrid((0, 3))
    assert WindowGrid((5, 3, 5)).usable(4) == (3,)


def _warp_model(seed, D=2, T=9):
    rng = np.random.default_rng(seed)
    pbar = fit_mean_warp([np.cumsum(rng.normal(size=(D, m)), axis=1) for m in (7, T, 8)], "learned")
    return LinearModel(W=rng.normal(size=(D, pbar.T)), bias=-0.2, pbar=pbar)


def test_scoring_paths_agree():
    model = _warp_model(0)
    X = np.random.default_rng(1).normal(size=(2, 60))
    fast, ref, fft = WarpScorer(model), WarpScorer(model), WarpScorer(model, fft=True)
    for j in (3, 9, 17, 60):
        a = fast.scores(X, j)
        np.testing.assert_allclose(a, ref.scores_direct(X, j), atol=1e-9)
        np.testing.assert_allclose(a, fft.scores(X, j), atol=1e-9)
        s = min(5, 60 - j)
        explicit = float(np.sum(model.W * represent(X[:, s:s + j], model.pbar))) + model.bias
        assert a[s] == pytest.approx(explicit, abs=1e-9)
    assert fast.evaluations == sum(60 - j + 1 for j in (3, 9, 17, 60))


def test_planted_pattern_is_found():
    rng = np.random.default_rng(2)
    pattern = rng.normal(size=(3, 12))
    X = 0.05 * rng.normal(size=(3, 80))
    X[:, 40:52] = pattern
    model = LinearModel(W=pattern, pbar=fixed_warp(12, "eye"))
    det = detect_continuous(X, WarpScorer(model), WindowGrid((12,)))
    assert (det.start, det.end) == (41, 52)


def test_tie_rule_smallest_start_then_length():
    model = LinearModel(W=np.zeros((1, 5)), bias=1.0, pbar=fixed_warp(5, "eye"))
    det = detect_continuous(np.ones((1, 20)), WarpScorer(model), WindowGrid((4, 6)))
    assert (det.start, det.end, det.window_length_used, det.score) == (1, 4, 4, 1.0)


def test_loss_augmented_search_adds_span_loss():
    model = LinearModel(W=np.zeros((1, 4)), pbar=fixed_warp(4, "eye"))
    det = detect_continuous(np.zeros((1, 20)), WarpScorer(model), WindowGrid((4,)), loss_truth=(1, 4),
                            keep_scores=True)
    # every window not touching the truth has loss 1; the first such start is 5
    assert (det.start, det.score) == (5, 1.0)
    assert det.per_window_scores[4][0] == 0.0


def test_window_longer_than_sequence():
    model = LinearModel(W=np.zeros((1, 4)), pbar=fixed_warp(4, "eye"))
    with pytest.raises(ValueError):
        detect_continuous(np.zeros((1, 3)), WarpScorer(model), WindowGrid((4, 5)))


def test_scorer_cache_follows_weight_updates():
    model = _warp_model(3)
    scorer = WarpScorer(model)
    X = np.random.default_rng(4).normal(size=(2, 30))
    before = scorer.scores(X, 10)
    model.W = 2 * model.W
    after = scorer.scores(X, 10)
    np.testing.assert_allclose(after - model.bias, 2 * (before - model.bias), atol=1e-12)


def test_bow_scorer_matches_naive_pooling():
    rng = np.random.default_rng(5)
    seqs = [rng.normal(size=(2, 30)) for _ in range(3)]
    enc = FrameEncoder("nonlinear", K=6, seed=0).fit(seqs)
    model = LinearModel(W=rng.normal(size=(6, 1)), bias=0.1)
    scorer = BowScorer(model, enc)
    onehot = enc.transform(seqs[0])
    table = scorer.prepare(seqs[0])
    for j in (1, 5, 30):
        s = scorer.scores(table, j)
        naive = [model.W[:, 0] @ onehot[:, a:a + j].mean(axis=1) + 0.1 for a in range(30 - j + 1)]
        np.testing.assert_allclose(s, naive, atol=1e-12)
    with pytest.raises(ValueError):
        BowScorer(model, FrameEncoder("linear"))


def test_export_score_table(tmp_path):
    model = LinearModel(W=np.ones((1, 3)), pbar=fixed_warp(3, "eye"))
    det = detect_continuous(np.arange(10.0)[None], WarpScorer(model), WindowGrid((3, 5)), keep_scores=True)
    path = tmp_path / "scores.csv"
    export_score_table(det, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["length", "start", "score"]
    assert len(rows) == 1 + 8 + 6
    assert max(float(r[2]) for r in rows[1:]) == det.score
    with pytest.raises(ValueError):
        export_score_table(detect_continuous(np.zeros((1, 5)), WarpScorer(model), WindowGrid((3,))), path)


def test_excise_event():
    seq = Sequence(np.arange(10.0)[None], id="w", event_span=(3, 5))
    decoy = excise_event(seq)
    assert decoy.event_span is None and decoy.id == "w-decoy"
    assert decoy.data.tolist() == [[0, 1, 5, 6, 7, 8, 9]]
    assert excise_event(Sequence(np.zeros((1, 4)), event_span=(1, 4))) is None


@pytest.mark.parametrize("feature", ["warp", "bow"])
def test_train_continuous_small(feature):
    cfg = SynthConfig(seed=1, D=4, n_classes=3, n_sequences=14, n_distractors=4, length_range=(10, 16))
    words, _ = synth_continuous(cfg)
    cm = train_continuous(words[:10], ContinuousConfig(feature=feature, K=40, iterations=6))
    assert np.isfinite(cm.val_auc) and len(cm.history) == 6
    assert np.any(cm.model.W != 0)
    ov = [overlap((d.start, d.end), s.event_span) for s, d in ((s, cm.detect(s)) for s in words[10:])]
    assert np.mean(ov) > 0.3


def test_train_continuous_needs_spans():
    with pytest.raises(ValueError):
        train_continuous([Sequence(np.zeros((1, 5)))])
    words, _ = synth_continuous(SynthConfig(n_sequences=4, n_distractors=2))
    with pytest.raises(ValueError):
        train_continuous(words, ContinuousConfig(feature="nope"))
