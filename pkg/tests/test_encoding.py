import numpy as np
import pytest

from warpdetect.encoding import (
    REFERENCE_CODEBOOK_SIZES,
    Codebook,
    CumulativeTable,
    Encoding,
    FrameEncoder,
    bow,
    bow_window,
    cumulative_table,
    encode_frames,
    encode_indices,
    kmeans_fit,
)


def test_kmeans_separated_clusters():
    rng = np.random.default_rng(0)
    frames = np.r_[np.zeros(10), np.full(10, 10.0)][:, None] + 0.0 * rng.normal(size=(20, 1))
    cb = kmeans_fit(frames, 2, seed=3)
    assert sorted(cb.centers.ravel()) == [0.0, 10.0]


def test_kmeans_single_center_is_mean():
    frames = np.random.default_rng(1).normal(size=(50, 3))
    cb = kmeans_fit(frames, 1)
    np.testing.assert_allclose(cb.centers[0], frames.mean(axis=0), atol=1e-12)


def test_kmeans_descent_and_determinism():
    frames = np.random.default_rng(2).normal(size=(300, 2))
    cb, hist = kmeans_fit(frames, 8, seed=5, return_history=True)
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))
    assert hist[-1] <= hist[0]
    assert len(hist) <= 101
    assert np.array_equal(kmeans_fit(frames, 8, seed=5).centers, cb.centers)


def test_kmeans_needs_distinct_frames():
    with pytest.raises(ValueError):
        kmeans_fit(np.ones((10, 2)), 2)


def test_encode_frames_examples():
    centers = np.arange(5.0)[:, None] * 3
    cb = Codebook(centers)
    X = np.array([[6.0]])
    assert np.array_equal(encode_frames(X, cb)[:, 0], np.eye(5)[2])
    cb2 = Codebook(np.array([[0.0], [10.0]]))
    # 16 < 36
    assert encode_indices(np.array([[4.0]]), cb2)[0] == 0
    assert encode_indices(np.array([[5.0]]), cb2)[0] == 0  # tie -> lowest index
    with pytest.raises(ValueError):
        encode_frames(np.zeros((2, 3)), cb2)


def test_bow_examples():
    enc = np.array([[1, 1, 0], [0, 0, 1]], dtype=float)
    np.testing.assert_allclose(bow(enc), [2 / 3, 1 / 3])
    assert np.array_equal(bow(enc[:, :1]), [1.0, 0.0])
    perm = enc[:, [2, 0, 1]]
    np.testing.assert_allclose(bow(perm), bow(enc))


def _random_onehot(rng, K, M):
    return np.eye(K)[:, rng.integers(0, K, size=M)]


def test_cumulative_table_invariants():
    rng = np.random.default_rng(3)
    enc = _random_onehot(rng, 7, 40)
    tab = cumulative_table(enc)
    assert np.all(tab.table[:, 0] == 0)
    assert np.all(np.diff(tab.table, axis=1) >= 0)
    assert tab.table[:, -1].sum() == 40


def test_bow_window_examples():
    rng = np.random.default_rng(4)
    enc = _random_onehot(rng, 5, 12)
    tab = CumulativeTable(enc)
    np.testing.assert_allclose(bow_window(tab, 1, 12), bow(enc), atol=1e-15)
    for m in range(1, 13):
        assert np.array_equal(tab.bow_window(m, m), enc[:, m - 1])
    with pytest.raises(ValueError):
        tab.bow_window(0, 3)
    with pytest.raises(ValueError):
        tab.bow_window(5, 4)


def test_bow_window_matches_naive_pooling_all_windows():
    rng = np.random.default_rng(5)
    for _ in range(50):
        K, M = int(rng.integers(2, 12)), int(rng.integers(1, 30))
        enc = _random_onehot(rng, K, M)
        tab = CumulativeTable(enc)
        for a in range(1, M + 1):
            for b in range(a, M + 1):
                np.testing.assert_allclose(tab.bow_window(a, b), enc[:, a - 1:b].mean(axis=1), atol=1e-12)


def test_window_lookup_cost_is_order_K():
    enc = _random_onehot(np.random.default_rng(6), 9, 50)
    tab = CumulativeTable(enc)
    tab.bow_window(3, 40)
    assert tab.lookups == 2 * 9
    tab.bow_window(1, 1)
    assert tab.lookups == 4 * 9


def test_window_sums_vectorised():
    enc = _random_onehot(np.random.default_rng(7), 4, 20)
    tab = CumulativeTable(enc)
    sums = tab.window_sums(6)
    for s in range(15):
        np.testing.assert_allclose(sums[:, s], enc[:, s:s + 6].sum(axis=1))


def test_frame_encoder_variants():
    rng = np.random.default_rng(8)
    seqs = [rng.normal(size=(3, int(rng.integers(5, 10)))) for _ in range(6)]
    lin = FrameEncoder("linear").fit(seqs)
    assert np.array_equal(lin.transform(seqs[0]), seqs[0])
    de = FrameEncoder("delta").fit(seqs)
    assert de.transform(seqs[0]).shape == (3, seqs[0].shape[1] - 1)
    nl = FrameEncoder("nonlinear", K=5, seed=1).fit(seqs)
    out = nl.transform(seqs[0])
    assert out.shape == (5, seqs[0].shape[1]) and np.all(out.sum(axis=0) == 1)
    nld = FrameEncoder(Encoding.NONLINEAR_DELTA, K=4).fit(seqs)
    assert nld.transform(seqs[1]).shape == (4, seqs[1].shape[1] - 1)
    with pytest.raises(RuntimeError):
        FrameEncoder("nonlinear").transform(seqs[0])


def test_reference_codebook_sizes_recorded():
    assert REFERENCE_CODEBOOK_SIZES == {"6dmg": (300, 100), "ck+": (136, 30), "uva-nemo": (1500, 500)}
