import json

import numpy as np
import pytest

from warpdetect.classify import LinearModel
from warpdetect.dataio import (
    ParseError,
    SynthConfig,
    continuous_benchmark_config,
    isolated_benchmark_config,
    load_codebook,
    load_manifest,
    load_mean_warp,
    load_model,
    load_sequence,
    random_causal_path,
    save_codebook,
    save_mean_warp,
    save_model,
    save_sequence,
    synth_continuous,
    synth_isolated,
    write_manifest,
)
from warpdetect.encoding import Codebook
from warpdetect.seqcore import Sequence
from warpdetect.warprep import fixed_warp


def test_sequence_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    seq = Sequence(rng.normal(size=(3, 7)) * 1e5, id="x", label="wave", event_span=(2, 5))
    save_sequence(seq, tmp_path / "x.txt")
    back = load_sequence(tmp_path / "x.txt")
    assert np.array_equal(back.data, seq.data)
    assert (back.id, back.label, back.event_span) == ("x", "wave", (2, 5))


def test_sequence_without_label_or_span(tmp_path):
    save_sequence(Sequence(np.ones((1, 2))), tmp_path / "a.txt")
    assert (tmp_path / "a.txt").read_text().splitlines()[0] == "1 2 - - -"
    back = load_sequence(tmp_path / "a.txt")
    assert back.label is None and back.event_span is None


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("2 3\n1 2 3\n", 3),
    ("1 3\n1 2\n", 2),
    ("1 2\n1 x\n", 2),
    ("a 2\n1 2\n", 1),
    ("1 2 l 2 9\n1 2\n", 1),
])
def test_parse_errors_carry_line(tmp_path, text, line):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ParseError) as info:
        load_sequence(p)
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_manifest_round_trip(tmp_path):
    seqs = synth_isolated(SynthConfig(per_class=3))
    path = write_manifest("demo", seqs, tmp_path, provenance="unit test")
    manifest, back = load_manifest(path)
    assert manifest.name == "demo" and manifest.dims == 3 and manifest.classes == ["class0", "class1"]
    assert [s.id for s in back] == [s.id for s in seqs]
    assert all(np.array_equal(a.data, b.data) for a, b in zip(seqs, back))


def test_manifest_rejects_mixed_dims(tmp_path):
    with pytest.raises(ValueError):
        write_manifest("bad", [Sequence(np.zeros((1, 3)), id="a"), Sequence(np.zeros((2, 3)), id="b")], tmp_path)
    path = write_manifest("ok", [Sequence(np.zeros((1, 3)), id="a")], tmp_path)
    raw = json.loads(path.read_text())
    raw["dims"] = 2
    path.write_text(json.dumps(raw))
    with pytest.raises(ValueError, match="D != 2"):
        load_manifest(path)


def test_binary_round_trips(tmp_path):
    pbar = fixed_warp(4, "hist")
    save_mean_warp(pbar, tmp_path / "p.bin")
    back = load_mean_warp(tmp_path / "p.bin")
    assert np.array_equal(back.data, pbar.data) and back.mode == pbar.mode

    cb = Codebook(np.random.default_rng(1).normal(size=(5, 2)), train_seed=7)
    save_codebook(cb, tmp_path / "c.bin")
    cb2 = load_codebook(tmp_path / "c.bin")
    assert np.array_equal(cb2.centers, cb.centers) and cb2.train_seed == 7

    model = LinearModel(W=np.random.default_rng(2).normal(size=(2, 4)), bias=-0.25, C=10.0,
                        pbar=pbar, meanwarp_ref="hist", objective=1.5)
    save_model(model, tmp_path / "m.bin", extra={"k": "v"}, codebook=cb)
    m2, extra, cb3 = load_model(tmp_path / "m.bin")
    assert np.array_equal(m2.W, model.W) and m2.bias == -0.25 and m2.C == 10.0
    assert np.array_equal(m2.pbar.data, pbar.data) and extra == {"k": "v"}
    assert np.array_equal(cb3.centers, cb.centers)


def test_binary_layout_and_corruption(tmp_path):
    save_mean_warp(fixed_warp(2, "eye"), tmp_path / "p.bin")
    raw = (tmp_path / "p.bin").read_bytes()
    assert raw[:4] == b"WDET" and raw[4] == 1
    (tmp_path / "bad.bin").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ValueError):
        load_mean_warp(tmp_path / "bad.bin")
    (tmp_path / "long.bin").write_bytes(raw + b"\0")
    with pytest.raises(ValueError):
        load_mean_warp(tmp_path / "long.bin")
    with pytest.raises(ValueError):
        load_model(tmp_path / "p.bin")


def test_synth_isolated_is_seeded():
    a = synth_isolated(SynthConfig(seed=4, per_class=5))
    b = synth_isolated(SynthConfig(seed=4, per_class=5))
    c = synth_isolated(SynthConfig(seed=5, per_class=5))
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))
    assert not np.array_equal(a[0].data, c[0].data)
    assert len(a) == 10 and {s.label for s in a} == {"class0", "class1"}
    assert all(20 <= s.M <= 40 for s in a)


def test_zero_noise_zero_warp_reproduces_template():
    seqs = synth_isolated(SynthConfig(seed=1, per_class=4, warp=0.0, noise=0.0, length_range=(30, 30)))
    same = [s.data for s in seqs if s.label == "class0"]
    assert all(np.array_equal(same[0], x) for x in same[1:])


def test_random_causal_path():
    rng = np.random.default_rng(0)
    for gamma in (0.0, 0.3, 0.9):
        i, j = random_causal_path(15, gamma, rng)
        assert (i[0], j[0], i[-1], j[-1]) == (0, 0, 14, 14)
        steps = set(zip(np.diff(i), np.diff(j)))
        assert steps <= {(1, 1), (1, 0), (0, 1)}
    i, j = random_causal_path(6, 0.0, rng)
    assert np.array_equal(i, np.arange(6)) and np.array_equal(j, np.arange(6))


def test_synth_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(length_range=(3, 10))
    with pytest.raises(ValueError):
        SynthConfig(warp=1.0)
    with pytest.raises(ValueError):
        SynthConfig(noise=-0.1)


def test_synth_continuous_spans():
    words, decoys = synth_continuous(SynthConfig(seed=2, n_classes=3, n_sequences=5, n_distractors=4, n_decoys=2))
    assert len(words) == 5 and len(decoys) == 2
    for w in words:
        a, b = w.event_span
        assert 1 <= a <= b <= w.M
    assert all(d.event_span is None for d in decoys)
    with pytest.raises(ValueError):
        synth_continuous(SynthConfig(n_classes=1))


def test_benchmark_configs():
    iso = isolated_benchmark_config()
    assert (iso.n_classes, iso.per_class, iso.warp, iso.noise) == (2, 40, 0.3, 0.05)
    cont = continuous_benchmark_config()
    assert cont.n_distractors == 10 and cont.n_sequences == 50


def test_mirrored_classes_are_time_reversals():
    cfg = SynthConfig(seed=3, per_class=2, warp=0.0, noise=0.0, length_range=(25, 25), mirror_spread=0.1)
    seqs = synth_isolated(cfg)
    a = next(s for s in seqs if s.label == "class0").data
    b = next(s for s in seqs if s.label == "class1").data
    np.testing.assert_allclose(b, a[:, ::-1], atol=1e-12)
    assert not np.allclose(a, b)
    with pytest.raises(ValueError):
        SynthConfig(n_classes=3, mirror_spread=0.1)
