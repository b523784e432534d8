"""File formats and synthetic datasets.

Sequence text format::

    D M label start end
    <D rows of M space-separated values>

``-`` marks a missing label/start/end.  Values are written with 17
significant digits so a save/load round trip is bit-exact.

Binary containers (models, mean warps, codebooks) are::

    b"WDET" | version (1 byte) | header length (uint32 LE) | JSON header |
    row-major little-endian float64 arrays, in header order
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .classify import LinearModel
from .encoding import Codebook
from .seqcore import Sequence
from .warprep import MeanWarp, WarpMode

MAGIC = b"WDET"
VERSION = 1
MISSING = "-"


class ParseError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


# -- sequences ---------------------------------------------------------------

def save_sequence(seq: Sequence, path) -> None:
    start, end = seq.event_span if seq.event_span else (MISSING, MISSING)
    label = MISSING if seq.label is None else str(seq.label)
    if any(c.isspace() for c in label):
        raise ValueError(f"labels may not contain whitespace: {label!r}")
    lines = [f"{seq.D} {seq.M} {label} {start} {end}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in seq.data]
    Path(path).write_text("\n".join(lines) + "\n")


def load_sequence(path, seq_id: Optional[str] = None) -> Sequence:
    path = Path(path)
    rows = [ln for ln in path.read_text().splitlines()]
    if not rows or not rows[0].strip():
        raise ParseError(path, 1, "empty file or missing header")
    head = rows[0].split()
    if len(head) not in (2, 3, 5):
        raise ParseError(path, 1, "header must be 'D M [label [start end]]'")
    try:
        D, M = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError(path, 1, "D and M must be integers") from None
    if D < 1 or M < 1:
        raise ParseError(path, 1, "D and M must be positive")
    label = head[2] if len(head) >= 3 and head[2] != MISSING else None
    span = None
    if len(head) == 5 and head[3] != MISSING:
        try:
            span = (int(head[3]), int(head[4]))
        except ValueError:
            raise ParseError(path, 1, "event span must be integers") from None
    body = rows[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != D:
        raise ParseError(path, len(body) + 2 if len(body) < D else D + 2,
                         f"expected {D} data rows, found {len(body)}")
    data = np.empty((D, M))
    for d, ln in enumerate(body):
        vals = ln.split()
        if len(vals) != M:
            raise ParseError(path, d + 2, f"expected {M} values, found {len(vals)}")
        try:
            data[d] = [float(v) for v in vals]
        except ValueError as exc:
            raise ParseError(path, d + 2, str(exc)) from None
    try:
        return Sequence(data, id=seq_id or path.stem, label=label, event_span=span)
    except ValueError as exc:
        raise ParseError(path, 1, str(exc)) from None


# -- manifests ---------------------------------------------------------------

@dataclass
class DatasetManifest:
    name: str
    dims: int
    classes: List[str]
    sequences: List[dict]
    provenance: str = ""


def write_manifest(name: str, sequences: List[Sequence], directory, provenance: str = "") -> Path:
    """Save every sequence under ``directory`` and a ``manifest.json`` listing them."""
    directory = Path(directory)
    (directory / "sequences").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in sequences:
        rel = Path("sequences") / f"{s.id}.txt"
        save_sequence(s, directory / rel)
        entries.append({"id": s.id, "path": rel.as_posix(), "label": s.label,
                        "span": list(s.event_span) if s.event_span else None})
    dims = {s.D for s in sequences}
    if len(dims) != 1:
        raise ValueError(f"mixed dimensionality in dataset: {sorted(dims)}")
    classes = sorted({str(s.label) for s in sequences if s.label is not None})
    manifest = DatasetManifest(name, dims.pop(), classes, entries, provenance)
    path = directory / "manifest.json"
    path.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path) -> Tuple[DatasetManifest, List[Sequence]]:
    """Parse a manifest and every sequence it lists; rejects mixed D."""
    path = Path(path)
    raw = json.loads(path.read_text())
    manifest = DatasetManifest(**raw)
    seqs = []
    for entry in manifest.sequences:
        f = path.parent / entry["path"]
        if not f.exists():
            raise FileNotFoundError(f"manifest entry missing: {f}")
        seqs.append(load_sequence(f, seq_id=entry.get("id")))
    bad = [s.id for s in seqs if s.D != manifest.dims]
    if bad:
        raise ValueError(f"sequences with D != {manifest.dims}: {bad[:5]}")
    return manifest, seqs


# -- binary containers -------------------------------------------------------

def _write_container(path, header: dict, arrays: List[np.ndarray]) -> None:
    header = dict(header, arrays=[list(a.shape) for a in arrays])
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + bytes([VERSION]) + struct.pack("<I", len(blob)) + blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes(order="C"))


def _read_container(path) -> Tuple[dict, List[np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a warpdetect binary file")
    if raw[4] != VERSION:
        raise ValueError(f"{path}: unsupported version {raw[4]}")
    (n,) = struct.unpack("<I", raw[5:9])
    header = json.loads(raw[9:9 + n].decode())
    offset = 9 + n
    arrays = []
    for shape in header["arrays"]:
        count = int(np.prod(shape))
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays.append(a.astype(np.float64))
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after arrays")
    return header, arrays


def save_mean_warp(pbar: MeanWarp, path) -> None:
    _write_container(path, {"kind": "meanwarp", "T": pbar.T, "mode": pbar.mode.value}, [pbar.data])


def load_mean_warp(path) -> MeanWarp:
    header, (data,) = _read_container(path)
    return MeanWarp(header["T"], data, WarpMode(header["mode"]))


def save_codebook(cb: Codebook, path) -> None:
    _write_container(path, {"kind": "codebook", "seed": cb.train_seed}, [cb.centers])


def load_codebook(path) -> Codebook:
    header, (centers,) = _read_container(path)
    return Codebook(centers, train_seed=header["seed"])


def save_model(model: LinearModel, path, extra: Optional[dict] = None,
               codebook: Optional[Codebook] = None) -> None:
    header = {"kind": "linear", "bias": model.bias, "C": model.C, "meanwarp_ref": model.meanwarp_ref,
              "objective": model.objective, "extra": extra or {}}
    arrays = [model.W]
    if model.pbar is not None:
        header["pbar_mode"] = model.pbar.mode.value
        arrays.append(model.pbar.data)
    if codebook is not None:
        header["codebook_seed"] = codebook.train_seed
        arrays.append(codebook.centers)
    _write_container(path, header, arrays)


def load_model(path) -> Tuple[LinearModel, dict, Optional[Codebook]]:
    """Returns ``(model, extra, codebook)``."""
    header, arrays = _read_container(path)
    if header.get("kind") != "linear":
        raise ValueError(f"{path}: not a linear model file")
    arrays = list(arrays)
    W = arrays.pop(0)
    pbar = None
    if "pbar_mode" in header:
        data = arrays.pop(0)
        pbar = MeanWarp(data.shape[0], data, WarpMode(header["pbar_mode"]))
    cb = Codebook(arrays.pop(0), train_seed=header["codebook_seed"]) if "codebook_seed" in header else None
    model = LinearModel(W=W, bias=header["bias"], C=header["C"], pbar=pbar,
                        meanwarp_ref=header["meanwarp_ref"], objective=header["objective"])
    return model, header.get("extra", {}), cb


# -- synthetic data ----------------------------------------------------------

@dataclass
class SynthConfig:
    seed: int = 0
    D: int = 3
    n_classes: int = 2
    per_class: int = 40
    length_range: Tuple[int, int] = (20, 40)
    warp: float = 0.3
    noise: float = 0.05
    freq_range: Tuple[float, float] = (0.5, 3.0)
    mirror_spread: float = 0.0
    # continuous words
    n_sequences: int = 30
    n_distractors: int = 10
    n_decoys: int = 0
    target_class: int = 0

    def __post_init__(self):
        lo, hi = self.length_range
        if lo < 4 or hi < lo:
            raise ValueError("length range must satisfy 4 <= L_min <= L_max")
        if not 0.0 <= self.warp < 1.0:
            raise ValueError("warp strength must be in [0, 1)")
        if self.noise < 0:
            raise ValueError("noise must be nonnegative")
        if self.mirror_spread and self.n_classes != 2:
            raise ValueError("mirrored classes need exactly two classes")


def _templates(cfg: SynthConfig, rng) -> List[tuple]:
    """Per class and dimension: amplitudes, frequencies, phases of 3 sinusoids.

    With ``mirror_spread > 0`` there are exactly two classes, each the time
    mirror of the other: components ``cos(2 pi f (u - 1/2) +- phi)`` with
    ``phi`` drawn from ``mirror_spread * U(-pi, pi)``.  Both classes then
    visit the same frames and differ only in temporal order.
    """
    if cfg.mirror_spread:
        amp = rng.uniform(0.5, 1.0, size=(cfg.D, 3))
        freq = rng.uniform(*cfg.freq_range, size=(cfg.D, 3))
        phi = cfg.mirror_spread * rng.uniform(-np.pi, np.pi, size=(cfg.D, 3))
        centre = np.pi / 2 - np.pi * freq
        return [(amp, freq, centre + phi), (amp, freq, centre - phi)]
    out = []
    for _ in range(cfg.n_classes):
        amp = rng.uniform(0.5, 1.0, size=(cfg.D, 3))
        freq = rng.uniform(*cfg.freq_range, size=(cfg.D, 3))
        phase = rng.uniform(0.0, 2 * np.pi, size=(cfg.D, 3))
        out.append((amp, freq, phase))
    return out


def _evaluate_template(tpl, M: int) -> np.ndarray:
    amp, freq, phase = tpl
    u = np.linspace(0.0, 1.0, M)
    return np.einsum("dk,dkm->dm", amp, np.sin(2 * np.pi * freq[:, :, None] * u + phase[:, :, None]))


def random_causal_path(M: int, gamma: float, rng) -> Tuple[np.ndarray, np.ndarray]:
    """Random (1,1)->(M,M) path: diagonal w.p. 1-gamma, else a single-axis step."""
    i = j = 0
    pi, pj = [0], [0]
    while i < M - 1 or j < M - 1:
        if i == M - 1:
            j += 1
        elif j == M - 1:
            i += 1
        else:
            r = rng.random()
            if r < 1.0 - gamma:
                i, j = i + 1, j + 1
            elif r < 1.0 - gamma / 2:
                i += 1
            else:
                j += 1
        pi.append(i)
        pj.append(j)
    return np.array(pi), np.array(pj)


def _instance(tpl, cfg: SynthConfig, rng) -> np.ndarray:
    M = int(rng.integers(cfg.length_range[0], cfg.length_range[1] + 1))
    base = _evaluate_template(tpl, M)
    src, dst = random_causal_path(M, cfg.warp, rng)
    # each output frame is the mean of the template frames aligned to it
    A = np.zeros((M, M))
    np.add.at(A, (src, dst), 1.0)
    A /= A.sum(axis=0, keepdims=True)
    return base @ A + cfg.noise * rng.standard_normal((cfg.D, M))


def synth_isolated(cfg: SynthConfig) -> List[Sequence]:
    """Labelled, pre-segmented instances of ``n_classes`` warped templates."""
    rng = np.random.default_rng(cfg.seed)
    templates = _templates(cfg, rng)
    out = []
    for c, tpl in enumerate(templates):
        for k in range(cfg.per_class):
            out.append(Sequence(_instance(tpl, cfg, rng), id=f"c{c}_{k:04d}", label=f"class{c}"))
    return out


def synth_continuous(cfg: SynthConfig) -> Tuple[List[Sequence], List[Sequence]]:
    """Words with one target instance amid distractors, plus event-free decoys.

    The target sits after ``n_distractors // 2`` distractor instances.
    Returns ``(words, decoys)``.
    """
    if cfg.n_classes < 2 and cfg.n_distractors > 0:
        raise ValueError("distractors need at least two classes")
    rng = np.random.default_rng(cfg.seed)
    templates = _templates(cfg, rng)
    others = [c for c in range(cfg.n_classes) if c != cfg.target_class]
    words = []
    for k in range(cfg.n_sequences):
        parts = [_instance(templates[c], cfg, rng) for c in rng.choice(others, cfg.n_distractors)]
        target = _instance(templates[cfg.target_class], cfg, rng)
        before = cfg.n_distractors // 2
        start = sum(p.shape[1] for p in parts[:before]) + 1
        span = (start, start + target.shape[1] - 1)
        data = np.concatenate(parts[:before] + [target] + parts[before:], axis=1)
        words.append(Sequence(data, id=f"word_{k:04d}", label="target", event_span=span))
    decoys = []
    for k in range(cfg.n_decoys):
        parts = [_instance(templates[c], cfg, rng) for c in rng.choice(others, cfg.n_distractors + 1)]
        decoys.append(Sequence(np.concatenate(parts, axis=1), id=f"decoy_{k:04d}", label="none"))
    return words, decoys



def isolated_benchmark_config(seed: int = 0) -> SynthConfig:
    """Two time-mirrored classes of 40 sequences (warp 0.3, noise 0.05).

    The classes share their frame distribution, so only temporal order
    separates them.
    """
    return SynthConfig(seed=seed, D=8, n_classes=2, per_class=40, warp=0.3, noise=0.05,
                       freq_range=(1.0, 4.0), mirror_spread=0.05)


def continuous_benchmark_config(seed: int = 0) -> SynthConfig:
    """50 words (30 train, 20 test), each one target among 10 distractors, plus 20 decoys."""
    return SynthConfig(seed=seed, D=8, n_classes=5, n_sequences=50, n_distractors=10, n_decoys=20)
