"""Continuous event detection by exhaustive sliding-window search.

For every candidate window length j the linear model is specialised to raw
windows of j frames and correlated with the sequence; the best-scoring
(start, length) over all lengths is the detection.  Scores are also
available for the BOW baseline, whose windows are pooled through a
summed-area table.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence as Seq, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from .classify import LinearModel, SpecializedModel, specialize_model
from .encoding import CumulativeTable, Encoding, FrameEncoder
from .seqcore import Sequence, _as_array
from .warprep import WarpMode, fit_mean_warp, represent

logger = logging.getLogger(__name__)

Span = Tuple[int, int]


def overlap(a: Span, b: Span) -> float:
    """|intersection| / |union| of two inclusive frame spans."""
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]) + 1)
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def span_loss(truth: Span, guess: Span) -> float:
    return 1.0 - overlap(truth, guess)


def _overlaps_for_length(truth: Span, length: int, n_starts: int) -> np.ndarray:
    starts = np.arange(1, n_starts + 1)
    ends = starts + length - 1
    inter = np.maximum(0, np.minimum(ends, truth[1]) - np.maximum(starts, truth[0]) + 1)
    union = length + (truth[1] - truth[0] + 1) - inter
    return inter / union


@dataclass(frozen=True)
class WindowGrid:
    lengths: Tuple[int, ...]
    stride: int = 1

    def __post_init__(self):
        lengths = tuple(sorted({int(v) for v in self.lengths}))
        if not lengths or lengths[0] < 1:
            raise ValueError("window lengths must be positive")
        if self.stride != 1:
            raise ValueError("only stride 1 is supported")
        object.__setattr__(self, "lengths", lengths)

    def usable(self, M: int) -> Tuple[int, ...]:
        return tuple(j for j in self.lengths if j <= M)


def candidate_window_lengths(train_event_lengths, n_candidates: int = 10) -> WindowGrid:
    """Evenly spaced quantiles (min and max included) of the training event lengths."""
    lengths = np.asarray(list(train_event_lengths), dtype=np.float64)
    if lengths.size == 0:
        raise ValueError("need at least one training event length")
    if n_candidates < 1:
        raise ValueError("n_candidates must be >= 1")
    qs = np.quantile(lengths, np.linspace(0.0, 1.0, n_candidates)) if n_candidates > 1 else [np.median(lengths)]
    return WindowGrid(tuple(int(round(q)) for q in qs))


@dataclass
class DetectionResult:
    start: int
    end: int
    score: float
    window_length_used: int
    per_window_scores: Optional[Dict[int, np.ndarray]] = field(default=None, repr=False)


class WarpScorer:
    """Scores raw windows with a linear model over the warp representation.

    Specialised models are built once per window length and cached.
    """

    def __init__(self, model: LinearModel, fft: bool = False):
        if model.pbar is None:
            raise ValueError("warp scorer needs a model trained with a mean warp")
        self.model = model
        self.fft = fft
        self._specialised: Dict[int, SpecializedModel] = {}
        self._weights = model.W
        self.evaluations = 0

    def specialised(self, length: int) -> SpecializedModel:
        if self.model.W is not self._weights:
            # weights were replaced (e.g. during training): drop stale entries
            self._specialised.clear()
            self._weights = self.model.W
        if length not in self._specialised:
            self._specialised[length] = specialize_model(self.model, length)
        return self._specialised[length]

    def prepare(self, X):
        return _as_array(X)

    def scores(self, prepared: np.ndarray, length: int) -> np.ndarray:
        m = self.specialised(length).weights
        if self.fft:
            raw = fftconvolve(prepared, m[:, ::-1], mode="valid", axes=1).sum(axis=0)
        else:
            raw = np.einsum("dsj,dj->s", sliding_window_view(prepared, length, axis=1), m)
        self.evaluations += len(raw)
        return raw + self.model.bias

    def scores_direct(self, prepared: np.ndarray, length: int) -> np.ndarray:
        """Window-by-window reference path (one dot product per start)."""
        spec = self.specialised(length)
        n = prepared.shape[1] - length + 1
        self.evaluations += n
        return np.array([spec.score_window(prepared[:, s:s + length]) for s in range(n)])

    def features(self, X, span: Span) -> np.ndarray:
        return represent(_as_array(X)[:, span[0] - 1:span[1]], self.model.pbar)


class BowScorer:
    """BOW baseline: codebook-encode frames, then pool windows through a summed-area table."""

    def __init__(self, model: LinearModel, encoder: FrameEncoder):
        if encoder.encoding is not Encoding.NONLINEAR:
            raise ValueError("BOW scoring needs the raw-frame codebook encoding")
        self.model = model
        self.encoder = encoder
        self.evaluations = 0

    def prepare(self, X) -> CumulativeTable:
        return CumulativeTable(self.encoder.transform(_as_array(X)))

    def scores(self, table: CumulativeTable, length: int) -> np.ndarray:
        pooled = table.window_sums(length) / length
        self.evaluations += pooled.shape[1]
        return self.model.W[:, 0] @ pooled + self.model.bias

    def features(self, X, span: Span) -> np.ndarray:
        return self.prepare(X).bow_window(*span)[:, None]


def detect_continuous(X, scorer, grid: WindowGrid, keep_scores: bool = False,
                      loss_truth: Optional[Span] = None) -> DetectionResult:
    """Best-scoring window over every grid length and start position.

    Ties go to the smaller start, then the smaller length.  With
    ``loss_truth`` the span loss against that truth is added to every score
    (loss-augmented inference for structured training).
    """
    if not hasattr(scorer, "prepare"):
        scorer = WarpScorer(scorer)
    M = _as_array(X).shape[1]
    lengths = grid.usable(M)
    if not lengths:
        raise ValueError(f"every candidate window length exceeds the sequence length {M}")
    prepared = scorer.prepare(X)
    best = None
    table = {} if keep_scores else None
    for j in lengths:
        s = scorer.scores(prepared, j)
        if loss_truth is not None:
            s = s + 1.0 - _overlaps_for_length(loss_truth, j, len(s))
        if table is not None:
            table[j] = s
        k = int(np.argmax(s))
        cand = (float(s[k]), k + 1, j)
        if best is None or cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1]):
            best = cand
    score, start, j = best
    return DetectionResult(start, start + j - 1, score, j, table)


def export_score_table(result: DetectionResult, path) -> None:
    """Write ``length,start,score`` rows (1-based starts)."""
    if result.per_window_scores is None:
        raise ValueError("detection was run without keep_scores")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["length", "start", "score"])
        for j in sorted(result.per_window_scores):
            for s, v in enumerate(result.per_window_scores[j], start=1):
                w.writerow([j, s, repr(float(v))])


def excise_event(seq: Sequence) -> Optional[Sequence]:
    """The sequence with its event frames removed (a decoy with no event)."""
    a, b = seq.event_span
    data = np.concatenate([seq.data[:, : a - 1], seq.data[:, b:]], axis=1)
    if data.shape[1] == 0:
        return None
    return seq.with_data(data, id=f"{seq.id}-decoy")


@dataclass
class ContinuousConfig:
    feature: str = "warp"  # "warp" (proposed) or "bow" (baseline)
    pbar: str = "learned"
    C: float = 1.0
    K: int = 300
    n_candidates: int = 10
    iterations: int = 30
    inner_passes: int = 5
    val_fraction: float = 0.2
    seed: int = 0
    threads: int = 1


@dataclass
class ContinuousModel:
    scorer: object
    grid: WindowGrid
    config: ContinuousConfig
    val_auc: float = float("nan")
    history: List[float] = field(default_factory=list)

    @property
    def model(self) -> LinearModel:
        return self.scorer.model

    def detect(self, X, keep_scores: bool = False) -> DetectionResult:
        return detect_continuous(X, self.scorer, self.grid, keep_scores=keep_scores)


def _validation_auc(scorer, grid, val: Seq) -> float:
    from .eval import continuous_eval

    seqs, truths = [], []
    for s in val:
        seqs.append(s)
        truths.append(s.event_span)
        decoy = excise_event(s)
        if decoy is not None and decoy.M >= min(grid.lengths):
            seqs.append(decoy)
            truths.append(None)
    dets = [detect_continuous(s, scorer, grid) for s in seqs]
    try:
        return continuous_eval(dets, truths).auc
    except ValueError:
        return float("nan")


def train_continuous(train: Seq, config: Optional[ContinuousConfig] = None) -> ContinuousModel:
    """Margin-rescaled structured SVM over event spans.

    Alternates loss-augmented inference (the sliding-window search with the
    span loss ``1 - overlap`` added) with averaged subgradient passes over
    the accumulated constraint set.  The iterate with the best validation
    AUC is returned; validation decoys are the held-out sequences with their
    event excised.
    """
    config = config or ContinuousConfig()
    if not train or any(s.event_span is None for s in train):
        raise ValueError("every training sequence needs an event span")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(train))
    n_val = int(round(config.val_fraction * len(train)))
    n_val = min(n_val, len(train) - 2) if n_val else 0
    val = [train[i] for i in order[:n_val]] or list(train)
    fit = [train[i] for i in order[n_val:]]

    events = [s.window(*s.event_span) for s in fit]
    grid = candidate_window_lengths([e.M for e in events], config.n_candidates)
    if config.feature == "warp":
        pbar = fit_mean_warp(events, config.pbar, threads=config.threads)
        model = LinearModel(W=np.zeros((events[0].D, pbar.T)), pbar=pbar, C=config.C,
                            meanwarp_ref=pbar.mode.value)
        scorer = WarpScorer(model)
    elif config.feature == "bow":
        enc = FrameEncoder(Encoding.NONLINEAR, K=config.K, seed=config.seed).fit(fit)
        model = LinearModel(W=np.zeros((enc.codebook.K, 1)), C=config.C)
        scorer = BowScorer(model, enc)
    else:
        raise ValueError(f"unknown feature type {config.feature!r}")

    truth_feats = [scorer.features(s, s.event_span) for s in fit]
    scale = max(float(np.linalg.norm(f)) for f in truth_feats) or 1.0
    n = len(fit)
    lam = 1.0 / (config.C * n)
    constraints: List[Dict[Span, np.ndarray]] = [dict() for _ in fit]
    w = np.zeros(model.W.size)
    w_sum = np.zeros_like(w)
    t = 0
    best_auc, best_w = -np.inf, w.copy()
    history = []
    for it in range(config.iterations):
        for i, s in enumerate(fit):
            guess = detect_continuous(s, scorer, grid, loss_truth=s.event_span)
            span = (guess.start, guess.end)
            if span != s.event_span and span not in constraints[i]:
                diff = (truth_feats[i] - scorer.features(s, span)).ravel() / scale
                constraints[i][span] = diff
        # subgradient passes over the working set
        for _ in range(config.inner_passes):
            for i in rng.permutation(n):
                t += 1
                eta = 1.0 / (lam * t)
                worst, worst_diff = 0.0, None
                for span, diff in constraints[i].items():
                    v = span_loss(fit[i].event_span, span) - float(w @ diff)
                    if v > worst:
                        worst, worst_diff = v, diff
                w *= 1.0 - eta * lam
                if worst_diff is not None:
                    w += eta * worst_diff
                w_sum += w
        model.W = (w_sum / t).reshape(model.W.shape) / scale
        auc = _validation_auc(scorer, grid, val)
        history.append(auc)
        logger.debug("iteration %d: validation AUC %.4f", it, auc)
        if auc > best_auc:
            best_auc, best_w = auc, model.W.copy()
    model.W = best_w
    return ContinuousModel(scorer=scorer, grid=grid, config=config, val_auc=best_auc, history=history)
