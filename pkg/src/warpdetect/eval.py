"""Metrics, cross-validation folds and the encoding x mean-warp ablation grid."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence as Seq

import numpy as np

from .classify import dtw_distance_matrix, psd_project, train_kernel_svm, train_linear_svm
from .detect import DetectionResult, overlap
from .encoding import Encoding, FrameEncoder
from .warprep import WarpMode, fit_mean_warp, represent

logger = logging.getLogger(__name__)

DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
DEFAULT_T_GRID = (1e-4, 1e-3, 1e-2, 1e-1)


def _binary(labels) -> np.ndarray:
    y = np.asarray(labels)
    return (y > 0).astype(int)


def roc_curve(scores, labels):
    """Empirical ROC with one point per distinct score (ties cross together).

    Returns ``(fpr, tpr, thresholds)``, starting at (0, 0).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    n_pos, n_neg = int(y.sum()), int(len(y) - y.sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each block of tied scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    return fpr, tpr, np.r_[np.inf, s[ends]]


def roc_auc(scores, labels) -> float:
    """Trapezoidal area under the empirical ROC."""
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def max_f1(scores, labels) -> float:
    """Best F1 over every threshold ``score >= thr``."""
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("max F1 needs at least one positive")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[ends]
    predicted = ends + 1
    f1 = 2.0 * tp / (predicted + n_pos)
    return float(f1.max())


def accuracy(scores, labels, threshold: float = 0.0) -> float:
    y = _binary(labels)
    return float(np.mean((np.asarray(scores) > threshold).astype(int) == y))


@dataclass
class Metrics:
    auc: float
    max_f1: float
    accuracy: float = float("nan")
    mean_overlap: float = float("nan")
    fpr: np.ndarray = field(default=None, repr=False)
    tpr: np.ndarray = field(default=None, repr=False)
    thresholds: np.ndarray = field(default=None, repr=False)
    per_class: Dict[str, dict] = field(default_factory=dict, repr=False)


def binary_metrics(scores, labels) -> Metrics:
    fpr, tpr, thr = roc_curve(scores, labels)
    return Metrics(
        auc=roc_auc(scores, labels),
        max_f1=max_f1(scores, labels),
        accuracy=accuracy(scores, labels),
        fpr=fpr,
        tpr=tpr,
        thresholds=thr,
    )


@dataclass
class FoldPlan:
    k: int
    seed: int
    train: List[List[str]]
    test: List[List[str]]


def make_folds(ids: Seq[str], labels: Optional[Seq] = None, k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified k-fold split; fold sizes differ by at most one.

    Items are shuffled within each class, the classes concatenated, and
    assigned round-robin.  ``k == 1`` uses every item for both train and test.
    """
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ValueError("sequence ids must be unique")
    if k == 1:
        return FoldPlan(1, seed, [list(ids)], [list(ids)])
    if not 2 <= k <= len(ids):
        raise ValueError(f"need 2 <= k <= {len(ids)}, got {k}")
    labels = list(labels) if labels is not None else [0] * len(ids)
    rng = np.random.default_rng(seed)
    ordered = []
    for cls in sorted(set(map(str, labels))):
        members = [i for i, l in zip(ids, labels) if str(l) == cls]
        ordered.extend(members[p] for p in rng.permutation(len(members)))
    test = [ordered[f::k] for f in range(k)]
    train = [[i for i in ids if i not in held] for held in map(set, test)]
    return FoldPlan(k, seed, train, test)


@dataclass
class AblationConfig:
    encodings: tuple = tuple(e.value for e in Encoding)
    modes: tuple = (WarpMode.LEARNED.value, WarpMode.EYE.value, WarpMode.HIST.value)
    folds: int = 5
    seed: int = 0
    K: int = 32
    C_grid: tuple = DEFAULT_C_GRID
    inner_folds: int = 3
    T: Optional[int] = None
    epochs: int = 200
    threads: int = 1


def _select_C(feats, y, config: AblationConfig, seed: int) -> float:
    if len(config.C_grid) == 1:
        return config.C_grid[0]
    ids = [str(i) for i in range(len(y))]
    plan = make_folds(ids, y, k=config.inner_folds, seed=seed)
    best_C, best_key = config.C_grid[0], (-np.inf, -np.inf)
    for C in config.C_grid:
        aucs, accs = [], []
        for tr, te in zip(plan.train, plan.test):
            tr_i, te_i = [int(i) for i in tr], [int(i) for i in te]
            model = train_linear_svm(feats[tr_i], y[tr_i], C=C, seed=seed, epochs=config.epochs, restarts=1)
            scores = model.decision(feats[te_i])
            aucs.append(roc_auc(scores, y[te_i]))
            accs.append(accuracy(scores, y[te_i]))
        # AUC first; accuracy separates grid points whose rankings tie
        key = (float(np.mean(aucs)), float(np.mean(accs)))
        if key > best_key:
            best_C, best_key = C, key
    return best_C


def _signed_labels(seqs, positive) -> np.ndarray:
    return np.array([1.0 if str(s.label) == str(positive) else -1.0 for s in seqs])


def train_isolated(train, encoding, mode, positive, config: AblationConfig, seed: int = 0):
    """Fit the encoder, mean warp and SVM for one-vs-rest class ``positive``.

    Returns ``(encoder, model)``; C is chosen from ``config.C_grid`` by inner CV.
    """
    enc = FrameEncoder(encoding, K=config.K, seed=seed).fit(train)
    tr = [enc.transform(s) for s in train]
    y = _signed_labels(train, positive)
    positives = [s for s, l in zip(tr, y) if l > 0]
    if not positives:
        raise ValueError(f"no training sequences of class {positive!r}")
    T = config.T or max(s.M for s in positives)
    pbar = fit_mean_warp(positives, mode, T=T, threads=config.threads)
    F = np.stack([represent(s, pbar) for s in tr])
    C = _select_C(F, y, config, seed)
    model = train_linear_svm(F, y, C=C, seed=seed, epochs=config.epochs, pbar=pbar)
    return enc, model


def score_isolated(encoder: FrameEncoder, model, seqs) -> np.ndarray:
    return model.decision(np.stack([represent(encoder.transform(s), model.pbar) for s in seqs]))


def evaluate_cell(train, test, encoding, mode, positive, config: AblationConfig, seed: int = 0) -> dict:
    """Train on ``train`` (one-vs-rest for class ``positive``) and score ``test``."""
    enc, model = train_isolated(train, encoding, mode, positive, config, seed)
    scores = score_isolated(enc, model, test)
    y_te = _signed_labels(test, positive)
    out = {"C": model.C, "scores": scores, "labels": y_te}
    if len(np.unique(y_te)) == 2:
        out.update(auc=roc_auc(scores, y_te), f1=max_f1(scores, y_te), accuracy=accuracy(scores, y_te))
    else:
        out.update(auc=float("nan"), f1=float("nan"), accuracy=accuracy(scores, y_te))
    return out


def run_ablation(dataset: Seq, config: Optional[AblationConfig] = None) -> List[dict]:
    """Cross-validated metrics for every (encoding, mean-warp mode) cell.

    Each cell reports the mean over folds and one-vs-rest classes of test
    accuracy (threshold 0), ROC AUC and max F1.  With two classes only the
    first class is treated as positive.
    """
    config = config or AblationConfig()
    byid = {s.id: s for s in dataset}
    labels = [s.label for s in dataset]
    classes = sorted({str(l) for l in labels})
    if len(classes) < 2:
        raise ValueError("ablation needs at least two classes")
    positives = classes[:1] if len(classes) == 2 else classes
    plan = make_folds([s.id for s in dataset], labels, k=config.folds, seed=config.seed)
    rows = []
    for encoding in config.encodings:
        for mode in config.modes:
            t0 = time.perf_counter()
            cells = []
            for f, (tr, te) in enumerate(zip(plan.train, plan.test)):
                train = [byid[i] for i in tr]
                test = [byid[i] for i in te]
                for cls in positives:
                    cells.append(evaluate_cell(train, test, encoding, mode, cls, config, seed=config.seed + f))
            rows.append({
                "encoding": str(Encoding(encoding).value),
                "pbar": str(WarpMode(mode).value),
                "accuracy": float(np.nanmean([c["accuracy"] for c in cells])),
                "auc": float(np.nanmean([c["auc"] for c in cells])),
                "f1": float(np.nanmean([c["f1"] for c in cells])),
                "seconds": time.perf_counter() - t0,
            })
            logger.info("%s/%s: auc=%.4f", encoding, mode, rows[-1]["auc"])
    return rows


def evaluate_dtw_kernel(dataset: Seq, positive=None, folds: int = 5, C_grid=DEFAULT_C_GRID,
                        t_grid=DEFAULT_T_GRID, inner_folds: int = 3, seed: int = 0) -> dict:
    """Cross-validated exp(-t DTW) kernel SVM baseline for one class.

    DTW distances are computed once; (t, C) is chosen per outer fold by
    inner-fold AUC with accuracy as tie-break.
    """
    seqs = list(dataset)
    classes = sorted({str(s.label) for s in seqs})
    if len(classes) < 2:
        raise ValueError("kernel evaluation needs at least two classes")
    positive = classes[0] if positive is None else str(positive)
    y = _signed_labels(seqs, positive)
    dist = dtw_distance_matrix(seqs)
    ids = [str(i) for i in range(len(seqs))]

    def fit_score(tr, te, t, C):
        gram = psd_project(np.exp(-t * dist[np.ix_(tr, tr)]))
        model = train_kernel_svm(gram, y[tr], C=C, t=t, seed=seed)
        return model.decision_from_gram(np.exp(-t * dist[np.ix_(te, tr)]))

    plan = make_folds(ids, y, k=folds, seed=seed)
    scores = np.zeros(len(seqs))
    chosen = []
    for tr, te in zip(plan.train, plan.test):
        tr, te = np.array(tr, dtype=int), np.array(te, dtype=int)
        inner = make_folds([str(i) for i in tr], y[tr], k=inner_folds, seed=seed)
        best, best_key = (t_grid[0], C_grid[0]), (-np.inf, -np.inf)
        for t in t_grid:
            for C in C_grid:
                aucs, accs = [], []
                for itr, ite in zip(inner.train, inner.test):
                    itr, ite = np.array(itr, dtype=int), np.array(ite, dtype=int)
                    s = fit_score(itr, ite, t, C)
                    aucs.append(roc_auc(s, y[ite]))
                    accs.append(accuracy(s, y[ite]))
                key = (float(np.mean(aucs)), float(np.mean(accs)))
                if key > best_key:
                    best, best_key = (t, C), key
        chosen.append(best)
        scores[te] = fit_score(tr, te, *best)
    m = binary_metrics(scores, y)
    return {"positive": positive, "auc": m.auc, "f1": m.max_f1, "accuracy": m.accuracy,
            "chosen": chosen, "scores": scores, "labels": y}


def continuous_eval(detections: Seq[DetectionResult], truths: Seq) -> Metrics:
    """Sequence-level metrics for continuous detection.

    A sequence is a positive when its detection overlaps the true span by at
    least one half; sequences without an event (``truth is None``) are
    negatives.  The detection score ranks the sequences.
    """
    if len(detections) != len(truths):
        raise ValueError(f"{len(detections)} detections for {len(truths)} truths")
    scores, labels, overlaps = [], [], []
    for det, truth in zip(detections, truths):
        scores.append(det.score)
        if truth is None:
            labels.append(-1)
            continue
        ov = overlap((det.start, det.end), tuple(truth))
        overlaps.append(ov)
        labels.append(1 if ov >= 0.5 else -1)
    m = binary_metrics(scores, labels)
    m.mean_overlap = float(np.mean(overlaps)) if overlaps else float("nan")
    return m


def config_dict(config) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()}
