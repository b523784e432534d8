"""Max-margin learners.

* a linear SVM over fixed-size representations, trained by seeded
  stochastic subgradient descent (Pegasos steps ``1/(lambda t)``),
* per-window-length specialisations of a linear model, so scoring a
  length-M window costs M*D multiply-adds,
* the DTW-kernel SVM baseline with PSD projection of the Gram matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence as Seq

import numba
import numpy as np

from .dtw import dtw_cost
from .seqcore import _as_array
from .warprep import MeanWarp, projection


@dataclass
class LinearModel:
    """Weights ``W`` (D x T) and bias of ``f(Φ) = <W, Φ> + bias``.

    ``pbar`` is the mean warp the model was trained with; it is needed to
    specialise the model to raw windows of a given length.
    """

    W: np.ndarray
    bias: float = 0.0
    C: float = 1.0
    pbar: Optional[MeanWarp] = None
    meanwarp_ref: str = ""
    objective: float = float("nan")
    trajectory: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def T(self) -> int:
        return self.W.shape[1]

    def decision(self, feats) -> np.ndarray:
        F = np.asarray(feats, dtype=np.float64)
        if F.shape == self.W.shape:
            F = F[None]
        return F.reshape(len(F), -1) @ self.W.ravel() + self.bias


@dataclass
class SpecializedModel:
    """A linear model folded onto raw windows of exactly ``M`` frames."""

    M: int
    weights: np.ndarray  # D x M
    bias: float = 0.0
    multiply_adds: int = 0

    def score_window(self, window) -> float:
        X = _as_array(window)
        if X.shape != self.weights.shape:
            raise ValueError(f"window shape {X.shape} != model shape {self.weights.shape}")
        self.multiply_adds += X.size
        return float(np.dot(X.ravel(), self.weights.ravel())) + self.bias


def hinge_objective(w, b, X, y, C) -> float:
    margins = y * (X @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - margins).sum())


@numba.njit(cache=True)
def _pegasos(X, y, lam, C, order):
    n, p = X.shape
    epochs = order.shape[0]
    w = np.zeros(p)
    b = 0.0
    w_avg = np.zeros(p)
    b_avg = 0.0
    trace = np.empty(epochs)
    t = 0
    for e in range(epochs):
        for k in range(n):
            i = order[e, k]
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (np.dot(w, X[i]) + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += (eta * y[i]) * X[i]
                b += eta * y[i]
            w_avg += (w - w_avg) / t
            b_avg += (b - b_avg) / t
        hinge = 0.0
        for i in range(n):
            m = y[i] * (np.dot(w_avg, X[i]) + b_avg)
            if m < 1.0:
                hinge += 1.0 - m
        trace[e] = 0.5 * np.dot(w_avg, w_avg) + C * hinge
    return w_avg, b_avg, trace


def _check_labels(labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1/-1")
    if len(np.unique(y)) < 2:
        raise ValueError("both classes must be present to train an SVM")
    return y


def train_linear_svm(
    feats,
    labels,
    C: float = 1.0,
    seed: int = 0,
    epochs: int = 200,
    restarts: int = 3,
    pbar: Optional[MeanWarp] = None,
    normalize: bool = True,
) -> LinearModel:
    """Minimise ``0.5||W||^2 + C * sum hinge(y (<W, Φ> + b))``.

    ``feats`` is ``(n, p)`` or a stack of ``(n, D, T)`` representations.

    Stochastic subgradient descent with step ``1/(lambda t)``,
    ``lambda = 1/(C n)``, returning the uniform average of the iterates.
    ``restarts`` independently seeded sample orders are run and the lowest
    objective kept.

    With ``normalize`` the features are divided by their largest norm before
    solving (so C acts on unit-scale data) and the returned weights are
    rescaled to apply to raw features; ``objective`` and ``trajectory`` then
    refer to the normalised problem.
    """
    F = np.asarray(feats, dtype=np.float64)
    if F.ndim < 2:
        raise ValueError("features must be (n, p) or (n, D, T)")
    shape = F.shape[1:]
    X = np.ascontiguousarray(F.reshape(len(F), -1))
    y = _check_labels(labels)
    scale = 1.0
    if normalize:
        scale = float(np.linalg.norm(X, axis=1).max()) or 1.0
        X = X / scale
    n = len(y)
    lam = 1.0 / (C * n)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        order = np.stack([rng.permutation(n) for _ in range(epochs)])
        w, b, trace = _pegasos(X, y, lam, C, order)
        obj = hinge_objective(w, b, X, y, C)
        if best is None or obj < best[2]:
            best = (w, b, obj, trace)
    w, b, obj, trace = best
    return LinearModel(
        W=(w / scale).reshape(shape),
        bias=float(b),
        C=C,
        pbar=pbar,
        meanwarp_ref=pbar.mode.value if pbar is not None else "",
        objective=obj,
        trajectory=trace,
    )


def specialize_model(model: LinearModel, M: int, pbar: Optional[MeanWarp] = None) -> SpecializedModel:
    """Fold ``interp_matrix(M, T) @ P̄`` into the weights.

    ``<X, m_M> == <X @ A, W>`` for every D x M window X, with
    ``A = interp_matrix(M, T) @ P̄`` and ``m_M = W @ A.T``.
    """
    pbar = pbar or model.pbar
    if pbar is None:
        raise ValueError("model carries no mean warp; pass pbar explicitly")
    if M < 1:
        raise ValueError("window length must be positive")
    A = projection(M, pbar)
    return SpecializedModel(M=M, weights=model.W @ A.T, bias=model.bias)


def psd_project(gram) -> np.ndarray:
    """Frobenius-nearest symmetric PSD matrix (negative eigenvalues clipped)."""
    G = np.asarray(gram, dtype=np.float64)
    G = (G + G.T) / 2.0
    vals, vecs = np.linalg.eigh(G)
    if vals.min() >= 0:
        return G
    out = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return (out + out.T) / 2.0


def dtw_distance_matrix(seqs: Seq, others: Optional[Seq] = None) -> np.ndarray:
    A = [_as_array(s) for s in seqs]
    if others is None:
        n = len(A)
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                d = 0.5 * (dtw_cost(A[i], A[j]) + dtw_cost(A[j], A[i]))
                out[i, j] = out[j, i] = d
        return out
    B = [_as_array(s) for s in others]
    return np.array([[0.5 * (dtw_cost(a, b) + dtw_cost(b, a)) for b in B] for a in A])


def dtw_kernel_gram(seqs: Seq, t: float, project: bool = True) -> np.ndarray:
    """``exp(-t * DTW)`` over all pairs, projected onto the PSD cone."""
    if t <= 0:
        raise ValueError("kernel bandwidth t must be positive")
    G = np.exp(-t * dtw_distance_matrix(seqs))
    return psd_project(G) if project else G


@dataclass
class KernelModel:
    support: List[np.ndarray]
    alpha: np.ndarray  # label-signed weights
    bias: float
    t: float
    C: float = 1.0
    support_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def L(self) -> int:
        return len(self.alpha)

    def decision_from_gram(self, gram_rows) -> np.ndarray:
        """Decision values from kernel rows against the full training set."""
        rows = np.atleast_2d(np.asarray(gram_rows, dtype=np.float64))
        return rows[:, self.support_index] @ self.alpha + self.bias


@numba.njit(cache=True)
def _dual_coordinate_ascent(Q, C, order, tol):
    n = Q.shape[0]
    a = np.zeros(n)
    grad = np.ones(n)  # 1 - (Q a)_i
    for e in range(order.shape[0]):
        max_step = 0.0
        for k in range(n):
            i = order[e, k]
            if Q[i, i] <= 0:
                continue
            new = a[i] + grad[i] / Q[i, i]
            if new < 0.0:
                new = 0.0
            elif new > C:
                new = C
            step = new - a[i]
            if step != 0.0:
                a[i] = new
                for j in range(n):
                    grad[j] -= step * Q[j, i]
                if abs(step) > max_step:
                    max_step = abs(step)
        if max_step < tol:
            break
    return a


def train_kernel_svm(gram, labels, C: float = 1.0, seqs: Optional[Seq] = None, t: float = 1.0,
                     seed: int = 0, max_epochs: int = 1000, tol: float = 1e-10) -> KernelModel:
    """Box-constrained dual SVM by seeded coordinate ascent.

    The bias is absorbed by adding 1 to the kernel, which keeps the dual free
    of the equality constraint.  Only sequences with nonzero weight are kept.
    """
    G = np.asarray(gram, dtype=np.float64)
    if not np.allclose(G, G.T, atol=1e-12) or np.linalg.eigvalsh((G + G.T) / 2).min() < -1e-8:
        raise ValueError("Gram matrix is not symmetric PSD; apply psd_project first")
    y = _check_labels(labels)
    n = len(y)
    Q = (G + 1.0) * np.outer(y, y)
    rng = np.random.default_rng(seed)
    order = np.stack([rng.permutation(n) for _ in range(max_epochs)])
    a = _dual_coordinate_ascent(Q, float(C), order, tol)
    keep = np.flatnonzero(a > 0)
    coef = a * y
    support = [_as_array(seqs[i]) for i in keep] if seqs is not None else []
    return KernelModel(support=support, alpha=coef[keep], bias=float(coef.sum()), t=t, C=C,
                       support_index=keep)


def kernel_score(model: KernelModel, X) -> float:
    """Score a new sequence: one DTW per support sequence."""
    x = _as_array(X)
    if not model.support:
        return model.bias
    d = np.array([0.5 * (dtw_cost(x, s) + dtw_cost(s, x)) for s in model.support])
    return float(np.exp(-model.t * d) @ model.alpha) + model.bias
