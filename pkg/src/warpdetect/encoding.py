"""Frame encodings: raw, differential and codebook one-hot, plus BOW pooling.

The summed-area table gives the pooled encoding of any window in O(K) after
a single O(MK) pass over the sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from .seqcore import Sequence, _as_array, delta_encode

# Codebook sizes used for the three reference databases (raw, delta).
REFERENCE_CODEBOOK_SIZES = {
    "6dmg": (300, 100),
    "ck+": (136, 30),
    "uva-nemo": (1500, 500),
}


class Encoding(str, Enum):
    LINEAR = "linear"
    DELTA = "delta"
    NONLINEAR = "nonlinear"
    NONLINEAR_DELTA = "nonlinear-delta"

    @property
    def uses_delta(self) -> bool:
        return self in (Encoding.DELTA, Encoding.NONLINEAR_DELTA)

    @property
    def uses_codebook(self) -> bool:
        return self in (Encoding.NONLINEAR, Encoding.NONLINEAR_DELTA)


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray  # K x D
    train_seed: int = 0

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("codebook needs a K x D center matrix with K >= 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("codebook centers must be finite")
        object.__setattr__(self, "centers", c)

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def D(self) -> int:
        return self.centers.shape[1]


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (n, K); exact-zero distances for points that coincide with a center
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _objective(points, centers, assign):
    return float(((points - centers[assign]) ** 2).sum())


def kmeans_fit(frames, K: int, seed: int = 0, max_iter: int = 100, return_history: bool = False):
    """Lloyd's k-means from a seeded k-means++ start.

    ``frames`` is an (n, D) array (rows are frames).  Stops at an assignment
    fixpoint or after ``max_iter`` iterations.  With ``return_history`` the
    per-iteration objective trace is returned alongside the codebook.
    """
    pts = np.asarray(frames, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n_distinct = len(np.unique(pts, axis=0))
    if n_distinct < K:
        raise ValueError(f"need at least K={K} distinct frames, got {n_distinct}")
    rng = np.random.default_rng(seed)

    centers = np.empty((K, pts.shape[1]))
    centers[0] = pts[rng.integers(len(pts))]
    closest = _sq_dists(pts, centers[:1]).ravel()
    for k in range(1, K):
        total = closest.sum()
        idx = rng.choice(len(pts), p=closest / total)
        centers[k] = pts[idx]
        closest = np.minimum(closest, _sq_dists(pts, centers[k:k + 1]).ravel())

    assign = np.argmin(_sq_dists(pts, centers), axis=1)
    history = [_objective(pts, centers, assign)]
    for _ in range(max_iter):
        for k in range(K):
            members = pts[assign == k]
            if len(members):
                centers[k] = members.mean(axis=0)
            else:
                # reseed to the point worst served by its current center
                far = np.argmax(((pts - centers[assign]) ** 2).sum(axis=1))
                centers[k] = pts[far]
                assign[far] = k
        new_assign = np.argmin(_sq_dists(pts, centers), axis=1)
        history.append(_objective(pts, centers, new_assign))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    cb = Codebook(centers.copy(), train_seed=seed)
    return (cb, history) if return_history else cb


def encode_indices(X, cb: Codebook) -> np.ndarray:
    """Nearest-center index per frame (0-based); ties go to the lowest index."""
    arr = _as_array(X)
    if arr.shape[0] != cb.D:
        raise ValueError(f"dimension mismatch: frames have D={arr.shape[0]}, codebook D={cb.D}")
    return np.argmin(_sq_dists(arr.T, cb.centers), axis=1)


def encode_frames(X, cb: Codebook):
    """K x M one-hot encoding of each frame's nearest codeword."""
    idx = encode_indices(X, cb)
    onehot = np.zeros((cb.K, len(idx)))
    onehot[idx, np.arange(len(idx))] = 1.0
    if isinstance(X, Sequence):
        return X.with_data(onehot)
    return onehot


def bow(encoded) -> np.ndarray:
    """Mean of the encoded frames."""
    return _as_array(encoded).mean(axis=1)


class CumulativeTable:
    """Prefix sums of an encoded sequence; column 0 is all zeros.

    ``lookups`` counts the entries read by :meth:`bow_window`, so the O(K)
    per-window cost can be checked by counting rather than timing.
    """

    def __init__(self, encoded):
        enc = _as_array(encoded)
        K, M = enc.shape
        table = np.zeros((K, M + 1))
        np.cumsum(enc, axis=1, out=table[:, 1:])
        self.table = table
        self.lookups = 0

    @property
    def K(self) -> int:
        return self.table.shape[0]

    @property
    def M(self) -> int:
        return self.table.shape[1] - 1

    def window_sum(self, a: int, b: int) -> np.ndarray:
        if not 1 <= a <= b <= self.M:
            raise ValueError(f"window ({a}, {b}) outside 1..{self.M}")
        self.lookups += 2 * self.K
        return self.table[:, b] - self.table[:, a - 1]

    def bow_window(self, a: int, b: int) -> np.ndarray:
        return self.window_sum(a, b) / (b - a + 1)

    def window_sums(self, length: int) -> np.ndarray:
        """K x (M - length + 1) sums of every window of ``length`` frames."""
        return self.table[:, length:] - self.table[:, : self.M - length + 1]


def cumulative_table(encoded) -> CumulativeTable:
    return CumulativeTable(encoded)


def bow_window(table: CumulativeTable, a: int, b: int) -> np.ndarray:
    return table.bow_window(a, b)


class FrameEncoder:
    """Applies one of the four encodings to sequences.

    Codebook variants must be fitted (on training frames) before use.
    """

    def __init__(self, encoding, K: int = 64, seed: int = 0):
        self.encoding = Encoding(encoding)
        self.K = K
        self.seed = seed
        self.codebook: Optional[Codebook] = None

    @classmethod
    def from_codebook(cls, encoding, codebook: Optional[Codebook]) -> "FrameEncoder":
        enc = cls(encoding, K=codebook.K if codebook is not None else 64,
                  seed=codebook.train_seed if codebook is not None else 0)
        if enc.encoding.uses_codebook and codebook is None:
            raise ValueError(f"encoding {enc.encoding.value!r} needs a codebook")
        enc.codebook = codebook
        return enc

    def _pre(self, seq):
        return delta_encode(seq) if self.encoding.uses_delta else seq

    def fit(self, sequences: Iterable) -> "FrameEncoder":
        if self.encoding.uses_codebook:
            frames = np.concatenate([_as_array(self._pre(s)).T for s in sequences], axis=0)
            K = min(self.K, len(np.unique(frames, axis=0)))
            self.codebook = kmeans_fit(frames, K, seed=self.seed)
        return self

    def transform(self, seq):
        out = self._pre(seq)
        if self.encoding.uses_codebook:
            if self.codebook is None:
                raise RuntimeError("encoder must be fitted before transform")
            out = encode_frames(out, self.codebook)
        return out
