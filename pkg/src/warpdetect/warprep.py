"""Learned alignment-uncertainty representation.

A set of T x T deformation matrices is learned from DTW alignments between
every ordered pair of positive training sequences.  Their mean ``P̄`` turns
any sequence X (D x M) into the fixed-size representation
``X @ interp_matrix(M, T) @ P̄`` (D x T).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence as Seq, Tuple

import numpy as np

from .dtw import dtw_align, warp_matrices
from .seqcore import _as_array, interp_matrix

logger = logging.getLogger(__name__)


class WarpMode(str, Enum):
    LEARNED = "learned"
    EYE = "eye"
    HIST = "hist"


@dataclass
class WarpSet:
    T: int
    members: List[np.ndarray] = field(default_factory=list)
    source: List[Tuple[str, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class MeanWarp:
    T: int
    data: np.ndarray
    mode: WarpMode = WarpMode.LEARNED

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.T, self.T):
            raise ValueError(f"mean warp must be {self.T}x{self.T}, got {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValueError("mean warp entries must be finite and nonnegative")
        object.__setattr__(self, "mode", WarpMode(self.mode))
        object.__setattr__(self, "data", data)


def resample_warp(P: np.ndarray, T: int) -> np.ndarray:
    """Map an M_l x T_l warping matrix onto a common T x T grid.

    Rows are spread with the transposed interpolation matrix (so source frame
    i lands around its stretched position), columns renormalised to unit sum,
    then the path axis is resampled with ``interp_matrix(T_l, T)``.
    """
    M_l, T_l = P.shape
    G = interp_matrix(M_l, T).T @ P
    G /= G.sum(axis=0, keepdims=True)
    return G @ interp_matrix(T_l, T)


def _align_member(A, B, T):
    path = dtw_align(A, B)
    Px, _ = warp_matrices(path, A.shape[1], B.shape[1])
    return resample_warp(Px, T)


def learn_warp_set(positives: Seq, T: Optional[int] = None, threads: int = 1) -> WarpSet:
    """Collect resampled warps from DTW over every ordered pair of positives.

    For n positives this runs n(n-1) alignments.  ``T`` defaults to the
    longest positive and may not be smaller than it.
    """
    arrays = [_as_array(p) for p in positives]
    ids = [getattr(p, "id", str(k)) or str(k) for k, p in enumerate(positives)]
    if len(arrays) < 2:
        raise ValueError("need at least 2 positive sequences to learn a warp set")
    longest = max(a.shape[1] for a in arrays)
    if T is None:
        T = longest
    if T < longest:
        raise ValueError(f"T={T} is shorter than the longest positive ({longest})")
    pairs = [(a, b) for a in range(len(arrays)) for b in range(len(arrays)) if a != b]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            members = list(pool.map(lambda ab: _align_member(arrays[ab[0]], arrays[ab[1]], T), pairs))
    else:
        members = [_align_member(arrays[a], arrays[b], T) for a, b in pairs]
    return WarpSet(T=T, members=members, source=[(ids[a], ids[b]) for a, b in pairs])


def mean_warp(G: WarpSet) -> MeanWarp:
    if not G.members:
        raise ValueError("cannot average an empty warp set")
    avg = np.mean(np.stack(G.members), axis=0)
    avg /= avg.sum(axis=0, keepdims=True)
    return MeanWarp(G.T, avg, WarpMode.LEARNED)


def fixed_warp(T: int, mode) -> MeanWarp:
    """The identity ("eye") or uniform-average ("hist") baseline warp."""
    mode = WarpMode(mode)
    if mode is WarpMode.EYE:
        return MeanWarp(T, np.eye(T), mode)
    if mode is WarpMode.HIST:
        return MeanWarp(T, np.full((T, T), 1.0 / T), mode)
    raise ValueError("fixed_warp only builds 'eye' or 'hist'")


def fit_mean_warp(positives: Seq, mode, T: Optional[int] = None, threads: int = 1) -> MeanWarp:
    """Build the P̄ for ``mode``; learned mode falls back to identity with a single positive."""
    mode = WarpMode(mode)
    if T is None:
        T = max(_as_array(p).shape[1] for p in positives)
    if mode is not WarpMode.LEARNED:
        return fixed_warp(T, mode)
    if len(positives) < 2:
        logger.warning("only %d positive sequence(s); using identity warp", len(positives))
        return fixed_warp(T, WarpMode.EYE)
    return mean_warp(learn_warp_set(positives, T, threads=threads))


def projection(M: int, pbar: MeanWarp) -> np.ndarray:
    """The M x T operator ``interp_matrix(M, T) @ P̄``."""
    return interp_matrix(M, pbar.T) @ pbar.data


def represent(X, pbar: MeanWarp) -> np.ndarray:
    """Fixed-size D x T representation of X."""
    arr = _as_array(X)
    return arr @ projection(arr.shape[1], pbar)
