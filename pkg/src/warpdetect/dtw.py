"""Dynamic time warping under the three causal moves (1,0), (0,1), (1,1).

Paths are returned 1-based.  Backtrace ties prefer the diagonal move, then
(1,0) (advance X only), then (0,1) (advance Y only).
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .seqcore import _as_array

BRUTEFORCE_MAX_CELLS = 64


@dataclass(frozen=True)
class WarpPath:
    px: np.ndarray
    py: np.ndarray
    cost: float

    @property
    def T(self) -> int:
        return len(self.px)

    def steps(self) -> np.ndarray:
        return np.stack([np.diff(self.px), np.diff(self.py)], axis=1)


def frame_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance between every frame of X and of Y, shape (M, N)."""
    return ((X[:, :, None] - Y[:, None, :]) ** 2).sum(axis=0)


@numba.njit(cache=True, nogil=True)
def _accumulate(local):
    M, N = local.shape
    acc = np.empty((M, N))
    acc[0, 0] = local[0, 0]
    for j in range(1, N):
        acc[0, j] = acc[0, j - 1] + local[0, j]
    for i in range(1, M):
        acc[i, 0] = acc[i - 1, 0] + local[i, 0]
        for j in range(1, N):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = local[i, j] + best
    return acc


@numba.njit(cache=True, nogil=True)
def _backtrace(acc):
    M, N = acc.shape
    i, j = M - 1, N - 1
    px = np.empty(M + N - 1, dtype=np.int64)
    py = np.empty(M + N - 1, dtype=np.int64)
    k = 0
    px[0] = i
    py[0] = j
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            d = acc[i - 1, j - 1]
            u = acc[i - 1, j]
            left = acc[i, j - 1]
            if d <= u and d <= left:
                i -= 1
                j -= 1
            elif u <= left:
                i -= 1
            else:
                j -= 1
        k += 1
        px[k] = i
        py[k] = j
    return px[: k + 1][::-1].copy(), py[: k + 1][::-1].copy()


def dtw_align(X, Y) -> WarpPath:
    """Minimum-cost causal alignment of X (D x M) and Y (D x N).

    O(MND) time, O(MN) memory.  ``cost`` is re-summed along the returned path
    in path order, so it matches a fresh evaluation of the alignment.
    """
    X, Y = _as_array(X), _as_array(Y)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[0]} vs {Y.shape[0]}")
    local = frame_distances(X, Y)
    acc = _accumulate(local)
    px, py = _backtrace(acc)
    cost = 0.0
    for v in local[px, py]:
        cost += v
    return WarpPath(px + 1, py + 1, float(cost))


def dtw_cost(X, Y) -> float:
    """DTW cost only (no backtrace)."""
    X, Y = _as_array(X), _as_array(Y)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[0]} vs {Y.shape[0]}")
    return float(_accumulate(frame_distances(X, Y))[-1, -1])


def warp_matrices(path: WarpPath, M: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Binary selection matrices (M x T, N x T) replaying ``path``.

    ``X @ Px`` lists X's frames in path order, so
    ``||X @ Px - Y @ Py||_F^2`` is the path cost.
    """
    px, py = np.asarray(path.px), np.asarray(path.py)
    if px[0] != 1 or py[0] != 1 or px[-1] != M or py[-1] != N:
        raise ValueError("path does not span (1,1) -> (M,N)")
    T = len(px)
    cols = np.arange(T)
    Px = np.zeros((M, T))
    Py = np.zeros((N, T))
    Px[px - 1, cols] = 1.0
    Py[py - 1, cols] = 1.0
    return Px, Py


def is_valid_path(px, py, M: int, N: int) -> bool:
    px, py = np.asarray(px), np.asarray(py)
    if len(px) != len(py) or len(px) == 0 or len(px) > M + N - 1:
        return False
    if px[0] != 1 or py[0] != 1 or px[-1] != M or py[-1] != N:
        return False
    steps = {(int(a), int(b)) for a, b in zip(np.diff(px), np.diff(py))}
    return steps <= {(1, 0), (0, 1), (1, 1)}


def dtw_bruteforce(X, Y) -> float:
    """Exhaustive minimum over every causal path; a test oracle for :func:`dtw_align`."""
    X, Y = _as_array(X), _as_array(Y)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"dimension mismatch: {X.shape[0]} vs {Y.shape[0]}")
    M, N = X.shape[1], Y.shape[1]
    if M * N > BRUTEFORCE_MAX_CELLS:
        raise ValueError(f"brute force limited to M*N <= {BRUTEFORCE_MAX_CELLS}, got {M * N}")

    def dist(i, j):
        d = X[:, i] - Y[:, j]
        return float(d @ d)

    best = np.inf
    # explicit stack of (i, j, cost so far); every leaf is a complete path
    stack = [(0, 0, dist(0, 0))]
    while stack:
        i, j, c = stack.pop()
        if i == M - 1 and j == N - 1:
            best = min(best, c)
            continue
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            a, b = i + di, j + dj
            if a < M and b < N:
                stack.append((a, b, c + dist(a, b)))
    return best
