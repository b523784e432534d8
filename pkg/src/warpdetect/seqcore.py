"""Sequence container and linear resampling.

Frame indices exposed to callers (event spans, warp paths) are 1-based;
arrays are stored 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Sequence:
    """A D x M matrix of per-frame feature vectors.

    Column ``m`` of ``data`` is the frame vector x_m.  ``event_span`` is an
    inclusive, 1-based ``(start, end)`` pair marking the ground-truth event in
    a continuous sequence.
    """

    data: np.ndarray
    id: str = ""
    label: Optional[str] = None
    event_span: Optional[Tuple[int, int]] = None
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"sequence data must be a non-empty D x M matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"sequence {self.id!r} has non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.event_span is not None:
            start, end = (int(v) for v in self.event_span)
            if not 1 <= start <= end <= data.shape[1]:
                raise ValueError(
                    f"event span ({start}, {end}) outside 1..{data.shape[1]} for sequence {self.id!r}"
                )
            object.__setattr__(self, "event_span", (start, end))

    @property
    def D(self) -> int:
        return self.data.shape[0]

    @property
    def M(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray, **changes) -> "Sequence":
        """Copy of this sequence carrying new frame data (span dropped unless given)."""
        kw = dict(id=self.id, label=self.label, event_span=None, meta=dict(self.meta))
        kw.update(changes)
        return Sequence(data, **kw)

    def window(self, start: int, end: int) -> "Sequence":
        """Frames ``start..end`` inclusive (1-based)."""
        if not 1 <= start <= end <= self.M:
            raise ValueError(f"window ({start}, {end}) outside 1..{self.M}")
        return self.with_data(self.data[:, start - 1:end], id=f"{self.id}[{start}:{end}]")


def _as_array(X) -> np.ndarray:
    if isinstance(X, Sequence):
        return X.data
    arr = np.asarray(X, dtype=np.float64)
    return arr[None, :] if arr.ndim == 1 else arr


def interp_matrix(M: int, T: int) -> np.ndarray:
    """Linear interpolation matrix of shape (M, T).

    ``X @ interp_matrix(M, T)`` stretches (or squeezes) a length-M sequence to
    T frames.  Target column t samples source position
    ``s_t = 1 + (t - 1)(M - 1)/(T - 1)`` and splits its unit mass between the
    two neighbouring source rows.
    """
    M, T = int(M), int(T)
    if M < 1 or T < 1:
        raise ValueError(f"interp_matrix needs positive sizes, got M={M}, T={T}")
    P = np.zeros((M, T))
    if M == 1 or T == 1:
        # single source frame, or a single target sampling s_1 = 1
        P[0, :] = 1.0
        return P
    # 0-based source position of each target column
    pos = np.arange(T) * (M - 1) / (T - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, M - 1)
    frac = pos - lo
    cols = np.arange(T)
    P[lo, cols] += 1.0 - frac
    P[hi, cols] += frac
    return P


def resample(X, T: int):
    """Stretch ``X`` (D x M) to T frames by linear interpolation.

    Returns a :class:`Sequence` when given one, else an array.
    """
    arr = _as_array(X)
    out = arr @ interp_matrix(arr.shape[1], T)
    if isinstance(X, Sequence):
        return X.with_data(out)
    return out


def delta_encode(X):
    """First difference along time: column n becomes x_{n+1} - x_n."""
    arr = _as_array(X)
    if arr.shape[1] < 2:
        raise ValueError("sequence too short for delta")
    out = np.diff(arr, axis=1)
    if isinstance(X, Sequence):
        return X.with_data(out)
    return out
