"""Feature assembly: PCA score blocks plus velocity and acceleration.

A sample's feature row is the frame-major flattening of its score
matrix, followed by per-frame velocity (first differences) and
acceleration (second differences) blocks. Velocity has an alternative
literal form (sum of consecutive frames) kept behind a flag for
comparison runs; it is not the default.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError


@dataclass(frozen=True)
class FeatureLayout:
    """Column bookkeeping for an assembled feature matrix."""

    n_frames: int
    n_components: int
    has_velocity: bool = True
    has_acceleration: bool = True

    def __post_init__(self):
        if self.n_frames < 3:
            raise ValueError(f"need at least 3 frames, got {self.n_frames}")
        if self.n_components < 1:
            raise ValueError(f"need at least 1 component, got {self.n_components}")
        if self.has_acceleration and not self.has_velocity:
            raise ValueError("acceleration requires velocity")

    @property
    def width(self) -> int:
        t, k = self.n_frames, self.n_components
        w = t * k
        if self.has_velocity:
            w += (t - 1) * k
        if self.has_acceleration:
            w += (t - 2) * k
        return w

    @property
    def velocity_offset(self) -> int:
        return self.n_frames * self.n_components

    @property
    def acceleration_offset(self) -> int:
        return self.velocity_offset + (self.n_frames - 1) * self.n_components

    def column_names(self) -> list[str]:
        k = self.n_components
        names = [f"f{t}_pc{j}" for t in range(self.n_frames) for j in range(k)]
        if self.has_velocity:
            names += [f"v{t}_pc{j}" for t in range(self.n_frames - 1) for j in range(k)]
        if self.has_acceleration:
            names += [f"a{t}_pc{j}" for t in range(self.n_frames - 2) for j in range(k)]
        return names


@dataclass(frozen=True)
class FeatureMatrix:
    """Immutable (n_samples, width) matrix with its layout."""

    values: np.ndarray
    layout: FeatureLayout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        if values.shape[1] != self.layout.width:
            raise ValueError(
                f"values have {values.shape[1]} columns, layout expects "
                f"{self.layout.width}"
            )
        values = values.copy() if values.flags.writeable else values
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window grid: length L, step between starts."""

    length: int = 40
    stride: int = 1

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"window length must be >= 1, got {self.length}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")


def velocity(scores: np.ndarray, literal_sum: bool = False) -> np.ndarray:
    """Per-frame velocity of a (T, k) score matrix; (T-1, k).

    Default is the first difference. ``literal_sum`` switches to the
    additive form (sum of consecutive frames) for comparison runs.
    """
    z = np.asarray(scores, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ValueError(f"scores must be (T>=2, k), got shape {z.shape}")
    if literal_sum:
        return z[1:] + z[:-1]
    return z[1:] - z[:-1]


def acceleration(vel: np.ndarray) -> np.ndarray:
    """Difference of consecutive velocity entries; (T-2, k)."""
    v = np.asarray(vel, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 2:
        raise ValueError(f"velocity must be (T-1>=2, k), got shape {v.shape}")
    return v[1:] - v[:-1]


def assemble(
    scores: np.ndarray,
    include_velocity: bool = True,
    include_acceleration: bool = True,
    literal_sum: bool = False,
) -> FeatureMatrix:
    """Flatten (n, T, k) per-sample scores into feature rows.

    Blocks are frame-major: all components of frame 0, then frame 1,
    and so on; velocity and acceleration blocks follow the scores.
    """
    z = np.asarray(scores, dtype=np.float64)
    if z.ndim != 3:
        raise ValueError(f"scores must be (n, T, k), got shape {z.shape}")
    n, t, k = z.shape
    layout = FeatureLayout(t, k, include_velocity, include_acceleration)
    blocks = [z.reshape(n, t * k)]
    if include_velocity:
        vel = np.stack([velocity(z[i], literal_sum) for i in range(n)])
        blocks.append(vel.reshape(n, (t - 1) * k))
        if include_acceleration:
            acc = np.stack([acceleration(vel[i]) for i in range(n)])
            blocks.append(acc.reshape(n, (t - 2) * k))
    return FeatureMatrix(np.hstack(blocks), layout)


def window_slices(n_frames: int, spec: WindowSpec) -> list[tuple[int, int]]:
    """All (start, end) inclusive windows of the grid; end = start+L-1.

    Yields floor((T - L) / stride) + 1 windows; requires L <= T.
    """
    if spec.length > n_frames:
        raise ValueError(
            f"window length {spec.length} exceeds {n_frames} frames"
        )
    return [
        (s, s + spec.length - 1)
        for s in range(0, n_frames - spec.length + 1, spec.stride)
    ]


def slice_features(fm: FeatureMatrix, window: tuple[int, int]) -> FeatureMatrix:
    """Restrict a full feature matrix to one frame window.

    Keeps score frames start..end, velocity frames start..end-1 and
    acceleration frames start..end-2, so the result equals assembling
    features from the windowed scores directly.
    """
    start, end = window
    lay = fm.layout
    t, k = lay.n_frames, lay.n_components
    if not (0 <= start < end <= t - 1):
        raise ValueError(f"window {window} out of range for {t} frames")
    length = end - start + 1
    if lay.has_acceleration and length < 3:
        raise DataFormatError(
            f"window {window} too short for acceleration features"
        )
    cols = list(range(start * k, (end + 1) * k))
    if lay.has_velocity:
        off = lay.velocity_offset
        cols += list(range(off + start * k, off + end * k))
    if lay.has_acceleration:
        off = lay.acceleration_offset
        cols += list(range(off + start * k, off + (end - 1) * k))
    new_layout = FeatureLayout(length, k, lay.has_velocity, lay.has_acceleration)
    return FeatureMatrix(fm.values[:, cols], new_layout)


def export_csv(
    fm: FeatureMatrix,
    path: str | os.PathLike,
    sample_ids: list[str] | None = None,
    labels: list[str] | None = None,
) -> None:
    """Write the matrix as CSV with layout-derived column names."""
    lead: list[str] = []
    if sample_ids is not None:
        if len(sample_ids) != fm.n_samples:
            raise ValueError("sample_ids length does not match matrix rows")
        lead.append("sample_id")
    if labels is not None:
        if len(labels) != fm.n_samples:
            raise ValueError("labels length does not match matrix rows")
        lead.append("label")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(lead + fm.layout.column_names())
        for i in range(fm.n_samples):
            row: list[str] = []
            if sample_ids is not None:
                row.append(sample_ids[i])
            if labels is not None:
                row.append(labels[i])
            row += [repr(float(v)) for v in fm.values[i]]
            writer.writerow(row)
