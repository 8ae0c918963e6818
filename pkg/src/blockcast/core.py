"""Domain types, dataset index, sliding windows, scaling, and seeded RNG."""

import csv
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DivisionGuardError, MalformedIndexError, UnfittedScalerError

MODALITIES = ("camera", "gps", "lidar", "radar")

#: Inter-sample interval of the synchronized streams, in milliseconds.
DEFAULT_STEP_MS = 300

#: Number of past frames per prediction window.
WINDOW_LEN = 5

#: Default number of future steps predicted per window.
DEFAULT_HORIZON = 5

INDEX_COLUMNS = ("seq_id", "frame_idx", "timestamp_ms") + MODALITIES + ("label",)


@dataclass(frozen=True)
class FrameRecord:
    """One synchronized capture instant with per-modality payload paths."""

    seq_id: str
    frame_idx: int
    timestamp_ms: int
    camera: Optional[str] = None
    gps: Optional[str] = None
    lidar: Optional[str] = None
    radar: Optional[str] = None
    label: int = 0

    def payload(self, modality: str) -> Optional[str]:
        return getattr(self, modality)


@dataclass(frozen=True)
class SampleWindow:
    """Five past frames plus the labels of the next k steps."""

    frames: tuple
    future_labels: tuple

    @property
    def seq_id(self) -> str:
        return self.frames[0].seq_id

    @property
    def anchor(self) -> int:
        """frame_idx of the most recent frame in the window."""
        return self.frames[-1].frame_idx


@dataclass
class FeatureTensor:
    """Dense real tensor with named axes, the currency between pipelines and models."""

    dims: tuple
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if len(self.dims) != self.data.ndim:
            raise ValueError(
                f"{len(self.dims)} axis names for ndim {self.data.ndim}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature tensor contains non-finite values")

    @property
    def shape(self) -> tuple:
        return self.data.shape


def as_array(x) -> np.ndarray:
    """Unwrap a FeatureTensor (or pass an ndarray through)."""
    return x.data if isinstance(x, FeatureTensor) else np.asarray(x)


def assemble_windows(frames: Sequence[FrameRecord], k: int = DEFAULT_HORIZON):
    """Slide a 5-frame window over each sequence and attach k future labels.

    A window is emitted for every anchor position t with at least 4 frames
    before it and k frames after it, all with contiguous frame_idx. Windows
    never span sequence boundaries.
    """
    if k < 1:
        raise ValueError("k must be positive")
    by_seq: dict = {}
    for fr in frames:
        by_seq.setdefault(fr.seq_id, []).append(fr)

    windows = []
    for seq_id, seq in by_seq.items():
        idx = np.array([fr.frame_idx for fr in seq])
        if len(idx) > 1 and np.any(np.diff(idx) <= 0):
            raise MalformedIndexError(
                f"frame_idx not strictly increasing in sequence {seq_id!r}"
            )
        for fr in seq:
            if fr.label not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {fr.label!r}")
        for t in range(WINDOW_LEN - 1, len(seq) - k):
            span = idx[t - (WINDOW_LEN - 1) : t + k + 1]
            if span[-1] - span[0] != len(span) - 1:
                continue  # gap in frame_idx: not a valid window
            windows.append(
                SampleWindow(
                    frames=tuple(seq[t - (WINDOW_LEN - 1) : t + 1]),
                    future_labels=tuple(
                        seq[t + i].label for i in range(1, k + 1)
                    ),
                )
            )
    return windows


class MinMaxScaler:
    """Per-feature min-max scaler. Constant features map to 0."""

    def __init__(self):
        self.mins = None
        self.maxs = None

    @property
    def fitted(self) -> bool:
        return self.mins is not None

    def fit(self, rows) -> "MinMaxScaler":
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("fit expects a non-empty 2D array of rows")
        self.mins = arr.min(axis=0)
        self.maxs = arr.max(axis=0)
        return self

    def transform(self, row, clip: bool = False) -> np.ndarray:
        if not self.fitted:
            raise UnfittedScalerError("scaler used before fit")
        row = np.asarray(row, dtype=np.float64)
        span = self.maxs - self.mins
        out = np.zeros_like(row, dtype=np.float64)
        ok = span > 0
        out[..., ok] = (row[..., ok] - self.mins[ok]) / span[ok]
        if clip:
            out = np.clip(out, 0.0, 1.0)
        return out

    def save_csv(self, path) -> None:
        if not self.fitted:
            raise UnfittedScalerError("cannot save an unfitted scaler")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([repr(float(v)) for v in self.mins])
            w.writerow([repr(float(v)) for v in self.maxs])

    @classmethod
    def load_csv(cls, path) -> "MinMaxScaler":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        if len(rows) != 2:
            raise ValueError(f"scaler file {path} must have exactly 2 rows")
        sc = cls()
        sc.mins = np.array([float(v) for v in rows[0]])
        sc.maxs = np.array([float(v) for v in rows[1]])
        return sc


def fit_scaler(rows) -> MinMaxScaler:
    return MinMaxScaler().fit(rows)


def apply_scaler(scaler: MinMaxScaler, row, clip: bool = False) -> np.ndarray:
    return scaler.transform(row, clip=clip)


def positive_class_weight(n_neg: int, n_pos: int, alpha: float = 1.1) -> float:
    """Loss weight for the positive class: alpha * (n_neg / n_pos)."""
    if n_pos < 1:
        raise DivisionGuardError("positive sample count must be >= 1")
    return alpha * (n_neg / n_pos)


def stable_seed(*parts) -> int:
    """Deterministic 32-bit seed derived from arbitrary labels."""
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Independent, reproducible RNG stream named by (seed, *tags).

    Different tag tuples give statistically independent streams, so
    parallel workers can draw without coordinating.
    """
    entropy = [int(seed) & 0xFFFFFFFF] + [
        zlib.crc32(str(t).encode()) for t in tags
    ]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def write_index(path, frames: Sequence[FrameRecord]) -> None:
    """Write the dataset index CSV (empty cell = modality absent)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(INDEX_COLUMNS)
        for fr in frames:
            w.writerow(
                [
                    fr.seq_id,
                    fr.frame_idx,
                    fr.timestamp_ms,
                    fr.camera or "",
                    fr.gps or "",
                    fr.lidar or "",
                    fr.radar or "",
                    fr.label,
                ]
            )


def read_index(path) -> list:
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != INDEX_COLUMNS:
            raise ValueError(f"unexpected index header in {path}: {header}")
        frames = []
        for row in reader:
            seq, fidx, ts, cam, gps, lidar, radar, label = row
            frames.append(
                FrameRecord(
                    seq_id=seq,
                    frame_idx=int(fidx),
                    timestamp_ms=int(ts),
                    camera=cam or None,
                    gps=gps or None,
                    lidar=lidar or None,
                    radar=radar or None,
                    label=int(label),
                )
            )
    return frames


def split_sequences(seq_ids, fractions=(0.70, 0.15, 0.15)) -> dict:
    """Assign sequences to train/val/test by sorted order (70/15/15)."""
    ids = sorted(set(seq_ids))
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    if n >= 3:
        n_train = min(max(n_train, 1), n - 2)
        n_val = min(max(n_val, 1), n - n_train - 1)
    assignment = {}
    for i, sid in enumerate(ids):
        if i < n_train:
            assignment[sid] = "train"
        elif i < n_train + n_val:
            assignment[sid] = "val"
        else:
            assignment[sid] = "test"
    return assignment
