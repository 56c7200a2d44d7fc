"""Two-moons data: generation, 70/20/10 splitting and CSV persistence."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .rng import box_muller, stream

SPLIT_NAMES = ("train", "val", "test")
CSV_HEADER = ["x1", "x2", "label", "split"]

# substream keys
_GENERATE = 1
_SPLIT = 2


class DatasetFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class MoonsDataset:
    points: np.ndarray
    labels: np.ndarray
    noise: float = 0.0
    seed: int = 0
    split: Optional[dict[str, np.ndarray]] = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.points) != len(self.labels):
            raise ValueError(f"{len(self.points)} points but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if self.split is None:
            raise ValueError("dataset has not been split")
        idx = self.split[name]
        return self.points[idx], self.labels[idx]

    def split_sizes(self) -> tuple[int, ...]:
        if self.split is None:
            raise ValueError("dataset has not been split")
        return tuple(len(self.split[name]) for name in SPLIT_NAMES)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MoonsDataset):
            return NotImplemented
        if not (
            np.array_equal(self.points, other.points)
            and np.array_equal(self.labels, other.labels)
        ):
            return False
        if (self.split is None) != (other.split is None):
            return False
        if self.split is None:
            return True
        return all(np.array_equal(self.split[k], other.split[k]) for k in SPLIT_NAMES)


def make_moons(n_samples: int, noise: float = 0.0, seed: int = 0) -> MoonsDataset:
    """Two interleaving half circles, outer labelled 0 and inner labelled 1.

    Arc positions are evenly spaced; Gaussian noise with standard deviation
    ``noise`` is added to both coordinates before the sample order is
    shuffled.  The noise draws are taken even when ``noise`` is 0, so the
    shuffle for a given seed does not depend on the noise level.
    """
    if n_samples < 2:
        raise ValueError(f"n_samples must be at least 2, got {n_samples}")
    if noise < 0 or not math.isfinite(noise):
        raise ValueError(f"noise must be a non-negative finite number, got {noise}")
    n_out = (n_samples + 1) // 2
    n_in = n_samples // 2
    t_out = np.linspace(0.0, np.pi, n_out)
    t_in = np.linspace(0.0, np.pi, n_in)
    outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
    inner = np.column_stack([1.0 - np.cos(t_in), 1.0 - np.sin(t_in) - 0.5])
    points = np.vstack([outer, inner])
    labels = np.concatenate([np.zeros(n_out, np.int64), np.ones(n_in, np.int64)])

    rng = stream(seed, _GENERATE)
    points = points + noise * box_muller(rng, 2 * n_samples).reshape(n_samples, 2)
    order = rng.permutation(n_samples)
    return MoonsDataset(points[order], labels[order], noise=noise, seed=seed)


def split_sizes(n: int) -> tuple[int, int, int]:
    n_train = (7 * n) // 10
    n_val = (2 * n) // 10
    return n_train, n_val, n - n_train - n_val


def split(dataset: MoonsDataset, seed: Optional[int] = None) -> MoonsDataset:
    """Shuffled 70/20/10 split. Index lists are stored sorted."""
    n = len(dataset)
    if n < 10:
        raise ValueError(f"need at least 10 samples to split, got {n}")
    seed = dataset.seed if seed is None else seed
    n_train, n_val, _ = split_sizes(n)
    perm = stream(seed, _SPLIT).permutation(n)
    parts = (perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :])
    return replace(dataset, split={k: np.sort(p) for k, p in zip(SPLIT_NAMES, parts)})


def generate(n_samples: int, noise: float, seed: int) -> MoonsDataset:
    return split(make_moons(n_samples, noise, seed), seed)


def to_csv(dataset: MoonsDataset) -> str:
    names = np.full(len(dataset), "", dtype=object)
    if dataset.split is not None:
        for name in SPLIT_NAMES:
            names[dataset.split[name]] = name
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for (x1, x2), label, name in zip(dataset.points.tolist(), dataset.labels.tolist(), names):
        writer.writerow([repr(x1), repr(x2), label, name])
    return buf.getvalue()


def from_csv(text: str) -> MoonsDataset:
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header != CSV_HEADER:
        raise DatasetFormatError(1, f"expected header {','.join(CSV_HEADER)}")
    points, labels, names = [], [], []
    for lineno, row in enumerate(rows, start=2):
        if len(row) != 4:
            raise DatasetFormatError(lineno, f"expected 4 columns, got {len(row)}")
        try:
            x1, x2 = float(row[0]), float(row[1])
        except ValueError:
            raise DatasetFormatError(lineno, "coordinates must be numbers") from None
        if row[2] not in ("0", "1"):
            raise DatasetFormatError(lineno, f"label must be 0 or 1, got {row[2]!r}")
        if row[3] not in SPLIT_NAMES and row[3] != "":
            raise DatasetFormatError(lineno, f"unknown split {row[3]!r}")
        points.append((x1, x2))
        labels.append(int(row[2]))
        names.append(row[3])
    names = np.array(names, dtype=object)
    if np.all(names == ""):
        part = None
    elif np.any(names == ""):
        missing = int(np.flatnonzero(names == "")[0])
        raise DatasetFormatError(missing + 2, "split missing while other rows have one")
    else:
        part = {k: np.flatnonzero(names == k) for k in SPLIT_NAMES}
    return MoonsDataset(np.array(points).reshape(-1, 2), np.array(labels), split=part)


def save_csv(dataset: MoonsDataset, path) -> None:
    Path(path).write_text(to_csv(dataset), encoding="utf-8", newline="")


def load_csv(path) -> MoonsDataset:
    return from_csv(Path(path).read_text(encoding="utf-8"))
