"""Datasets: synthetic Gaussian mixtures, long-tail subsampling, batching,
mixup, and IDX / CSV file I/O."""
from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidSpec
from .numkit import Rng, gaussian_matrix, qr_orthonormal

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    class_counts: np.ndarray = field(init=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise InvalidSpec(f"features {X.shape} and labels {y.shape} disagree")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise InvalidSpec("label out of range")
        counts = np.bincount(y, minlength=self.num_classes)
        if np.any(counts == 0):
            raise InvalidSpec(f"empty classes: {np.flatnonzero(counts == 0).tolist()}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_counts", counts)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True)
class LongTailSpec:
    imbalance_factor: float
    base_count: int

    def __post_init__(self):
        if not self.imbalance_factor >= 1:
            raise InvalidSpec("imbalance factor must be >= 1")
        if self.base_count < 1:
            raise InvalidSpec("base count must be >= 1")

    def counts(self, num_classes):
        return longtail_counts(num_classes, self.base_count, self.imbalance_factor)


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray
    batch_counts: np.ndarray


def longtail_counts(num_classes, base_count, imbalance_factor):
    """``round(base * IF**(-i/(c-1)))`` per class, half-up, at least 1."""
    c = int(num_classes)
    if c == 1:
        return np.array([base_count])
    return np.array(
        [max(1, math.floor(base_count * imbalance_factor ** (-i / (c - 1)) + 0.5)) for i in range(c)]
    )


def class_directions(rng: Rng, c, d):
    """``c`` unit mean directions in ``R^d``; orthonormal when ``d >= c``."""
    G = gaussian_matrix(rng, d, c)
    if d >= c:
        return qr_orthonormal(G).T
    return (G / np.linalg.norm(G, axis=0)).T


def synth_gaussian_mixture(rng: Rng, c, d, counts, mean_scale):
    """Class ``i`` is ``N(mean_scale * mu_i, I_d)``, samples grouped by class."""
    counts = np.asarray(counts, dtype=np.int64)
    if c < 2 or counts.shape != (c,):
        raise InvalidSpec(f"need c >= 2 and one count per class, got c={c}, counts={counts}")
    if np.any(counts < 1):
        raise InvalidSpec("every class needs at least one sample")
    mu = class_directions(rng, c, d)
    labels = np.repeat(np.arange(c), counts)
    X = mean_scale * mu[labels] + rng.normal((labels.size, d))
    return Dataset(X, labels, c)


def apply_longtail(ds: Dataset, spec: LongTailSpec, rng: Rng) -> Dataset:
    """Keep a uniform random subset of each class following the decay curve."""
    target = spec.counts(ds.num_classes)
    keep = []
    for i, n_i in enumerate(target):
        idx = np.flatnonzero(ds.labels == i)
        if idx.size < n_i:
            raise InvalidSpec(f"class {i} has {idx.size} samples, {n_i} needed")
        keep.append(idx[rng.choice(idx.size, int(n_i))])
    return ds.subset(np.sort(np.concatenate(keep)))


def split_per_class(ds: Dataset, per_class, rng: Rng):
    """Split off ``per_class`` random samples of every class: ``(rest, held)``."""
    held = []
    for i in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == i)
        if idx.size <= per_class:
            raise InvalidSpec(f"class {i} too small to hold out {per_class}")
        held.append(idx[rng.choice(idx.size, per_class)])
    held = np.sort(np.concatenate(held))
    rest = np.setdiff1d(np.arange(ds.n), held)
    return ds.subset(rest), ds.subset(held)


def iterate_batches(ds: Dataset, batch_size, shuffle=True, rng: Rng | None = None):
    if batch_size < 1:
        raise InvalidSpec("batch size must be >= 1")
    order = rng.permutation(ds.n) if shuffle else np.arange(ds.n)
    for start in range(0, ds.n, batch_size):
        idx = order[start:start + batch_size]
        y = ds.labels[idx]
        yield Batch(ds.features[idx], y, np.bincount(y, minlength=ds.num_classes))


@dataclass(frozen=True)
class MixedBatch:
    features: np.ndarray
    labels_a: np.ndarray
    labels_b: np.ndarray
    lam: float


def mixup(batch: Batch, alpha=1.0, rng: Rng | None = None, lam=None):
    """Convex combination of the batch with a shuffled copy of itself.

    Losses are combined as ``lam * L(labels_a) + (1 - lam) * L(labels_b)``.
    """
    if lam is None:
        if alpha <= 0:
            raise InvalidSpec("mixup alpha must be positive")
        lam = rng.beta(alpha, alpha)
    b = batch.features.shape[0]
    perm = rng.permutation(b) if rng is not None else np.arange(b)
    X = lam * batch.features + (1.0 - lam) * batch.features[perm]
    return MixedBatch(X, batch.labels, batch.labels[perm], float(lam))


# --- file formats -----------------------------------------------------------

def _read_idx(raw: bytes, magic, ndim):
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError("truncated IDX header", len(raw))
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise FormatError(f"bad magic 0x{got:08x}, expected 0x{magic:08x}", 0)
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) != header + size:
        raise FormatError(f"payload is {len(raw) - header} bytes, header promises {size}", header)
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes=None) -> Dataset:
    """Read a big-endian IDX image/label pair; pixels are scaled to [0, 1]."""
    images = _read_idx(Path(images_path).read_bytes(), IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(Path(labels_path).read_bytes(), IDX_LABELS_MAGIC, 1)
    if labels.shape[0] != images.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels", 4)
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return Dataset(X, y, num_classes or int(y.max()) + 1)


def save_idx(images_path, labels_path, images, labels):
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, r, c = images.shape
    Path(images_path).write_bytes(struct.pack(">4I", IDX_IMAGES_MAGIC, n, r, c) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", IDX_LABELS_MAGIC, n) + labels.tobytes())


def load_csv(path, num_classes=None) -> Dataset:
    """CSV with a header row and a ``label`` column; other columns are features."""
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise FormatError("not UTF-8", e.start) from None
    lines = text.splitlines(keepends=True)
    if not lines:
        raise FormatError("empty file", 0)
    header = next(csv.reader([lines[0]]))
    if "label" not in header:
        raise FormatError("header has no 'label' column", 0)
    li = header.index("label")
    offset = len(lines[0].encode("utf-8"))
    X, y = [], []
    for line in lines[1:]:
        if not line.strip():
            offset += len(line.encode("utf-8"))
            continue
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(row)}", offset)
        try:
            y.append(int(row[li]))
        except ValueError:
            raise FormatError(f"label {row[li]!r} is not an integer", offset) from None
        try:
            X.append([float(v) for j, v in enumerate(row) if j != li])
        except ValueError as e:
            raise FormatError(f"non-numeric feature: {e}", offset) from None
        offset += len(line.encode("utf-8"))
    y = np.array(y, dtype=np.int64)
    X = np.array(X, dtype=np.float64).reshape(len(y), len(header) - 1)
    return Dataset(X, y, num_classes or int(y.max()) + 1)


def save_csv(path, ds: Dataset):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j}" for j in range(ds.dim)] + ["label"])
    for row, lab in zip(ds.features, ds.labels):
        w.writerow([repr(float(v)) for v in row] + [int(lab)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
