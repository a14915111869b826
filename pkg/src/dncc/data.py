"""Datasets: IDX/CSV loaders and writers, synthetic blobs, splits and batching."""

from __future__ import annotations

import csv
import hashlib
import struct
import warnings
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import ConfigurationError, FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ConfigurationError(f"features must be a non-empty N x D matrix, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ConfigurationError(f"{y.size} labels for {X.shape[0]} samples")
        if not np.all(np.isfinite(X)):
            raise ConfigurationError("features contain non-finite values")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ConfigurationError(f"labels must lie in [0, {self.num_classes})")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).astype("<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels).astype("<i8").tobytes())
        h.update(str(self.num_classes).encode())
        return h.hexdigest()


# -- IDX ------------------------------------------------------------------


def _read_idx(path, magic, ndim):
    with open(path, "rb") as fh:
        raw = fh.read()
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for magic number", offset=0)
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}", offset=0)
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = header + int(np.prod(dims))
    if len(raw) != need:
        off = min(len(raw), need)
        raise FormatError(f"{path}: expected {need} bytes, found {len(raw)}", offset=off)
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, num_classes=None) -> Dataset:
    """Load an MNIST-format image/label pair; pixels are scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels", offset=4
        )
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return Dataset(X, y, num_classes or int(y.max()) + 1)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


# -- CSV ------------------------------------------------------------------


def load_csv(path, label_column="label", num_classes=None) -> Dataset:
    """Numeric CSV with a header; every non-label column is a feature."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file", offset=1) from None
        if label_column not in header:
            raise ConfigurationError(f"{path}: no column named {label_column!r}")
        li = header.index(label_column)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"{path}:{lineno}: {len(row)} fields, header has {len(header)}", offset=lineno
                )
            try:
                vals = [float(c) for k, c in enumerate(row) if k != li]
                lab = float(row[li])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}", offset=lineno) from None
            if lab < 0 or lab != int(lab):
                raise FormatError(f"{path}:{lineno}: label {row[li]!r} is not a non-negative int",
                                  offset=lineno)
            rows.append(vals)
            labels.append(int(lab))
    if not rows:
        raise FormatError(f"{path}: no data rows", offset=2)
    y = np.array(labels, dtype=np.int64)
    return Dataset(np.array(rows), y, num_classes or int(y.max()) + 1)


def write_csv(ds: Dataset, path, label_column="label") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.dim)] + [label_column])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


# -- synthetic --------------------------------------------------------------


def synth_blobs(seed=0, num_classes=4, per_class_n=500, dim=16, spread=1.0) -> Dataset:
    """Isotropic Gaussian clusters around random centres of norm 3."""
    if num_classes < 2 or dim < 2:
        raise ConfigurationError("synth_blobs needs num_classes >= 2 and dim >= 2")
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(num_classes, dim))
    centres *= 3.0 / np.linalg.norm(centres, axis=1, keepdims=True)
    X = np.repeat(centres, per_class_n, axis=0)
    X = X + spread * rng.normal(size=X.shape)
    y = np.repeat(np.arange(num_classes), per_class_n)
    return Dataset(X, y, num_classes)


# -- splitting and batching ---------------------------------------------------


class Split(NamedTuple):
    train: Dataset
    val: Dataset
    stratified: bool


def train_val_split(ds: Dataset, ratio=(4, 1), seed=0) -> Split:
    """Deterministic disjoint split with ``ratio`` train:val proportions.

    Stratified per class, with the rounding remainder assigned by largest
    fractional part. Falls back to an unstratified split (and warns) when a
    class has fewer than 5 samples.
    """
    n = len(ds)
    if n < 5:
        raise ConfigurationError("need at least 5 samples to split")
    a, b = ratio
    n_val = n - round(n * a / (a + b))
    rng = np.random.default_rng([seed, 0x5117])
    counts = np.bincount(ds.labels, minlength=ds.num_classes)
    present = counts[counts > 0]
    if present.min() < 5:
        warnings.warn("a class has fewer than 5 samples; using an unstratified split")
        perm = rng.permutation(n)
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        return Split(ds.subset(np.sort(train_idx)), ds.subset(np.sort(val_idx)), False)

    exact = counts * n_val / n
    take = np.floor(exact).astype(int)
    order = sorted(range(ds.num_classes), key=lambda c: (-(exact[c] - take[c]), c))
    for c in order[: n_val - take.sum()]:
        take[c] += 1
    val_idx, train_idx = [], []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        members = members[rng.permutation(members.size)]
        val_idx.append(members[: take[c]])
        train_idx.append(members[take[c]:])
    val_idx = np.sort(np.concatenate(val_idx))
    train_idx = np.sort(np.concatenate(train_idx))
    return Split(ds.subset(train_idx), ds.subset(val_idx), True)


class BatchIterator:
    """Mini-batch index iterator whose order is a pure function of (seed, epoch).

    Iterating yields one epoch and advances the epoch counter.
    """

    def __init__(self, dataset: Dataset, batch_size: int, seed: int = 0, epoch: int = 0):
        if batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = epoch

    def order(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.dataset))

    def batches(self, epoch: int) -> Iterator[np.ndarray]:
        perm = self.order(epoch)
        for start in range(0, perm.size, self.batch_size):
            yield perm[start : start + self.batch_size]

    def __iter__(self):
        epoch = self.epoch
        self.epoch += 1
        return self.batches(epoch)

    def __len__(self):
        return -(-len(self.dataset) // self.batch_size)
