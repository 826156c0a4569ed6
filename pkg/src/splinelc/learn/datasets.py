"""Datasets: MNIST IDX files, synthetic generators, label corruption."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .._validation import as_labels
from ..exceptions import IDXFormatError, InputError

__all__ = [
    "Dataset",
    "IMAGES_MAGIC",
    "LABELS_MAGIC",
    "load_mnist_idx",
    "read_idx_images",
    "read_idx_labels",
    "write_idx_images",
    "write_idx_labels",
    "make_piecewise_regression",
    "piecewise_target",
    "make_xor_clusters",
    "randomize_labels",
    "make_modular_addition",
    "export_mlxtend_mnist",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray  # int vector (classification) or float matrix (regression)
    split: str = "train"
    num_classes: Optional[int] = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2:
            raise InputError(f"inputs must be 2-D, got shape {self.inputs.shape}")
        if not np.all(np.isfinite(self.inputs)):
            raise InputError("inputs contain non-finite values")
        n = self.inputs.shape[0]
        if self.is_classification:
            self.labels = as_labels(self.labels, n, self.num_classes, name="labels")
        else:
            self.labels = np.asarray(self.labels, dtype=np.float64).reshape(n, -1)

    @property
    def is_classification(self):
        return self.num_classes is not None

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    def subset(self, index, split=None):
        index = np.asarray(index)
        return replace(self, inputs=self.inputs[index], labels=self.labels[index], split=split or self.split)


def _open(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _header(data, n_fields, magic, what):
    size = 4 * n_fields
    if len(data) < size:
        raise IDXFormatError(f"truncated header ({len(data)} bytes)", f"{what}.header")
    fields = struct.unpack(f">{n_fields}I", data[:size])
    if fields[0] != magic:
        raise IDXFormatError(f"bad magic 0x{fields[0]:08x}, expected 0x{magic:08x}", f"{what}.magic")
    return fields[1:], data[size:]


def read_idx_images(path):
    with _open(path) as f:
        data = f.read()
    (count, rows, cols), body = _header(data, 4, IMAGES_MAGIC, "images")
    need = count * rows * cols
    if len(body) != need:
        raise IDXFormatError(f"expected {need} pixel bytes for {count}x{rows}x{cols}, found {len(body)}", "images.pixels")
    return np.frombuffer(body, dtype=np.uint8).reshape(count, rows, cols)


def read_idx_labels(path):
    with _open(path) as f:
        data = f.read()
    (count,), body = _header(data, 2, LABELS_MAGIC, "labels")
    if len(body) != count:
        raise IDXFormatError(f"expected {count} label bytes, found {len(body)}", "labels.items")
    return np.frombuffer(body, dtype=np.uint8).copy()


def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise InputError("images must be count x rows x cols")
    Path(path).write_bytes(struct.pack(">4I", IMAGES_MAGIC, *images.shape) + images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1)
    Path(path).write_bytes(struct.pack(">2I", LABELS_MAGIC, labels.shape[0]) + labels.tobytes())


def load_mnist_idx(images_path, labels_path, limit=None, class_filter=None, split="train"):
    """Read an IDX image/label pair; pixels become 784-vectors in [0, 1] (``byte / 255``)."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IDXFormatError(f"images file holds {images.shape[0]} items, labels file {labels.shape[0]}", "count")
    X = images.reshape(images.shape[0], images.shape[1] * images.shape[2]).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    if class_filter is not None:
        keep = np.isin(y, np.asarray(list(class_filter)))
        X, y = X[keep], y[keep]
    if limit is not None:
        X, y = X[: int(limit)], y[: int(limit)]
    return Dataset(X, y, split, num_classes=10)


def piecewise_target(X):
    """``(sin(x1) + cos(x2))`` where ``x1 < 0``, else 0."""
    X = np.asarray(X, dtype=np.float64)
    return np.where(X[:, 0] < 0, np.sin(X[:, 0]) + np.cos(X[:, 1]), 0.0)


def make_piecewise_regression(n, seed=0, split="train"):
    """``n`` points uniform on ``[-2pi, 2pi]^2`` with :func:`piecewise_target` labels."""
    if n < 1:
        raise InputError("n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2 * np.pi, 2 * np.pi, size=(int(n), 2))
    return Dataset(X, piecewise_target(X)[:, None], split)


def make_xor_clusters(n, seed=0, spread=0.15, split="train"):
    """Four Gaussian clusters at ``(+-1, +-1)``; label 1 when the signs differ."""
    rng = np.random.default_rng(seed)
    centers = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    which = rng.integers(0, 4, size=int(n))
    X = centers[which] + spread * rng.standard_normal((int(n), 2))
    return Dataset(X, (which >= 2).astype(np.int64), split, num_classes=2)


def randomize_labels(ds, fraction, num_classes=None, seed=0):
    """Replace a seeded ``fraction`` of labels by uniform draws over the classes."""
    if not ds.is_classification:
        raise InputError("label randomization needs a classification dataset")
    if not 0.0 <= fraction <= 1.0:
        raise InputError(f"fraction must be in [0, 1], got {fraction}")
    k = int(num_classes or ds.num_classes)
    rng = np.random.default_rng(seed)
    n = len(ds)
    idx = rng.choice(n, size=int(round(fraction * n)), replace=False)
    labels = ds.labels.copy()
    labels[idx] = rng.integers(0, k, size=idx.size)
    return replace(ds, labels=labels, num_classes=max(k, ds.num_classes))


def make_modular_addition(p, split="train"):
    """All ``p*p`` pairs ``(a, b)`` as concatenated one-hots, label ``(a + b) mod p``."""
    p = int(p)
    if p < 2:
        raise InputError("p must be >= 2")
    a, b = np.divmod(np.arange(p * p), p)
    X = np.zeros((p * p, 2 * p))
    X[np.arange(p * p), a] = 1.0
    X[np.arange(p * p), p + b] = 1.0
    return Dataset(X, (a + b) % p, split, num_classes=p)


def export_mlxtend_mnist(out_dir, n_train=1000, seed=0):
    """Write the 5000-digit MNIST sample bundled with ``mlxtend`` as IDX files.

    A seeded class-stratified draw of ``n_train`` digits becomes
    ``train-*-idx*-ubyte``; the rest becomes ``test-*``.  Returns the four paths.
    """
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise InputError("mlxtend is required to export its MNIST sample (pip install mlxtend)") from exc
    X, y = mnist_data()
    rng = np.random.default_rng(seed)
    per_class = n_train // 10
    train_idx = np.sort(np.concatenate([rng.permutation(np.flatnonzero(y == c))[:per_class] for c in range(10)]))
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(np.setdiff1d(np.arange(len(y)), train_idx))
    images = np.clip(np.round(X), 0, 255).astype(np.uint8).reshape(-1, 28, 28)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train_images": out / "train-images-idx3-ubyte",
        "train_labels": out / "train-labels-idx1-ubyte",
        "test_images": out / "test-images-idx3-ubyte",
        "test_labels": out / "test-labels-idx1-ubyte",
    }
    write_idx_images(paths["train_images"], images[train_idx])
    write_idx_labels(paths["train_labels"], y[train_idx])
    write_idx_images(paths["test_images"], images[test_idx])
    write_idx_labels(paths["test_labels"], y[test_idx])
    return paths
