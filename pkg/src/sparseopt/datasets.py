"""Desk-scale datasets: synthetic Gaussian blobs and IDX file ingestion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Dataset", "make_blobs", "load_idx", "load_idx_dataset", "write_csv", "read_csv"]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Features (one row per sample; images keep their 2-d shape per sample)
    and integer class labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError(
                f"feature/label count mismatch: {len(self.features)} vs {len(self.labels)}"
            )

    @property
    def n(self) -> int:
        return len(self.labels)


def make_blobs(
    num_points: int,
    classes: int,
    spread: float,
    rng: np.random.Generator,
    dim: int = 2,
    radius: float = 1.0,
) -> Dataset:
    """Gaussian clusters with class means spaced on a circle of the given
    radius inside a fixed 2-plane of feature space; deterministic given the
    generator state."""
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if num_points < 1:
        raise ValueError(f"need at least 1 point, got {num_points}")
    if spread < 0:
        raise ValueError(f"spread must be nonnegative, got {spread}")
    if dim < 2:
        raise ValueError(f"need at least 2 features, got {dim}")

    # Orthonormal plane spanned by smooth cosine/sine patterns.
    j = np.arange(dim)
    u = np.cos(2.0 * math.pi * j / dim)
    v = np.sin(2.0 * math.pi * j / dim)
    u = u / np.linalg.norm(u)
    v = v - (v @ u) * u
    vnorm = np.linalg.norm(v)
    if vnorm < 1e-12:  # dim == 2 degenerates; fall back to coordinate axes
        u = np.array([1.0, 0.0])
        v = np.array([0.0, 1.0])
    else:
        v = v / vnorm

    labels = np.arange(num_points) % classes
    theta = 2.0 * math.pi * labels / classes
    means = radius * (np.cos(theta)[:, None] * u[None, :] + np.sin(theta)[:, None] * v[None, :])
    noise = spread * rng.standard_normal((num_points, dim)) if spread > 0 else 0.0
    return Dataset(features=means + noise, labels=labels.astype(np.int64))


def _read_be_u32(buf: bytes, off: int, what: str) -> int:
    if off + 4 > len(buf):
        raise ValueError(f"truncated IDX file: missing {what}")
    return int.from_bytes(buf[off : off + 4], "big")


def load_idx(path) -> np.ndarray:
    """Read one big-endian IDX file: images (magic 0x803) are scaled to
    [0, 1] with shape (n, rows, cols); labels (magic 0x801) come back as an
    int vector."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic = _read_be_u32(buf, 0, "magic")
    if magic == IDX_IMAGES_MAGIC:
        n = _read_be_u32(buf, 4, "image count")
        rows = _read_be_u32(buf, 8, "row count")
        cols = _read_be_u32(buf, 12, "column count")
        need = 16 + n * rows * cols
        if len(buf) < need:
            raise ValueError(f"truncated IDX image file: {len(buf)} bytes, need {need}")
        data = np.frombuffer(buf, dtype=np.uint8, count=n * rows * cols, offset=16)
        return data.reshape(n, rows, cols).astype(np.float64) / 255.0
    if magic == IDX_LABELS_MAGIC:
        n = _read_be_u32(buf, 4, "label count")
        need = 8 + n
        if len(buf) < need:
            raise ValueError(f"truncated IDX label file: {len(buf)} bytes, need {need}")
        return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    raise ValueError(f"bad magic 0x{magic:08x}: not an IDX image or label file")


def load_idx_dataset(images_path, labels_path) -> Dataset:
    images = load_idx(images_path)
    labels = load_idx(labels_path)
    if images.ndim != 3:
        raise ValueError(f"{images_path} does not contain images")
    if labels.ndim != 1:
        raise ValueError(f"{labels_path} does not contain labels")
    if len(images) != len(labels):
        raise ValueError(f"count mismatch: {len(images)} images vs {len(labels)} labels")
    return Dataset(features=images, labels=labels)


def write_csv(path, ds: Dataset) -> None:
    """One row per sample: features then the label, comma separated."""
    feats = ds.features.reshape(ds.n, -1)
    with open(path, "w") as fh:
        for row, lab in zip(feats, ds.labels):
            fh.write(",".join(format(x, ".17g") for x in row) + f",{int(lab)}\n")


def read_csv(path) -> Dataset:
    feats = []
    labels = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln:
                continue
            toks = ln.split(",")
            feats.append([float(t) for t in toks[:-1]])
            labels.append(int(toks[-1]))
    return Dataset(features=np.asarray(feats), labels=np.asarray(labels, dtype=np.int64))
