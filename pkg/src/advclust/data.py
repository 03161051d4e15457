"""Dataset ingestion and synthesis.

Three sources: a seeded Gaussian-blob generator for desk-scale checks,
an IDX-format image loader with optional 2x2 mean-pool downsampling,
and a delimited-text loader for dense pre-computed features.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    """Malformed input file; message carries the offending location."""


@dataclass
class Dataset:
    features: np.ndarray          # (N, I) float64, finite
    labels: np.ndarray | None     # (N,) int or None
    class_count: int
    provenance: str

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a non-empty (N, I) matrix")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite feature values")
        if self.labels is not None:
            if self.labels.shape[0] != self.features.shape[0]:
                raise ValueError("label count != sample count")
            if self.labels.max() >= self.class_count:
                raise ValueError("label out of range for class_count")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def gen_blobs(k: int, input_dim: int, per_cluster: int, separation: float,
              sigma: float, seed: int) -> Dataset:
    """K isotropic Gaussian blobs with centers at separation * (random unit
    directions); labels are the generating cluster."""
    if k < 2:
        raise ValueError("need k >= 2")
    if separation <= 0:
        raise ValueError("separation must be positive")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((k, input_dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centers = separation * dirs
    features = np.concatenate([
        centers[j] + sigma * rng.standard_normal((per_cluster, input_dim))
        for j in range(k)
    ])
    labels = np.repeat(np.arange(k), per_cluster)
    return Dataset(features, labels, k, provenance=f"blobs(k={k}, seed={seed})")


def _read_idx(path: str, expect_magic: int):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header at offset 0")
    (magic,) = struct.unpack(">i", raw[:4])
    if magic != expect_magic:
        raise FormatError(
            f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expect_magic:08x}"
        )
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated dimension header at offset 4")
    dims = struct.unpack(f">{ndim}i", raw[4:header_len])
    expected = int(np.prod(dims))
    body = np.frombuffer(raw, dtype=np.uint8, offset=header_len)
    if body.size != expected:
        raise FormatError(
            f"{path}: expected {expected} data bytes, found {body.size} "
            f"(offset {header_len})"
        )
    return body.reshape(dims)


def load_idx_images(images_path: str, labels_path: str, downsample: str = "none",
                    limit: int | None = None) -> Dataset:
    """Load an IDX image/label pair; pixels scaled to [0, 1].

    ``downsample='2x'`` applies non-overlapping 2x2 mean pooling (28x28
    becomes 196 flat features); odd image sides are rejected in that mode.
    """
    if downsample not in ("none", "2x"):
        raise ValueError("downsample must be 'none' or '2x'")
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images_path}: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    n, h, w = images.shape
    pix = images.astype(np.float64) / 255.0
    if downsample == "2x":
        if h % 2 or w % 2:
            raise FormatError(f"{images_path}: odd image size {h}x{w} for 2x mode")
        pix = pix.reshape(n, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
    features = pix.reshape(n, -1)
    labels = labels.astype(np.int64)
    return Dataset(features, labels, int(labels.max()) + 1,
                   provenance=f"idx({images_path})")


def load_dense_features(path: str, has_labels: bool = False,
                        delimiter: str = ",") -> Dataset:
    """Parse a rectangular numeric text table; label in the last column when
    flagged. Ragged or non-numeric rows are rejected with their line number."""
    rows = []
    width = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(delimiter)
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise FormatError(
                    f"{path}:{lineno}: ragged row ({len(cells)} cells, expected {width})"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from exc
    if not rows:
        raise FormatError(f"{path}: empty file")
    table = np.asarray(rows, dtype=np.float64)
    labels = None
    class_count = 1
    if has_labels:
        if table.shape[1] < 2:
            raise FormatError(f"{path}: need at least one feature column plus label")
        labels = table[:, -1].astype(np.int64)
        if np.any(labels != table[:, -1]):
            raise FormatError(f"{path}: non-integer label column")
        table = table[:, :-1]
        class_count = int(labels.max()) + 1
    return Dataset(table, labels, class_count, provenance=f"dense({path})")


def save_dense_features(path: str, dataset: Dataset, delimiter: str = ",") -> None:
    """Write features (and labels, when present) back out in the same
    delimited layout load_dense_features reads."""
    with open(path, "w") as f:
        for i in range(dataset.n):
            cells = [repr(float(v)) for v in dataset.features[i]]
            if dataset.labels is not None:
                cells.append(str(int(dataset.labels[i])))
            f.write(delimiter.join(cells) + "\n")
