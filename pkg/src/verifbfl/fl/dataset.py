"""Datasets: seeded Gaussian blobs and a flat binary image-set format.

Flat binary layout (little-endian)::

    b"VBFLDS1" | u32 n | u32 num_features | u32 num_classes
    | n records of (num_features bytes of u8 pixels, u8 label)

Pixels load as ``value / 255``.  This mirrors a 100-image, downsampled
MNIST-style subset without shipping image files.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from verifbfl.circuits.fixedpoint import FixedPointConfig, quantize_array
from verifbfl.errors import DecodeError, EmptyDataset

FLAT_MAGIC = b"VBFLDS1"


@dataclass
class Dataset:
    features: np.ndarray  # (n, num_features) float64
    labels: np.ndarray  # (n,) int64
    num_classes: int
    client_id: str = ""
    seed: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError("features must be (n, d) with one label per row")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("label out of range")

    def __len__(self):
        return len(self.labels)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def quantized(self, cfg: FixedPointConfig):
        """List of (int feature list, label) pairs, the circuit's sample format."""
        if len(self) == 0:
            raise EmptyDataset("dataset has no samples")
        q = quantize_array(self.features, cfg)
        return [(list(map(int, row)), int(lab)) for row, lab in zip(q, self.labels)]

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.features.copy(), labels, self.num_classes, self.client_id, self.seed)

    def label_flipped(self) -> "Dataset":
        return self.with_labels((self.labels + 1) % self.num_classes)


def class_centers(num_features: int, num_classes: int, seed: int, separation: float = 3.0) -> np.ndarray:
    rng = np.random.default_rng([seed, 0xC3])
    return rng.normal(scale=separation, size=(num_classes, num_features))


def gaussian_blobs(n: int, num_features: int = 8, num_classes: int = 3, seed: int = 0,
                   centers_seed: int = 0, spread: float = 1.0, separation: float = 3.0,
                   client_id: str = "") -> Dataset:
    """Balanced-ish blobs around centers shared by every caller with ``centers_seed``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    centers = class_centers(num_features, num_classes, centers_seed, separation)
    rng = np.random.default_rng([seed, 0xB1])
    labels = rng.integers(num_classes, size=n)
    feats = centers[labels] + rng.normal(scale=spread, size=(n, num_features))
    return Dataset(feats, labels, num_classes, client_id, seed)


def save_flat(ds: Dataset, path) -> None:
    pix = np.clip(np.rint(ds.features * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(FLAT_MAGIC + struct.pack("<III", len(ds), ds.num_features, ds.num_classes))
        for row, lab in zip(pix, ds.labels):
            fh.write(row.tobytes() + bytes([int(lab)]))


def load_flat(path, client_id: str = "") -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(FLAT_MAGIC)] != FLAT_MAGIC:
        raise DecodeError("not a flat dataset file")
    off = len(FLAT_MAGIC)
    try:
        n, d, c = struct.unpack_from("<III", data, off)
    except struct.error as exc:
        raise DecodeError("truncated header") from exc
    off += 12
    if len(data) - off != n * (d + 1):
        raise DecodeError("record section has the wrong length")
    if c < 1 or c > 255:
        raise DecodeError("bad class count")
    arr = np.frombuffer(data, dtype=np.uint8, offset=off).reshape(n, d + 1)
    labels = arr[:, d].astype(np.int64)
    if n and labels.max() >= c:
        raise DecodeError("label out of range")
    return Dataset(arr[:, :d].astype(np.float64) / 255.0, labels, c, client_id)
