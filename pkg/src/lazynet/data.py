"""Datasets: IDX image files, downsampling, and unit-sphere inputs.

IDX layout (big-endian):
    images: int32 magic 2051, int32 count, int32 rows, int32 cols,
            then count*rows*cols uint8 pixels in row-major order
    labels: int32 magic 2049, int32 count, then count uint8 labels

Gzipped files are detected by the 1f 8b prefix and inflated transparently.
"""

import gzip
import logging
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (DimensionError, EmptyDatasetError, IdxFormatError,
                     InvalidLabelError)

log = logging.getLogger(__name__)

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049

_DATA_MAGIC = b"LZNDATA1"
_DATA_HEADER = struct.Struct("<IQB")  # d, n, normalized flag

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass
class RawImageSet:
    """Images with digit labels. Pixels are uint8 as parsed from IDX and
    become float64 after downsampling (area averages are fractional)."""

    images: np.ndarray  # (n, h, w)
    labels: np.ndarray  # (n,) uint8


@dataclass
class LabeledDataset:
    """Flattened inputs with -1/+1 labels."""

    x: np.ndarray       # (n, d) float64
    y: np.ndarray       # (n,) int8 in {-1, +1}
    normalized: bool

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]


def read_idx_bytes(path):
    """Read a file, inflating it when gzip-compressed."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx_images(data):
    """Parse an IDX image payload into a (n, h, w) uint8 array."""
    if len(data) < 16:
        raise IdxFormatError(f"image header needs 16 bytes, found {len(data)}")
    magic, n, h, w = struct.unpack(">iiii", data[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"bad image magic {magic}, expected {IMAGE_MAGIC}")
    if n < 0 or h < 1 or w < 1:
        raise IdxFormatError(f"bad image dimensions n={n}, h={h}, w={w}")
    if len(data) != 16 + n * h * w:
        raise IdxFormatError(
            f"image payload is {len(data) - 16} bytes, expected {n * h * w}")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=16)
    return pixels.reshape(n, h, w).copy()


def parse_idx_labels(data):
    """Parse an IDX label payload into a (n,) uint8 array."""
    if len(data) < 8:
        raise IdxFormatError(f"label header needs 8 bytes, found {len(data)}")
    magic, n = struct.unpack(">ii", data[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(f"bad label magic {magic}, expected {LABEL_MAGIC}")
    if n < 0:
        raise IdxFormatError(f"bad label count {n}")
    if len(data) != 8 + n:
        raise IdxFormatError(f"label payload is {len(data) - 8} bytes, expected {n}")
    return np.frombuffer(data, dtype=np.uint8, offset=8).copy()


def encode_idx_images(images):
    """Inverse of parse_idx_images; encode(parse(b)) == b for valid input."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise DimensionError(f"expected (n, h, w) images, got shape {images.shape}")
    n, h, w = images.shape
    return struct.pack(">iiii", IMAGE_MAGIC, n, h, w) + images.tobytes()


def encode_idx_labels(labels):
    """Inverse of parse_idx_labels."""
    labels = np.asarray(labels, dtype=np.uint8)
    if labels.ndim != 1:
        raise DimensionError(f"expected flat labels, got shape {labels.shape}")
    return struct.pack(">ii", LABEL_MAGIC, len(labels)) + labels.tobytes()


def load_raw_images(images_path, labels_path):
    """Load an image/label IDX pair and check the counts agree."""
    images = parse_idx_images(read_idx_bytes(images_path))
    labels = parse_idx_labels(read_idx_bytes(labels_path))
    if len(images) != len(labels):
        raise IdxFormatError(
            f"{len(images)} images but {len(labels)} labels")
    return RawImageSet(images=images, labels=labels)


def extract_binary(raw, pos_digit=1, neg_digit=0):
    """Keep only the two requested digits, preserving example order."""
    if pos_digit == neg_digit:
        raise ValueError("positive and negative digits must differ")
    keep = (raw.labels == pos_digit) | (raw.labels == neg_digit)
    return RawImageSet(images=raw.images[keep], labels=raw.labels[keep])


def _overlap_weights(src, dst):
    """(dst, src) matrix of fractional interval overlaps; rows sum to 1."""
    step = src / dst
    out = np.zeros((dst, src))
    for i in range(dst):
        lo = i * step
        hi = (i + 1) * step
        for r in range(int(np.floor(lo)), min(src, int(np.ceil(hi)))):
            out[i, r] = min(hi, r + 1) - max(lo, r)
    return out / step


def downsample(raw, k):
    """Area-averaged resize of every image to k x k.

    Each output pixel is the mean of its fractional source rectangle, so
    constant images stay constant and k equal to the input side returns the
    images unchanged.
    """
    if k < 1:
        raise DimensionError(f"target side must be >= 1, got {k}")
    n, h, w = raw.images.shape
    if k == h == w:
        return RawImageSet(images=raw.images.copy(), labels=raw.labels.copy())
    rows = _overlap_weights(h, k)
    cols = _overlap_weights(w, k)
    images = np.einsum("ir,nrc,jc->nij", rows,
                       raw.images.astype(np.float64), cols, optimize=True)
    return RawImageSet(images=images, labels=raw.labels.copy())


def to_sphere_dataset(raw, normalize, pos_digit=1, neg_digit=0):
    """Flatten images row-major, scale pixels to [0, 1] and map labels to -1/+1.

    With normalize=True every input is scaled to unit norm; all-zero images
    cannot be normalized, so they are dropped and the count is logged.
    """
    n = len(raw.images)
    if n == 0:
        raise EmptyDatasetError("image set has no examples")
    present = set(np.unique(raw.labels).tolist())
    if not present <= {pos_digit, neg_digit}:
        raise InvalidLabelError(
            f"labels {sorted(present)} are not a subset of "
            f"{{{neg_digit}, {pos_digit}}}")
    x = raw.images.reshape(n, -1).astype(np.float64) / 255.0
    y = np.where(raw.labels == pos_digit, 1, -1).astype(np.int8)
    if normalize:
        norms = np.linalg.norm(x, axis=1)
        zero = norms == 0.0
        if np.any(zero):
            log.warning("dropping %d all-zero image(s) that cannot be normalized",
                        int(zero.sum()))
            x, y, norms = x[~zero], y[~zero], norms[~zero]
            if len(x) == 0:
                raise EmptyDatasetError("all images were zero under normalize")
        x = x / norms[:, None]
    return LabeledDataset(x=x, y=y, normalized=bool(normalize))


def synth_sphere(rng, d, n, margin):
    """Two balanced classes on the unit sphere around a fixed separator.

    Every x is y*margin*mu + sqrt(1 - margin^2)*g with mu the first basis
    vector and g a unit vector drawn orthogonal to mu, so <mu, x> is exactly
    y*margin and ||x|| = 1. Label order is a seeded shuffle of an exactly
    balanced -1/+1 split (the +1 class gets the extra example when n is odd).
    """
    if d < 2:
        raise DimensionError(f"need d >= 2 for an orthogonal component, got {d}")
    if n < 1:
        raise EmptyDatasetError(f"need n >= 1, got {n}")
    if not 0.0 <= margin <= 1.0:
        raise ValueError(f"margin must lie in [0, 1], got {margin}")
    y = np.ones(n, dtype=np.int8)
    y[(n + 1) // 2:] = -1
    y = y[rng.permutation(n)]
    g = rng.standard_normal((n, d))
    g[:, 0] = 0.0                      # orthogonal to mu = e_1
    gn = np.linalg.norm(g, axis=1)
    if np.any(gn == 0.0):
        raise ValueError("degenerate zero noise draw")
    x = np.sqrt(1.0 - margin ** 2) * (g / gn[:, None])
    x[:, 0] = margin * y
    return LabeledDataset(x=x, y=y, normalized=True)


def save_dataset(ds, path):
    """Write a dataset cache; round-trips bit-exactly.

    Layout: 8-byte magic "LZNDATA1", little-endian header (u32 d, u64 n,
    u8 normalized), float64 inputs row-major, then int8 labels.
    """
    with open(path, "wb") as fh:
        fh.write(_DATA_MAGIC)
        fh.write(_DATA_HEADER.pack(ds.d, ds.n, int(ds.normalized)))
        fh.write(np.ascontiguousarray(ds.x, dtype=np.float64).tobytes())
        fh.write(ds.y.astype(np.int8).tobytes())


def load_dataset(path):
    """Read a dataset cache written by save_dataset."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _DATA_MAGIC:
        raise ValueError(f"{path}: not a dataset cache")
    off = 8 + _DATA_HEADER.size
    if len(raw) < off:
        raise ValueError(f"{path}: truncated dataset header")
    d, n, normalized = _DATA_HEADER.unpack(raw[8:off])
    expect = off + 8 * n * d + n
    if len(raw) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, found {len(raw)}")
    x = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off)
    x = x.reshape(n, d).copy()
    y = np.frombuffer(raw, dtype=np.int8, count=n, offset=off + 8 * n * d).copy()
    return LabeledDataset(x=x, y=y, normalized=bool(normalized))


def find_mnist_dir():
    """Directory holding the four MNIST IDX files, or None.

    Checks $LAZYNET_MNIST_DIR first, then ./data/mnist. Gzipped files are
    accepted. Downloading is out of scope; point the env var at local files.
    """
    candidates = []
    if os.environ.get("LAZYNET_MNIST_DIR"):
        candidates.append(os.environ["LAZYNET_MNIST_DIR"])
    candidates.append(os.path.join("data", "mnist"))
    for root in candidates:
        paths = mnist_paths(root)
        if paths is not None:
            return root
    return None


def mnist_paths(root):
    """Resolve the four IDX paths under root, or None if any is missing."""
    out = {}
    for key, name in MNIST_FILES.items():
        plain = os.path.join(root, name)
        gz = plain + ".gz"
        if os.path.exists(plain):
            out[key] = plain
        elif os.path.exists(gz):
            out[key] = gz
        else:
            return None
    return out
