"""Two-layer ReLU network with a frozen sign top layer.

The function is f(x) = (1/sqrt(m)) * sum_s a_s * relu(w_s . x) with
a_s in {-1, +1} fixed at initialization and only the hidden columns w_s
trained. relu'(0) is taken to be 0, so activity means w_s . x > 0 strictly.
Weights are kept as a (d, m) column-major matrix, one column per unit,
together with the frozen initial matrix w0 that defines the lazy ball.
"""

import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .errors import DimensionError, InvalidLabelError
from .numerics import _PROJECT_SHRINK, sample_sign_vec

_CKPT_MAGIC = b"LZNCKPT1"
_CKPT_HEADER = struct.Struct("<IIQd")  # d, m, seed, c0 (NaN when unset)


@dataclass
class NetworkParams:
    """Network state plus the init snapshot that anchors the lazy ball."""

    a: np.ndarray                 # (m,) top-layer signs, float64 -1.0/+1.0
    w: np.ndarray                 # (d, m) hidden weights, column per unit
    w0: np.ndarray                # (d, m) frozen initial weights (read-only)
    seed: int = 0                 # init seed, recorded in checkpoints
    c0: float | None = None      # lazy-ball scale; column radius is c0/sqrt(m)

    @property
    def d(self):
        return self.w.shape[0]

    @property
    def m(self):
        return self.w.shape[1]


def init_network(rng, d, m, c0=None, seed=0):
    """Sample a fresh network: signs first, then one Gaussian column per unit.

    w starts as an exact copy of w0; w0 is marked read-only so later code
    cannot move the ball center by accident.
    """
    if d < 1 or m < 1:
        raise DimensionError(f"need d >= 1 and m >= 1, got d={d}, m={m}")
    a = sample_sign_vec(rng, m)
    # standard_normal((m, d)).T consumes the stream column by column,
    # matching a per-unit sample_gaussian_vec loop draw for draw.
    w0 = rng.standard_normal((m, d)).T.copy(order="F")
    w0.flags.writeable = False
    w = w0.copy(order="F")
    return NetworkParams(a=a, w=w, w0=w0, seed=int(seed), c0=c0)


def _check_input(p, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.d,):
        raise DimensionError(f"input shape {x.shape} does not match d={p.d}")
    return x


def _check_batch(p, x, y=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.d:
        raise DimensionError(f"batch shape {x.shape} does not match d={p.d}")
    if y is None:
        return x
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (x.shape[0],):
        raise DimensionError(f"label shape {y.shape} does not match batch {x.shape[0]}")
    if not np.all(np.abs(y) == 1.0):
        raise InvalidLabelError("labels must be -1 or +1")
    return x, y


def forward(p, x):
    """Network output at a single input."""
    x = _check_input(p, x)
    z = x @ p.w
    return float(np.maximum(z, 0.0) @ p.a / np.sqrt(p.m))


def forward_batch(p, x):
    """Network outputs for a (n, d) batch, returned as (n,)."""
    x = _check_batch(p, x)
    z = x @ p.w
    return np.maximum(z, 0.0) @ p.a / np.sqrt(p.m)


def input_gradient(p, x):
    """Gradient of f with respect to the input, zero at inactive units."""
    x = _check_input(p, x)
    z = x @ p.w
    return p.w @ (p.a * (z > 0.0)) / np.sqrt(p.m)


def input_gradient_batch(p, x):
    """Input gradients for a (n, d) batch, returned as (n, d)."""
    x = _check_batch(p, x)
    z = x @ p.w
    return ((z > 0.0) * p.a) @ p.w.T / np.sqrt(p.m)


def logistic_loss(p, x, y):
    """Mean logistic loss log(1 + exp(-y f(x))) over the batch."""
    x, y = _check_batch(p, x, y)
    f = forward_batch(p, x)
    return float(np.mean(np.logaddexp(0.0, -y * f)))


def accuracy(p, x, y):
    """Fraction of the batch with y * f(x) > 0."""
    x, y = _check_batch(p, x, y)
    f = forward_batch(p, x)
    return float(np.mean(y * f > 0.0))


def weight_gradient(p, x, y):
    """Mean gradient of the logistic loss with respect to w, shape (d, m).

    Column s is the batch mean of -y * sigmoid(-y f(x)) * a_s *
    1[w_s . x > 0] * x / sqrt(m).
    """
    x, y = _check_batch(p, x, y)
    n = x.shape[0]
    z = x @ p.w
    f = np.maximum(z, 0.0) @ p.a / np.sqrt(p.m)
    coef = -y * expit(-y * f) / np.sqrt(p.m)          # (n,)
    return x.T @ ((z > 0.0) * (coef[:, None] * p.a)) / n


def lazy_deviation(p):
    """Largest column move so far: max_s ||w_s - w0_s||."""
    return float(np.linalg.norm(p.w - p.w0, axis=0).max())


def project_weights(p, radius):
    """Pull every column back into the ball of the given radius around w0_s.

    Columns already inside their ball are copied bit-identically, so
    projecting twice gives the same matrix as projecting once. Projected
    columns land just inside the boundary, keeping lazy_deviation within
    radius*(1 + 4*eps).
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    diff = p.w - p.w0
    dist = np.linalg.norm(diff, axis=0)
    outside = dist > radius
    w = p.w.copy(order="F")
    if np.any(outside):
        scale = (radius / dist[outside]) * _PROJECT_SHRINK
        w[:, outside] = p.w0[:, outside] + diff[:, outside] * scale
    return replace(p, w=w)


def cone_scale(p, r):
    """Scale all hidden weights (and the ball center) by r > 0.

    Sign predictions are invariant: f(x; r*w) = r * f(x; w).
    """
    if r <= 0:
        raise ValueError(f"scale must be > 0, got {r}")
    w0 = (p.w0 * r).copy(order="F")
    w0.flags.writeable = False
    return replace(p, w=(p.w * r).copy(order="F"), w0=w0)


def save_checkpoint(p, path):
    """Write params to a binary checkpoint; round-trips bit-exactly.

    Layout: 8-byte magic "LZNCKPT1", little-endian header (u32 d, u32 m,
    u64 seed, f64 c0 with NaN meaning unset), then a as int8[m], then w and
    w0 as float64 in column-major order.
    """
    if not (0 <= int(p.seed) < 2 ** 64):
        raise ValueError(f"checkpoint seed must fit in u64, got {p.seed}")
    c0 = float("nan") if p.c0 is None else float(p.c0)
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(_CKPT_HEADER.pack(p.d, p.m, int(p.seed), c0))
        fh.write(p.a.astype(np.int8).tobytes())
        fh.write(np.asfortranarray(p.w).tobytes(order="F"))
        fh.write(np.asfortranarray(p.w0).tobytes(order="F"))


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    off = 8 + _CKPT_HEADER.size
    if len(raw) < off:
        raise ValueError(f"{path}: truncated checkpoint header")
    d, m, seed, c0 = _CKPT_HEADER.unpack(raw[8:off])
    expect = off + m + 2 * 8 * d * m
    if len(raw) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, found {len(raw)}")
    a = np.frombuffer(raw, dtype=np.int8, count=m, offset=off).astype(np.float64)
    off += m
    w = np.frombuffer(raw, dtype="<f8", count=d * m, offset=off)
    w = w.reshape((d, m), order="F").copy(order="F")
    off += 8 * d * m
    w0 = np.frombuffer(raw, dtype="<f8", count=d * m, offset=off)
    w0 = w0.reshape((d, m), order="F").copy(order="F")
    w0.flags.writeable = False
    return NetworkParams(a=a, w=w, w0=w0, seed=seed,
                         c0=None if np.isnan(c0) else c0)
