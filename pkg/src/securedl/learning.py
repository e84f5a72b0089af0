"""Plaintext learning substrate: MLP, loss/gradient, local SGD, datasets."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IdxFormatError

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


@dataclass
class Hyperparams:
    lr: float = 0.01  # local learning rate (beta)
    global_lr: float = 1.0  # alpha; aggregation averages parameters directly
    batch_size: int = 128
    local_epochs: int = 1
    clip: float = 1.0  # G, infinity-norm bound applied before sharing
    hidden: int = 32

    def validate(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.local_epochs < 1 or self.clip <= 0:
            raise ConfigError(f"invalid hyperparameters: {self}")
        if self.global_lr != 1.0:
            raise ConfigError("global learning rate is fixed at 1.0")


@dataclass
class Dataset:
    x: np.ndarray  # (N, features) float64
    y: np.ndarray  # (N,) int64
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or len(self.x) != len(self.y):
            raise ValueError(f"features {self.x.shape} do not match labels {self.y.shape}")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx], self.n_classes, self.split)


# -- model ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpModel:
    """Two-layer MLP, sigmoid hidden layer, softmax output, parameters kept flat."""

    n_in: int
    n_hidden: int
    n_out: int

    @property
    def shapes(self):
        return [(self.n_in, self.n_hidden), (self.n_hidden,), (self.n_hidden, self.n_out), (self.n_out,)]

    @property
    def dim(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes)

    def unflatten(self, theta: np.ndarray):
        out, pos = [], 0
        for s in self.shapes:
            size = int(np.prod(s))
            out.append(theta[pos:pos + size].reshape(s))
            pos += size
        return out

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """Glorot-uniform weights, zero biases."""
        parts = []
        for s in self.shapes:
            if len(s) == 2:
                limit = np.sqrt(6.0 / (s[0] + s[1]))
                parts.append(rng.uniform(-limit, limit, size=s).ravel())
            else:
                parts.append(np.zeros(s))
        return np.concatenate(parts)

    def forward(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self._forward(theta, x)[1]

    def _forward(self, theta, x):
        w1, b1, w2, b2 = self.unflatten(theta)
        hidden = _sigmoid(x @ w1 + b1)
        logits = hidden @ w2 + b2
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        return hidden, probs

    def loss_and_grad(self, theta: np.ndarray, x: np.ndarray, y: np.ndarray):
        """Mean cross-entropy over the batch and its gradient w.r.t. the flat parameters."""
        w1, b1, w2, b2 = self.unflatten(theta)
        hidden, probs = self._forward(theta, x)
        m = len(y)
        loss = -np.mean(np.log(np.clip(probs[np.arange(m), y], 1e-300, None)))
        d_logits = probs.copy()
        d_logits[np.arange(m), y] -= 1.0
        d_logits /= m
        g_w2 = hidden.T @ d_logits
        g_b2 = d_logits.sum(axis=0)
        d_hidden = (d_logits @ w2.T) * hidden * (1.0 - hidden)
        g_w1 = x.T @ d_hidden
        g_b1 = d_hidden.sum(axis=0)
        return loss, np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])

    def loss(self, theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        probs = self.forward(theta, x)
        return float(-np.mean(np.log(np.clip(probs[np.arange(len(y)), y], 1e-300, None))))

    def accuracy(self, theta: np.ndarray, data: Dataset) -> float:
        if len(data) == 0:
            return 0.0
        return float(np.mean(np.argmax(self.forward(theta, data.x), axis=1) == data.y))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def clip_update(theta: np.ndarray, bound: float) -> np.ndarray:
    return np.clip(theta, -bound, bound)


def local_update(model: MlpModel, theta: np.ndarray, data: Dataset, hyper: Hyperparams,
                 rng: np.random.Generator, labels: np.ndarray | None = None) -> np.ndarray:
    """Minibatch SGD from ``theta`` over the client's data; returns clipped parameters.

    ``labels`` overrides ``data.y`` (used by label-flipping clients).
    """
    y_all = data.y if labels is None else labels
    theta = theta.copy()
    n = len(data)
    for _ in range(hyper.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            _, grad = model.loss_and_grad(theta, data.x[idx], y_all[idx])
            theta -= hyper.lr * grad
    return clip_update(theta, hyper.clip)


# -- datasets ------------------------------------------------------------------------------

def iid_partition(data: Dataset, n: int, seed: int = 0) -> list[Dataset]:
    if n < 1:
        raise ConfigError("need at least one shard")
    order = np.random.default_rng(seed).permutation(len(data))
    return [data.subset(np.sort(part)) for part in np.array_split(order, n)]


def synth_blobs(n_samples: int, d: int = 20, n_classes: int = 4, seed: int = 0,
                radius: float = 4.0, split: str = "train") -> Dataset:
    """Unit-variance Gaussian blob per class around centres at distance ``radius`` from 0.

    Centres depend only on ``(d, n_classes)``, so train and test draws made
    with different seeds come from the same distribution.
    """
    centres = np.random.default_rng([d, n_classes, 0xB10B]).normal(size=(n_classes, d))
    centres *= radius / np.linalg.norm(centres, axis=1, keepdims=True)
    rng = np.random.default_rng(seed)
    y = rng.integers(0, n_classes, size=n_samples)
    x = centres[y] + rng.normal(size=(n_samples, d))
    return Dataset(x, y, n_classes, split)


def _open_maybe_gz(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx(path) -> np.ndarray:
    """Parse an IDX image (0x803) or label (0x801) file, optionally gzipped.

    Images come back as float64 in [0, 1] with shape (N, rows*cols); labels as int64.
    """
    raw = _open_maybe_gz(Path(path))
    if len(raw) < 8:
        raise IdxFormatError("file too short for an IDX header", len(raw))
    magic, count = struct.unpack_from(">II", raw, 0)
    if magic == IDX_IMAGES:
        if len(raw) < 16:
            raise IdxFormatError("truncated image header", len(raw))
        rows, cols = struct.unpack_from(">II", raw, 8)
        need = 16 + count * rows * cols
        if len(raw) < need:
            raise IdxFormatError(f"truncated image data: expected {need} bytes", len(raw))
        pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
        return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    if magic == IDX_LABELS:
        need = 8 + count
        if len(raw) < need:
            raise IdxFormatError(f"truncated label data: expected {need} bytes", len(raw))
        return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    raise IdxFormatError(f"bad IDX magic 0x{magic:08x}", 0)


def write_idx(path, array: np.ndarray, compress: bool | None = None) -> None:
    """Write uint8 images (N, rows, cols) or labels (N,) in IDX format."""
    array = np.asarray(array, dtype=np.uint8)
    if array.ndim == 3:
        header = struct.pack(">IIII", IDX_IMAGES, *array.shape)
    elif array.ndim == 1:
        header = struct.pack(">II", IDX_LABELS, array.shape[0])
    else:
        raise ValueError("IDX writer takes (N, rows, cols) images or (N,) labels")
    payload = header + array.tobytes()
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    path.write_bytes(gzip.compress(payload, mtime=0) if compress else payload)


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_mnist(directory, split: str = "train", limit: int | None = None) -> Dataset:
    directory = Path(directory)
    images, labels = (load_idx(_find(directory, s)) for s in MNIST_FILES[split])
    if len(images) != len(labels):
        raise IdxFormatError(f"{len(images)} images but {len(labels)} labels", 0)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    return Dataset(images, labels, 10, split)
