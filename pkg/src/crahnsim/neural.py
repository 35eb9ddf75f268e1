"""Three-layer sigmoid MLP with full-batch backpropagation.

Shared by the disaster detector and the spectrum manager. The loss is the
mean squared error over output entries (and over samples for a batch).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyDataset, IoError

_CLIP = 36.0


def sigmoid(z):
    # clipping keeps outputs strictly inside (0, 1) in float64
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_CLIP, _CLIP)))


class Mlp:
    """Weights ``w1`` (hidden x in), ``b1``, ``w2`` (out x hidden), ``b2``.

    A net built with :meth:`uninitialized` has zero weights and gets a
    seeded uniform initialization the first time it is trained.
    """

    def __init__(self, w1, b1, w2, b2, initialized: bool = True):
        self.w1 = np.array(w1, dtype=np.float64, ndmin=2)
        self.b1 = np.array(b1, dtype=np.float64).reshape(-1)
        self.w2 = np.array(w2, dtype=np.float64, ndmin=2)
        self.b2 = np.array(b2, dtype=np.float64).reshape(-1)
        self.initialized = initialized
        nh, ni = self.w1.shape
        no = self.w2.shape[0]
        if min(ni, nh, no) < 1:
            raise DimensionMismatch("all layer sizes must be >= 1")
        if self.b1.shape != (nh,) or self.w2.shape != (no, nh) or self.b2.shape != (no,):
            raise DimensionMismatch(
                f"inconsistent shapes w1{self.w1.shape} b1{self.b1.shape} "
                f"w2{self.w2.shape} b2{self.b2.shape}"
            )
        if not all(np.all(np.isfinite(a)) for a in (self.w1, self.b1, self.w2, self.b2)):
            raise ValueError("weights must be finite")

    @classmethod
    def zeros(cls, n_in: int, n_hidden: int, n_out: int) -> "Mlp":
        return cls(
            np.zeros((n_hidden, n_in)), np.zeros(n_hidden), np.zeros((n_out, n_hidden)), np.zeros(n_out)
        )

    @classmethod
    def uninitialized(cls, n_in: int, n_hidden: int = 5, n_out: int = 1) -> "Mlp":
        net = cls.zeros(n_in, n_hidden, n_out)
        net.initialized = False
        return net

    @classmethod
    def random(cls, n_in, n_hidden, n_out, rng: np.random.Generator, scale: float = 0.5) -> "Mlp":
        return cls(
            rng.uniform(-scale, scale, (n_hidden, n_in)),
            rng.uniform(-scale, scale, n_hidden),
            rng.uniform(-scale, scale, (n_out, n_hidden)),
            rng.uniform(-scale, scale, n_out),
        )

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_out(self) -> int:
        return self.w2.shape[0]

    def copy(self) -> "Mlp":
        return Mlp(self.w1, self.b1, self.w2, self.b2, self.initialized)

    def forward(self, x) -> np.ndarray:
        return forward(self, x)

    def forward_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise DimensionMismatch(f"expected (N, {self.n_in}) inputs, got {X.shape}")
        h = sigmoid(X @ self.w1.T + self.b1)
        return sigmoid(h @ self.w2.T + self.b2)

    # flat parameter view, used by finite-difference checks
    def params(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    def with_params(self, theta) -> "Mlp":
        theta = np.asarray(theta, dtype=np.float64)
        nh, ni, no = self.n_hidden, self.n_in, self.n_out
        sizes = np.cumsum([nh * ni, nh, no * nh])
        w1, b1, w2, b2 = np.split(theta, sizes)
        return Mlp(w1.reshape(nh, ni), b1, w2.reshape(no, nh), b2)

    def to_dict(self) -> dict:
        return {
            "n_in": self.n_in,
            "n_hidden": self.n_hidden,
            "n_out": self.n_out,
            "w1": self.w1.ravel().tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.ravel().tolist(),
            "b2": self.b2.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        try:
            ni, nh, no = int(d["n_in"]), int(d["n_hidden"]), int(d["n_out"])
            arrays = [np.asarray(d[k], dtype=np.float64).ravel() for k in ("w1", "b1", "w2", "b2")]
        except (KeyError, TypeError, ValueError) as exc:
            raise DimensionMismatch(f"bad model document: {exc}") from exc
        expected = [nh * ni, nh, no * nh, no]
        if [a.size for a in arrays] != expected:
            raise DimensionMismatch(f"model arrays have sizes {[a.size for a in arrays]}, expected {expected}")
        w1, b1, w2, b2 = arrays
        return cls(w1.reshape(nh, ni), b1, w2.reshape(no, nh), b2)

    @classmethod
    def from_json(cls, text: str) -> "Mlp":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        path = Path(path)
        try:
            path.write_text(self.to_json(), encoding="utf-8")
        except OSError as exc:
            raise IoError(path, exc.strerror or "cannot write model") from exc

    @classmethod
    def load(cls, path) -> "Mlp":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise IoError(path, exc.strerror or "cannot read model") from exc
        return cls.from_json(text)


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    max_epochs: int = 20000
    target_mse: float = 0.05
    init_scale: float = 0.5

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    @classmethod
    def from_neural(cls, cfg) -> "TrainConfig":
        return cls(cfg.learning_rate, cfg.max_epochs, cfg.target_mse, cfg.init_scale)


@dataclass
class Dataset:
    inputs: np.ndarray  # (N, n_in)
    targets: np.ndarray  # (N, n_out)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.ndim != 2 or self.targets.ndim != 2 or len(self.inputs) != len(self.targets):
            raise DimensionMismatch("inputs and targets must be 2-D with equal row counts")

    @classmethod
    def from_samples(cls, samples: Sequence[tuple], n_in: int | None = None, n_out: int | None = None):
        if not samples:
            return cls(np.zeros((0, n_in or 0)), np.zeros((0, n_out or 0)))
        xs = [np.asarray(x, dtype=np.float64).ravel() for x, _ in samples]
        ts = [np.asarray(t, dtype=np.float64).ravel() for _, t in samples]
        if len({x.size for x in xs}) != 1 or len({t.size for t in ts}) != 1:
            raise DimensionMismatch("samples have inconsistent vector lengths")
        return cls(np.vstack(xs), np.vstack(ts))

    def __len__(self) -> int:
        return len(self.inputs)


class Gradients(NamedTuple):
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])


class TrainResult(NamedTuple):
    net: Mlp
    final_mse: float
    epochs_used: int
    history: np.ndarray  # training MSE evaluated at the start of each epoch


def forward(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.n_in,):
        raise DimensionMismatch(f"expected input of length {net.n_in}, got shape {x.shape}")
    h = sigmoid(net.w1 @ x + net.b1)
    return sigmoid(net.w2 @ h + net.b2)


def sample_loss(net: Mlp, x, target) -> float:
    y = forward(net, x)
    t = np.asarray(target, dtype=np.float64)
    return float(np.mean((y - t) ** 2))


def gradient(net: Mlp, x, target) -> Gradients:
    """Backprop gradient of the single-sample MSE loss."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if x.shape != (net.n_in,) or t.shape != (net.n_out,):
        raise DimensionMismatch(
            f"expected x of length {net.n_in} and target of length {net.n_out}, "
            f"got {x.shape} and {t.shape}"
        )
    h = sigmoid(net.w1 @ x + net.b1)
    y = sigmoid(net.w2 @ h + net.b2)
    d_out = (2.0 / net.n_out) * (y - t) * y * (1.0 - y)
    d_hid = (net.w2.T @ d_out) * h * (1.0 - h)
    return Gradients(np.outer(d_hid, x), d_hid, np.outer(d_out, h), d_out)


def mse(net: Mlp, data: Dataset) -> float:
    return float(kernels.batch_mse(net.w1, net.b1, net.w2, net.b2, data.inputs, data.targets))


def train(net: Mlp, data: Dataset, cfg: TrainConfig, rng: np.random.Generator | None = None) -> TrainResult:
    """Full-batch gradient descent until MSE <= target or ``max_epochs``.

    Returns whichever of the final and the best-seen weights has the lower
    training MSE.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if data.inputs.shape[1] != net.n_in or data.targets.shape[1] != net.n_out:
        raise DimensionMismatch(
            f"dataset is {data.inputs.shape[1]}->{data.targets.shape[1]}, net is {net.n_in}->{net.n_out}"
        )
    if not net.initialized:
        if rng is None:
            raise ValueError("an uninitialized net needs an rng")
        net = Mlp.random(net.n_in, net.n_hidden, net.n_out, rng, cfg.init_scale)
    w1, b1, w2, b2, epochs, final, history = kernels.train_full_batch(
        net.w1, net.b1, net.w2, net.b2, data.inputs, data.targets,
        float(cfg.learning_rate), int(cfg.max_epochs), float(cfg.target_mse),
    )
    return TrainResult(Mlp(w1, b1, w2, b2), float(final), int(epochs), np.asarray(history))
