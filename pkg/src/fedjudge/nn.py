"""Minimal fully-connected classifier with per-batch gradient traces.

The network is a tanh MLP (input -> hidden layers -> 2 logits) trained with
Adam on mean cross-entropy. Parameters live in a single flat float64 vector
whose layout is fixed by the architecture config: for each layer, the weight
matrix in row-major order (fan_in x fan_out) followed by the bias vector.
That layout is what makes gradient features comparable across processes.

Training exposes the gradient used at every batch step; ``observe_gradients``
produces the same per-batch gradients without ever updating the parameters.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ArchConfig:
    """Shape of the classifier: input width, hidden widths, two classes."""

    input_dim: int
    hidden: tuple[int, ...] = (8,)
    n_classes: int = 2

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if any(h < 1 for h in self.hidden):
            raise ConfigError(f"zero-width hidden layer in {self.hidden}")
        if self.n_classes != 2:
            raise ConfigError("only 2-class architectures are supported")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden, self.n_classes]

    @property
    def param_count(self) -> int:
        dims = self.layer_dims
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    batch_size: int = 8
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    loss: str = "cross_entropy"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.loss != "cross_entropy":
            raise ConfigError(f"unsupported loss {self.loss!r}")


@dataclass
class LabeledDataset:
    """Feature matrix plus 0/1 class labels."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) == 0:
            raise InputError("dataset must be a non-empty 2-D feature matrix")
        if len(self.labels) != len(self.features):
            raise InputError("features and labels disagree on sample count")
        if self.labels.min() < 0 or self.labels.max() > 1:
            raise InputError("labels must be class indices in {0, 1}")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.name)

    def to_bytes(self) -> bytes:
        """Canonical encoding used for content digests."""
        head = struct.pack("<QQ", *self.features.shape)
        body = self.features.astype("<f8").tobytes()
        labs = self.labels.astype("<u1").tobytes()
        return head + body + labs + self.name.encode("utf-8")


@dataclass
class GradTrace:
    """One flat gradient vector per processed batch, in batch order."""

    per_batch: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.per_batch:
            raise InputError("gradient trace must contain at least one batch")

    def __len__(self) -> int:
        return len(self.per_batch)

    def __iter__(self):
        return iter(self.per_batch)

    def as_matrix(self) -> np.ndarray:
        return np.stack(self.per_batch)


def params_to_bytes(params: np.ndarray) -> bytes:
    """Little-endian float64 values preceded by a 64-bit length."""
    params = np.asarray(params, dtype=np.float64)
    return struct.pack("<Q", params.size) + params.astype("<f8").tobytes()


def params_from_bytes(raw: bytes) -> np.ndarray:
    if len(raw) < 8:
        raise InputError("parameter blob too short")
    (n,) = struct.unpack("<Q", raw[:8])
    if len(raw) != 8 + 8 * n:
        raise InputError("parameter blob length mismatch")
    return np.frombuffer(raw[8:], dtype="<f8").astype(np.float64)


def init_model(arch: ArchConfig, seed: int) -> np.ndarray:
    """Seeded Gaussian init, scaled by 1/sqrt(fan_in); biases start at zero."""
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims
    parts = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        parts.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=fan_in * fan_out))
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


def _unpack(arch: ArchConfig, params: np.ndarray):
    dims = arch.layer_dims
    weights, biases = [], []
    ofs = 0
    for i in range(len(dims) - 1):
        fi, fo = dims[i], dims[i + 1]
        weights.append(params[ofs:ofs + fi * fo].reshape(fi, fo))
        ofs += fi * fo
        biases.append(params[ofs:ofs + fo])
        ofs += fo
    return weights, biases


def _forward(arch: ArchConfig, params: np.ndarray, x: np.ndarray):
    weights, biases = _unpack(arch, params)
    acts = [x]
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.tanh(a @ w + b)
        acts.append(a)
    logits = a @ weights[-1] + biases[-1]
    return acts, logits, weights


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_batch(arch: ArchConfig, params: np.ndarray, batch: LabeledDataset):
    if batch.dim != arch.input_dim:
        raise InputError(
            f"feature dim {batch.dim} does not match arch input {arch.input_dim}"
        )
    if params.size != arch.param_count:
        raise InputError(
            f"parameter vector has {params.size} entries, arch needs {arch.param_count}"
        )


def _grad_arrays(arch: ArchConfig, params: np.ndarray,
                 x: np.ndarray, y: np.ndarray) -> np.ndarray:
    acts, logits, weights = _forward(arch, params, x)
    probs = _softmax(logits)
    n = len(x)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    grads_w[-1] = acts[-1].T @ delta
    grads_b[-1] = delta.sum(axis=0)
    upstream = delta @ weights[-1].T
    for i in range(len(weights) - 2, -1, -1):
        dz = (1.0 - acts[i + 1] ** 2) * upstream
        grads_w[i] = acts[i].T @ dz
        grads_b[i] = dz.sum(axis=0)
        upstream = dz @ weights[i].T

    flat = []
    for gw, gb in zip(grads_w, grads_b):
        flat.append(gw.ravel())
        flat.append(gb)
    return np.concatenate(flat)


def compute_gradients(arch: ArchConfig, params: np.ndarray,
                      batch: LabeledDataset) -> np.ndarray:
    """Gradient of mean cross-entropy over the batch; params are not touched."""
    _check_batch(arch, params, batch)
    return _grad_arrays(arch, params, batch.features, batch.labels)


def batch_loss(arch: ArchConfig, params: np.ndarray, batch: LabeledDataset) -> float:
    """Mean cross-entropy of the batch, for gradient checks."""
    _check_batch(arch, params, batch)
    _, logits, _ = _forward(arch, params, batch.features)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(batch)), batch.labels].mean())


def _epoch_perms(n: int, epochs: int, seed: int):
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        yield rng.permutation(n)


def train(arch: ArchConfig, params: np.ndarray, data: LabeledDataset,
          cfg: TrainConfig) -> tuple[np.ndarray, GradTrace]:
    """Adam training that records the gradient at every batch step.

    Deterministic for a given cfg.seed: the seed fixes the per-epoch shuffle
    (the last partial batch is kept). Returns the updated parameter vector
    and the trace; the input vector is left untouched.
    """
    _check_batch(arch, params, data)
    theta = params.astype(np.float64).copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    t = 0
    trace = []
    for perm in _epoch_perms(len(data), cfg.epochs, cfg.seed):
        for start in range(0, len(data), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            g = _grad_arrays(arch, theta, data.features[idx], data.labels[idx])
            trace.append(g)
            t += 1
            m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
            m_hat = m / (1 - ADAM_BETA1 ** t)
            v_hat = v / (1 - ADAM_BETA2 ** t)
            theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return theta, GradTrace(trace)


def observe_gradients(arch: ArchConfig, params: np.ndarray, data: LabeledDataset,
                      batch_size: int, seed: int) -> GradTrace:
    """Per-batch gradients of a single seeded pass, with no parameter updates.

    Shares the shuffle scheme with ``train``, so under the same seed the first
    trace entry matches the first entry ``train`` would record.
    """
    _check_batch(arch, params, data)
    if batch_size < 1:
        raise InputError(f"batch_size must be >= 1, got {batch_size}")
    perm = next(_epoch_perms(len(data), 1, seed))
    trace = []
    for start in range(0, len(data), batch_size):
        idx = perm[start:start + batch_size]
        trace.append(_grad_arrays(arch, params, data.features[idx], data.labels[idx]))
    return GradTrace(trace)


def evaluate_accuracy(arch: ArchConfig, params: np.ndarray,
                      data: LabeledDataset) -> float:
    """Fraction of argmax-correct samples; argmax ties go to the lower class."""
    _check_batch(arch, params, data)
    _, logits, _ = _forward(arch, params, data.features)
    pred = np.argmax(logits, axis=1)
    return float((pred == data.labels).mean())
