"""Synthetic two-class data with shared/unique client pools, plus poisoning.

The generator mimics how the client datasets are laid out in a cross-silo
deployment: a global pool is partitioned into a shared pool (a configurable
fraction) and a unique pool; the unique pool is divided evenly across clients
and the shared pool is sampled with replacement per client, topping each
client up to the same per-class count. Every pool sample carries an integer
ID so tests can check that two clients only ever overlap inside the shared
pool.

Features are class-conditional Gaussians separated along the diagonal
direction, with unit covariance, so class separation is a single scalar knob
and label flipping perturbs gradients measurably. The public set, the client
pools, and the held-out evaluation set all share one distribution; the
evaluation set is a fresh draw so global accuracy is read off samples nobody
trained on.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .nn import LabeledDataset


@dataclass(frozen=True)
class ClientData:
    """One client's private shard and the pool IDs it was assembled from."""

    client_id: int
    data: LabeledDataset
    sample_ids: np.ndarray  # int64, aligned with data rows


def _gaussian_class(rng: np.random.Generator, n: int, dim: int, label: int,
                    class_sep: float) -> np.ndarray:
    sign = 1.0 if label == 0 else -1.0
    mean = sign * class_sep / 2.0 / np.sqrt(dim) * np.ones(dim)
    return rng.normal(loc=mean, scale=1.0, size=(n, dim))


def _make_labeled(rng: np.random.Generator, n_per_class: int, dim: int,
                  class_sep: float, name: str) -> LabeledDataset:
    feats = np.vstack([
        _gaussian_class(rng, n_per_class, dim, 0, class_sep),
        _gaussian_class(rng, n_per_class, dim, 1, class_sep),
    ])
    labels = np.repeat([0, 1], n_per_class)
    order = rng.permutation(2 * n_per_class)
    return LabeledDataset(feats[order], labels[order], name)


def make_datasets(n_clients: int, per_client_samples: int,
                  shared_pool_split: float, public_samples: int,
                  input_dim: int, class_sep: float, seed: int,
                  pool_per_class: int | None = None,
                  eval_samples: int = 0,
                  ) -> tuple[LabeledDataset, list[ClientData], LabeledDataset]:
    """Generate the public dataset, one private shard per client, and a
    held-out evaluation set.

    per_client_samples, public_samples and eval_samples count samples per
    class. The default pool size, n_clients * per_client_samples per class,
    makes each client's shared/unique composition match shared_pool_split
    exactly. With eval_samples=0 the evaluation set is an alias of the
    public set rather than a fresh draw.
    """
    if n_clients < 1:
        raise ConfigError("need at least one client")
    if not 0 < shared_pool_split < 1:
        raise ConfigError("shared_pool_split must lie strictly in (0, 1)")
    if per_client_samples < 1 or public_samples < 1:
        raise ConfigError("sample counts must be positive")
    if pool_per_class is None:
        pool_per_class = n_clients * per_client_samples

    rng = np.random.default_rng(seed)
    public = _make_labeled(rng, public_samples, input_dim, class_sep, "public")
    eval_set = public
    if eval_samples > 0:
        eval_set = _make_labeled(rng, eval_samples, input_dim, class_sep,
                                 "eval")

    # Global pool, one block per class, every sample tagged with a unique ID.
    pool_feats = {}
    pool_ids = {}
    next_id = 0
    for label in (0, 1):
        pool_feats[label] = _gaussian_class(rng, pool_per_class, input_dim,
                                            label, class_sep)
        pool_ids[label] = np.arange(next_id, next_id + pool_per_class,
                                    dtype=np.int64)
        next_id += pool_per_class

    # Partition each class block into shared and unique pools.
    n_shared = int(shared_pool_split * pool_per_class)
    shared_idx = {}
    unique_idx = {}
    for label in (0, 1):
        order = rng.permutation(pool_per_class)
        shared_idx[label] = order[:n_shared]
        unique_idx[label] = order[n_shared:]

    n_unique_each = (pool_per_class - n_shared) // n_clients
    if n_unique_each == 0:
        raise ConfigError(
            "unique pool too small to give every client a non-empty slice"
        )
    if n_unique_each > per_client_samples:
        raise ConfigError(
            "unique slice exceeds per_client_samples; shrink the pool"
        )
    n_shared_draw = per_client_samples - n_unique_each
    if n_shared_draw > 0 and n_shared == 0:
        raise ConfigError("shared pool is empty but shared draws are needed")

    clients = []
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(n_clients)):
        crng = np.random.default_rng(child)
        feats = []
        labels = []
        ids = []
        for label in (0, 1):
            mine = unique_idx[label][k * n_unique_each:(k + 1) * n_unique_each]
            take = mine
            if n_shared_draw > 0:
                drawn = crng.choice(shared_idx[label], size=n_shared_draw,
                                    replace=True)
                take = np.concatenate([mine, drawn])
            feats.append(pool_feats[label][take])
            labels.append(np.full(len(take), label, dtype=np.int64))
            ids.append(pool_ids[label][take])
        feats = np.vstack(feats)
        labels = np.concatenate(labels)
        ids = np.concatenate(ids)
        order = crng.permutation(len(labels))
        clients.append(ClientData(
            client_id=k,
            data=LabeledDataset(feats[order], labels[order], f"client-{k}"),
            sample_ids=ids[order],
        ))
    return public, clients, eval_set


def poison_labels(data: LabeledDataset, flip_fraction: float, mode: str,
                  seed: int) -> LabeledDataset:
    """Label-flipping attack; returns a poisoned copy, the input is untouched.

    targeted: floor(flip_fraction * |class-0|) labels flipped 0 -> 1.
    untargeted: floor(flip_fraction * |data|) uniformly chosen labels inverted.
    """
    if not 0 <= flip_fraction <= 1:
        raise InputError("flip_fraction must lie in [0, 1]")
    labels = data.labels.copy()
    rng = np.random.default_rng(seed)
    if mode == "targeted":
        source = np.flatnonzero(labels == 0)
        k = int(flip_fraction * len(source))
        if k:
            labels[rng.choice(source, size=k, replace=False)] = 1
    elif mode == "untargeted":
        k = int(flip_fraction * len(labels))
        if k:
            hit = rng.choice(len(labels), size=k, replace=False)
            labels[hit] = 1 - labels[hit]
    else:
        raise InputError(f"unknown attack mode {mode!r}")
    return LabeledDataset(data.features.copy(), labels, data.name)


# --------------------------------------------------------------------------
# Ingestion hook for externally supplied feature vectors
# --------------------------------------------------------------------------

_FEATURE_FILE_MAGIC = b"FJDS"


def save_feature_file(path: str, data: LabeledDataset) -> None:
    """Record format: magic, u64 count, u64 dim, then per record
    dim little-endian float64 features followed by a u8 label."""
    n, dim = data.features.shape
    with open(path, "wb") as fh:
        fh.write(_FEATURE_FILE_MAGIC + struct.pack("<QQ", n, dim))
        for row, label in zip(data.features, data.labels):
            fh.write(row.astype("<f8").tobytes() + struct.pack("<B", label))


def load_feature_file(path: str) -> LabeledDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _FEATURE_FILE_MAGIC:
        raise InputError("not a feature-vector file (bad magic)")
    n, dim = struct.unpack_from("<QQ", raw, 4)
    record = 8 * dim + 1
    if len(raw) != 20 + n * record:
        raise InputError("feature-vector file is truncated")
    feats = np.empty((n, dim))
    labels = np.empty(n, dtype=np.int64)
    pos = 20
    for i in range(n):
        feats[i] = np.frombuffer(raw, dtype="<f8", count=dim, offset=pos)
        labels[i] = raw[pos + 8 * dim]
        pos += record
    return LabeledDataset(feats, labels, "ingested")
