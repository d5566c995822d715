"""Isolation forest built from scratch, used as the judge model.

Each tree is grown on an independent seeded subsample by picking a uniform
random dimension and a uniform random split between that dimension's min and
max, until a point is isolated or the height limit ceil(log2(subsample)) is
reached. Scores follow 2^(-E[h(x)] / c(subsample)) with the usual path-length
normalizer c(n); a score strictly above the threshold is anomalous (-1),
anything else benign (+1).
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import InputError
from .features import matrix_to_bytes

EULER_GAMMA = 0.5772156649


@dataclass(frozen=True)
class LeafNode:
    size: int


@dataclass(frozen=True)
class SplitNode:
    dim: int
    value: float
    left: "Node"
    right: "Node"


Node = Union[LeafNode, SplitNode]


@dataclass(frozen=True)
class IsolationTree:
    root: Node


@dataclass(frozen=True)
class JudgeForest:
    trees: tuple[IsolationTree, ...]
    subsample: int
    n_trees: int
    score_threshold: float
    train_digest: bytes


@lru_cache(maxsize=None)
def c_norm(n: int) -> float:
    """Average unsuccessful-search path length of a binary tree of n points.

    c(0) = c(1) = 0 and c(2) = 1 exactly (harmonic number H(1) = 1 is taken
    from the direct sum rather than the log approximation).
    """
    if n < 0:
        raise InputError(f"c_norm needs n >= 0, got {n}")
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    h = math.log(n - 1) + EULER_GAMMA
    return 2.0 * h - 2.0 * (n - 1) / n


def _height_limit(subsample: int) -> int:
    return int(math.ceil(math.log2(subsample)))


def _build(rows: np.ndarray, depth: int, limit: int, rng: np.random.Generator) -> Node:
    n, width = rows.shape
    if n <= 1 or depth >= limit:
        return LeafNode(n)
    # resample the dimension when it has no spread; give up after `width` tries
    for _ in range(width):
        dim = int(rng.integers(width))
        col = rows[:, dim]
        lo = col.min()
        hi = col.max()
        if hi > lo:
            value = float(rng.uniform(lo, hi))
            mask = col < value
            return SplitNode(
                dim,
                value,
                _build(rows[mask], depth + 1, limit, rng),
                _build(rows[~mask], depth + 1, limit, rng),
            )
    return LeafNode(n)


def fit(rows: np.ndarray, n_trees: int = 100, subsample: int = 64,
        seed: int = 0, score_threshold: float = 0.5) -> JudgeForest:
    """Grow n_trees isolation trees on seeded subsamples of the feature rows."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or len(rows) < 2:
        raise InputError("forest training needs at least 2 feature rows")
    if n_trees < 1:
        raise InputError(f"n_trees must be >= 1, got {n_trees}")
    if not 2 <= subsample <= len(rows):
        raise InputError(
            f"subsample must be in [2, {len(rows)}], got {subsample}"
        )
    limit = _height_limit(subsample)
    trees = []
    for child_seed in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child_seed)
        picked = rng.choice(len(rows), size=subsample, replace=False)
        trees.append(IsolationTree(_build(rows[picked], 0, limit, rng)))
    digest = hashlib.sha256(matrix_to_bytes(rows)).digest()
    return JudgeForest(
        trees=tuple(trees),
        subsample=subsample,
        n_trees=n_trees,
        score_threshold=score_threshold,
        train_digest=digest,
    )


def path_length(tree: IsolationTree, x: np.ndarray) -> float:
    """Edges walked to reach x's leaf, plus the leaf-size correction c(size)."""
    node = tree.root
    depth = 0
    while isinstance(node, SplitNode):
        node = node.left if x[node.dim] < node.value else node.right
        depth += 1
    return depth + c_norm(node.size)


def anomaly_score(forest: JudgeForest, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    mean_h = sum(path_length(t, x) for t in forest.trees) / len(forest.trees)
    return float(2.0 ** (-mean_h / c_norm(forest.subsample)))


def predict(forest: JudgeForest, x: np.ndarray) -> int:
    """+1 benign, -1 anomalous; anomalous only on score strictly above threshold."""
    return -1 if anomaly_score(forest, x) > forest.score_threshold else 1


def _node_bytes(node: Node, out: list[bytes]):
    if isinstance(node, LeafNode):
        out.append(b"\x00" + struct.pack("<Q", node.size))
    else:
        out.append(b"\x01" + struct.pack("<Id", node.dim, node.value))
        _node_bytes(node.left, out)
        _node_bytes(node.right, out)


def forest_to_bytes(forest: JudgeForest) -> bytes:
    """Canonical encoding: header, then each tree as a preorder node list."""
    chunks = [
        b"IFOR",
        struct.pack("<IId", forest.n_trees, forest.subsample, forest.score_threshold),
        forest.train_digest,
    ]
    for tree in forest.trees:
        nodes: list[bytes] = []
        _node_bytes(tree.root, nodes)
        chunks.append(struct.pack("<I", len(nodes)))
        chunks.extend(nodes)
    return b"".join(chunks)


def forest_digest(forest: JudgeForest) -> bytes:
    return hashlib.sha256(forest_to_bytes(forest)).digest()


def forest_from_bytes(raw: bytes) -> JudgeForest:
    if raw[:4] != b"IFOR":
        raise InputError("not a serialized forest")
    n_trees, subsample, threshold = struct.unpack_from("<IId", raw, 4)
    ofs = 4 + 16
    digest = raw[ofs:ofs + 32]
    ofs += 32

    seen = [0]

    def read_node(pos: int) -> tuple[Node, int]:
        seen[0] += 1
        tag = raw[pos]
        pos += 1
        if tag == 0:
            (size,) = struct.unpack_from("<Q", raw, pos)
            return LeafNode(size), pos + 8
        dim, value = struct.unpack_from("<Id", raw, pos)
        pos += 12
        left, pos = read_node(pos)
        right, pos = read_node(pos)
        return SplitNode(dim, value, left, right), pos

    trees = []
    for _ in range(n_trees):
        (count,) = struct.unpack_from("<I", raw, ofs)
        ofs += 4
        seen[0] = 0
        root, ofs = read_node(ofs)
        if seen[0] != count:
            raise InputError("forest blob is corrupt: node count mismatch")
        trees.append(IsolationTree(root))
    return JudgeForest(tuple(trees), subsample, n_trees, threshold, digest)
