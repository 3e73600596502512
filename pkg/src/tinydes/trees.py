"""CART trees on flat preorder node arrays, and the two-forest pool.

Node layout: ``feature[i] < 0`` marks a leaf whose class id sits in
``jump[i]``. Internal nodes send ``x[feature] <= threshold`` to node ``i+1``
and everything else to node ``jump[i]`` (an absolute index within the tree).
This is the exact record the compact binary format stores, so the training
graph and the embedded interpreter walk identical structures.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._rng import SplitMix64, derive_seed
from .errors import CapacityError, ModelCorruptError
from .data import Dataset

LEAF = -1


@dataclass(frozen=True)
class DecisionTree:
    feature: np.ndarray  # int16 [n_nodes]; -1 marks a leaf
    threshold: np.ndarray  # float32 [n_nodes]; 0 for leaves
    jump: np.ndarray  # uint16 [n_nodes]; right child index, or class id at leaves
    depth: int
    n_classes: int

    def __post_init__(self):
        f = np.ascontiguousarray(self.feature, dtype=np.int16)
        t = np.ascontiguousarray(self.threshold, dtype=np.float32)
        j = np.ascontiguousarray(self.jump, dtype=np.uint16)
        for arr in (f, t, j):
            arr.flags.writeable = False
        object.__setattr__(self, "feature", f)
        object.__setattr__(self, "threshold", t)
        object.__setattr__(self, "jump", j)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def validate(self) -> None:
        """Full traversal check of the preorder/jump invariants."""
        n = self.n_nodes
        seen = np.zeros(n, dtype=bool)
        stack = [(0, 0)]
        max_depth = 0
        while stack:
            pos, d = stack.pop()
            if not (0 <= pos < n) or seen[pos]:
                raise ModelCorruptError(f"node index {pos} out of range or revisited")
            seen[pos] = True
            max_depth = max(max_depth, d)
            if self.feature[pos] < 0:
                continue
            right = int(self.jump[pos])
            if not (pos < right < n):
                raise ModelCorruptError(f"node {pos}: right child {right} violates preorder")
            stack.append((right, d + 1))
            stack.append((pos + 1, d + 1))
        if not seen.all():
            raise ModelCorruptError("unreachable nodes in tree")
        if max_depth > self.depth:
            raise ModelCorruptError(f"observed depth {max_depth} exceeds recorded {self.depth}")


@dataclass(frozen=True)
class ForestSpec:
    n_trees: int
    max_depth: int


@dataclass(frozen=True)
class PoolConfig:
    forests: tuple[ForestSpec, ...] = (ForestSpec(25, 10), ForestSpec(20, 5))
    max_features: int | None = None  # None: floor(sqrt(n_features))

    @property
    def pool_size(self) -> int:
        return sum(f.n_trees for f in self.forests)


@dataclass(frozen=True)
class ClassifierPool:
    trees: tuple[DecisionTree, ...]
    origins: tuple[str, ...]  # forest tag per tree, "A", "B", ...
    seed: int

    @property
    def pool_size(self) -> int:
        return len(self.trees)

    @property
    def n_classes(self) -> int:
        return self.trees[0].n_classes

    def fingerprint(self) -> int:
        """CRC32 over all node bytes; identifies a pool across bench rows."""
        crc = 0
        for t in self.trees:
            crc = zlib.crc32(t.feature.tobytes(), crc)
            crc = zlib.crc32(t.threshold.tobytes(), crc)
            crc = zlib.crc32(t.jump.tobytes(), crc)
        return crc

    def node_bytes(self) -> int:
        return 8 * sum(t.n_nodes for t in self.trees)


def _majority(counts: np.ndarray) -> int:
    # ties resolve to the smallest class id
    return int(np.argmax(counts))


def train_tree(data: Dataset, sample_indices, max_depth: int, max_features: int,
               rng_seed: int) -> DecisionTree:
    """Greedy CART growth over the given (possibly repeated) sample indices.

    At each node ``max_features`` distinct candidate features are drawn from a
    seeded stream; the split maximizing the exact Gini score is taken, with
    ties toward the smaller feature id and threshold. Growth stops at
    ``max_depth``, node purity, or when no split reduces impurity.
    """
    idx0 = np.asarray(sample_indices, dtype=np.int64)
    if idx0.size == 0:
        raise ValueError("sample_indices must be non-empty")
    X = data.features
    y_all = data.labels.astype(np.int64)
    n_classes = data.n_classes
    rng = SplitMix64(rng_seed)

    feat_out: list[int] = []
    thr_out: list[float] = []
    jump_out: list[int] = []

    def emit(f: int, t: float, j: int) -> int:
        feat_out.append(f)
        thr_out.append(t)
        jump_out.append(j)
        return len(feat_out) - 1

    def grow(idx: np.ndarray, depth: int) -> None:
        y = y_all[idx]
        counts = np.bincount(y, minlength=n_classes)
        majority = _majority(counts)
        if depth >= max_depth or counts[majority] == idx.size:
            emit(LEAF, 0.0, majority)
            return
        cands = rng.sample_sorted(data.n_features, max_features)
        sub = np.ascontiguousarray(X[idx][:, cands])
        col, thr, score, found = _kernels.best_split(sub, y, n_classes)
        if found:
            parent_score = float(np.square(counts.astype(np.int64)).sum()) / idx.size
            if score <= parent_score:
                found = False
        if not found:
            emit(LEAF, 0.0, majority)
            return
        feature = cands[col]
        mask = X[idx, feature] <= np.float32(thr)
        left, right = idx[mask], idx[~mask]
        pos = emit(feature, thr, 0)
        grow(left, depth + 1)
        jump_out[pos] = len(feat_out)
        grow(right, depth + 1)

    grow(idx0, 0)
    if len(feat_out) > 65535:
        raise CapacityError(f"tree grew {len(feat_out)} nodes; the 16-bit node index caps at 65535")
    return DecisionTree(
        np.array(feat_out, dtype=np.int16),
        np.array(thr_out, dtype=np.float32),
        np.array(jump_out, dtype=np.uint16),
        depth=max_depth,
        n_classes=n_classes,
    )


def predict_tree(t: DecisionTree, x) -> tuple[int, int]:
    """Walk one sample from the root; returns (class id, nodes visited)."""
    vec = np.asarray(x, dtype=np.float32).ravel()
    n = t.n_nodes
    pos = 0
    visits = 0
    while True:
        visits += 1
        if visits > n:
            raise ModelCorruptError("tree walk did not terminate")
        f = int(t.feature[pos])
        if f < 0:
            return int(t.jump[pos]), visits
        if f >= vec.shape[0]:
            raise ModelCorruptError(f"node {pos} references feature {f} beyond input length")
        nxt = pos + 1 if vec[f] <= t.threshold[pos] else int(t.jump[pos])
        if not (pos < nxt < n):
            raise ModelCorruptError(f"node {pos} jumps to invalid index {nxt}")
        pos = nxt


def predict_batch(t: DecisionTree, X) -> tuple[np.ndarray, np.ndarray]:
    """Kernel-backed bulk version of :func:`predict_tree`."""
    mat = np.ascontiguousarray(X, dtype=np.float32)
    labels, visits = _kernels.tree_walk(t.feature, t.threshold, t.jump, mat)
    if (labels < 0).any():
        raise ModelCorruptError("tree walk hit an out-of-range node")
    return labels, visits


def bootstrap_indices(rng: SplitMix64, n: int) -> np.ndarray:
    """n draws with replacement from range(n)."""
    return (rng.next_block(n) % np.uint64(n)).astype(np.int64)


def generate_pool(train: Dataset, config: PoolConfig | None = None, seed: int = 0) -> ClassifierPool:
    """Train the configured forests on seeded bootstraps of ``train``.

    Per-tree streams derive from ``seed XOR mix64(tree_index)`` so the pool is
    identical whether trees are trained serially or in parallel.
    """
    config = config or PoolConfig()
    max_features = config.max_features or max(1, int(np.floor(np.sqrt(train.n_features))))
    max_features = min(max_features, train.n_features)
    trees = []
    origins = []
    tree_index = 0
    for fi, forest in enumerate(config.forests):
        tag = chr(ord("A") + fi)
        for _ in range(forest.n_trees):
            stream = SplitMix64(derive_seed(seed, tree_index))
            boot = bootstrap_indices(stream, train.n_samples)
            grow_seed = stream.next()
            trees.append(train_tree(train, boot, forest.max_depth, max_features, grow_seed))
            origins.append(tag)
            tree_index += 1
    return ClassifierPool(tuple(trees), tuple(origins), seed)
