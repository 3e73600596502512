"""The six selection methods over a shared pool and selection set.

Single Best and Static Selection pick at train time; KNORA-U/E pick per
query from nearest-neighbor regions; the clustering method precomputes one
accuracy-then-diversity ensemble per k-means cell; Oracle is the ceiling.

Every tie anywhere resolves to the smallest index or class id, so results
are independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cluster import KMeansModel, assign, assign_batch
from .data import Dataset, Standardizer, apply_standardizer
from .errors import SelectionError, ShapeError, VoteError
from .trees import ClassifierPool, predict_batch, predict_tree


@dataclass(frozen=True)
class Dsel:
    """Standardized selection samples plus the pool's correctness cache."""

    samples: np.ndarray  # float32 [n_dsel, n_features]
    labels: np.ndarray  # uint16 [n_dsel]
    correctness: np.ndarray  # bool [pool_size, n_dsel]

    @property
    def pool_size(self) -> int:
        return self.correctness.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class CompetenceModel:
    kmeans: KMeansModel
    per_cluster_accuracy: np.ndarray  # float64 [k, pool_size]
    per_cluster_ensemble: np.ndarray  # uint16 [k, J], rows sorted ascending
    n_acc: int
    j: int


@dataclass(frozen=True)
class SelectionResult:
    label: int
    votes: np.ndarray  # float64 [n_classes]
    ensemble_used: np.ndarray  # classifier indices
    cost: int  # nodes visited (+ one unit per centroid distance where applicable)


def correctness_matrix(pool: ClassifierPool, X, y) -> np.ndarray:
    """bool [pool_size, n]: entry (c, s) means classifier c gets sample s right."""
    mat = np.ascontiguousarray(X, dtype=np.float32)
    target = np.asarray(y, dtype=np.int64)
    out = np.empty((pool.pool_size, mat.shape[0]), dtype=bool)
    for c, tree in enumerate(pool.trees):
        labels, _ = predict_batch(tree, mat)
        out[c] = labels == target
    return out


def build_dsel(pool: ClassifierPool, dsel_data: Dataset, s: Standardizer) -> Dsel:
    std = apply_standardizer(s, dsel_data.features)
    corr = correctness_matrix(pool, std, dsel_data.labels)
    return Dsel(np.ascontiguousarray(std, dtype=np.float32), dsel_data.labels.copy(), corr)


def single_best(dsel: Dsel) -> int:
    """Classifier with the highest selection-set accuracy; ties to smaller index."""
    if dsel.n_samples == 0:
        raise SelectionError("empty selection set")
    acc = dsel.correctness.mean(axis=1)
    return int(np.argmax(acc))


def static_selection(dsel: Dsel, pct: float) -> np.ndarray:
    """The floor(pct * pool_size) most accurate classifiers, ascending indices."""
    if not (0.0 < pct <= 1.0):
        raise SelectionError(f"pct must be in (0, 1], got {pct}")
    m = int(np.floor(pct * dsel.pool_size))
    if m == 0:
        raise SelectionError(f"pct {pct} selects zero of {dsel.pool_size} classifiers")
    acc = dsel.correctness.mean(axis=1)
    order = np.lexsort((np.arange(dsel.pool_size), -acc))
    return np.sort(order[:m])


def _region_indices(dsel: Dsel, x: np.ndarray, k: int) -> np.ndarray:
    """k nearest selection samples, ordered near to far, ties to smaller index."""
    if dsel.n_samples < k:
        raise SelectionError(f"region size {k} exceeds {dsel.n_samples} selection samples")
    q = x.reshape(1, -1)
    d2 = _kernels.pairwise_sqdist(q, dsel.samples)[0]
    order = np.lexsort((np.arange(d2.shape[0]), d2))
    return order[:k]


def _vote(weights_per_classifier, classifier_ids, pool, x, n_classes):
    """Aggregate weighted votes of the given classifiers' predictions on x."""
    votes = np.zeros(n_classes, dtype=np.float64)
    cost = 0
    for cid, w in zip(classifier_ids, weights_per_classifier):
        label, visits = predict_tree(pool.trees[cid], x)
        votes[label] += w
        cost += visits
    return votes, cost


def knora_u(dsel: Dsel, pool: ClassifierPool, x, k: int) -> SelectionResult:
    """Union rule: every classifier correct on >= 1 region sample votes with
    weight equal to its number of correct region samples. If nobody qualifies,
    the whole pool votes with weight 1."""
    vec = np.asarray(x, dtype=np.float32).ravel()
    region = _region_indices(dsel, vec, k)
    counts = dsel.correctness[:, region].sum(axis=1)
    selected = np.nonzero(counts > 0)[0]
    if selected.size == 0:
        selected = np.arange(pool.pool_size)
        weights = np.ones(pool.pool_size, dtype=np.float64)
    else:
        weights = counts[selected].astype(np.float64)
    votes, cost = _vote(weights, selected, pool, vec, pool.n_classes)
    return SelectionResult(int(np.argmax(votes)), votes, selected, cost)


def knora_e(dsel: Dsel, pool: ClassifierPool, x, k: int) -> SelectionResult:
    """Eliminate rule: select local oracles (correct on the whole region),
    shrinking the region by dropping the farthest neighbor until some
    classifier qualifies; if the region empties, the whole pool votes."""
    vec = np.asarray(x, dtype=np.float32).ravel()
    region = _region_indices(dsel, vec, k)
    selected = np.empty(0, dtype=np.int64)
    for size in range(k, 0, -1):
        perfect = dsel.correctness[:, region[:size]].all(axis=1)
        hits = np.nonzero(perfect)[0]
        if hits.size > 0:
            selected = hits
            break
    if selected.size == 0:
        selected = np.arange(pool.pool_size)
    weights = np.ones(selected.size, dtype=np.float64)
    votes, cost = _vote(weights, selected, pool, vec, pool.n_classes)
    return SelectionResult(int(np.argmax(votes)), votes, selected, cost)


def double_fault(dsel: Dsel, a: int, b: int, region) -> float:
    """Fraction of region samples both classifiers get wrong; lower = more diverse."""
    idx = np.asarray(region, dtype=np.int64)
    if idx.size == 0:
        raise SelectionError("empty region")
    wrong_a = ~dsel.correctness[a, idx]
    wrong_b = ~dsel.correctness[b, idx]
    return float((wrong_a & wrong_b).mean())


def _rank_top(scores: np.ndarray, take: int) -> np.ndarray:
    """Indices of the `take` largest scores; ties to smaller index."""
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return order[:take]


def build_competence_model(dsel: Dsel, kmeans: KMeansModel, n_acc: int, j: int) -> CompetenceModel:
    """Per cluster: shortlist the n_acc most accurate classifiers, then keep
    the j with the smallest mean pairwise double-fault within the shortlist
    (ties: higher accuracy, then smaller index). Clusters with no selection
    samples fall back to global accuracy/diversity."""
    pool_size = dsel.pool_size
    if not (1 <= j <= n_acc <= pool_size):
        raise SelectionError(f"need 1 <= J({j}) <= N_acc({n_acc}) <= pool({pool_size})")
    k = kmeans.k
    member_of = assign_batch(kmeans, dsel.samples)
    accuracy = np.empty((k, pool_size), dtype=np.float64)
    ensembles = np.empty((k, j), dtype=np.uint16)
    global_acc = dsel.correctness.mean(axis=1)
    all_cols = np.arange(dsel.n_samples)
    for c in range(k):
        cols = np.nonzero(member_of == c)[0]
        region = cols if cols.size > 0 else all_cols
        acc = dsel.correctness[:, region].mean(axis=1) if cols.size > 0 else global_acc
        accuracy[c] = acc
        shortlist = _rank_top(acc, n_acc)
        wrong = ~dsel.correctness[np.ix_(shortlist, region)]
        pair_counts = _kernels.both_wrong_counts(np.ascontiguousarray(wrong))
        if n_acc > 1:
            mean_df = (pair_counts.sum(axis=1) - pair_counts.diagonal()) / (
                region.size * (n_acc - 1))
        else:
            mean_df = np.zeros(1, dtype=np.float64)
        # smallest mean double-fault, then highest accuracy, then smallest index
        pick = np.lexsort((shortlist, -acc[shortlist], mean_df))[:j]
        ensembles[c] = np.sort(shortlist[pick])
    return CompetenceModel(kmeans, accuracy, ensembles, n_acc, j)


def des_clustering_predict(cm: CompetenceModel, pool: ClassifierPool, x) -> SelectionResult:
    """Unweighted majority vote of the precomputed ensemble of x's cluster.
    Cost counts nodes visited plus one unit per centroid distance."""
    vec = np.asarray(x, dtype=np.float32).ravel()
    cluster, _ = assign(cm.kmeans, vec)
    ensemble = cm.per_cluster_ensemble[cluster].astype(np.int64)
    votes = np.zeros(pool.n_classes, dtype=np.float64)
    cost = cm.kmeans.k
    for cid in ensemble:
        label, visits = predict_tree(pool.trees[cid], vec)
        votes[label] += 1.0
        cost += visits
    return SelectionResult(int(np.argmax(votes)), votes, ensemble, cost)


def oracle_accuracy(pool: ClassifierPool, test: Dataset, s: Standardizer) -> float:
    """Fraction of test samples at least one pool member classifies correctly."""
    if test.n_samples == 0:
        raise SelectionError("empty test set")
    std = apply_standardizer(s, test.features)
    corr = correctness_matrix(pool, std, test.labels)
    return float(corr.any(axis=0).mean())


def majority_vote(predictions, weights=None) -> tuple[int, np.ndarray]:
    """Weighted plurality over class-id predictions; ties to smallest class id.
    Returns (winner, per-class vote table)."""
    preds = np.asarray(predictions, dtype=np.int64)
    if preds.size == 0:
        raise VoteError("no predictions to vote on")
    if weights is None:
        w = np.ones(preds.size, dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != preds.shape:
            raise ShapeError(f"weights shape {w.shape} != predictions shape {preds.shape}")
        if (w < 0).any():
            raise VoteError("negative vote weight")
        if not (w > 0).any():
            raise VoteError("all vote weights are zero")
    table = np.zeros(int(preds.max()) + 1, dtype=np.float64)
    np.add.at(table, preds, w)
    return int(np.argmax(table)), table


# ---------------------------------------------------------------------------
# Batched evaluation paths used by the benchmark harness. Semantics match the
# per-query operations above; equivalence is covered by tests.
# ---------------------------------------------------------------------------


def pool_predictions(pool: ClassifierPool, X) -> tuple[np.ndarray, np.ndarray]:
    """Labels and visit counts for every (classifier, sample) pair."""
    mat = np.ascontiguousarray(X, dtype=np.float32)
    n = mat.shape[0]
    labels = np.empty((pool.pool_size, n), dtype=np.int64)
    visits = np.empty((pool.pool_size, n), dtype=np.int64)
    for c, tree in enumerate(pool.trees):
        labels[c], visits[c] = predict_batch(tree, mat)
    return labels, visits


def vote_rows(preds: np.ndarray, weights: np.ndarray, n_classes: int) -> np.ndarray:
    """Row-wise weighted plurality: preds/weights are [n_queries, m] aligned."""
    n = preds.shape[0]
    votes = np.zeros((n, n_classes), dtype=np.float64)
    rows = np.arange(n)
    for col in range(preds.shape[1]):
        np.add.at(votes, (rows, preds[:, col]), weights[:, col])
    return np.argmax(votes, axis=1)


def knora_u_batch(dsel: Dsel, pool: ClassifierPool, X, k: int,
                  pool_preds=None, pool_visits=None):
    """Vectorized KNORA-U over a query matrix. Returns (labels, costs)."""
    if dsel.n_samples < k:
        raise SelectionError(f"region size {k} exceeds {dsel.n_samples} selection samples")
    mat = np.ascontiguousarray(X, dtype=np.float32)
    if pool_preds is None:
        pool_preds, pool_visits = pool_predictions(pool, mat)
    n = mat.shape[0]
    labels = np.empty(n, dtype=np.int64)
    costs = np.empty(n, dtype=np.int64)
    chunk = max(1, (1 << 24) // max(1, dsel.n_samples))
    for s in range(0, n, chunk):
        rows = np.arange(s, min(s + chunk, n))
        d2 = _kernels.pairwise_sqdist(mat[rows], dsel.samples)
        part = np.argsort(d2, axis=1, kind="stable")[:, :k]
        # counts[c, q] = correct region samples of classifier c for query q
        counts = dsel.correctness[:, part].sum(axis=2)
        any_sel = counts > 0
        none = ~any_sel.any(axis=0)
        weights = counts.T.astype(np.float64)
        weights[none, :] = 1.0
        used = any_sel.T
        used[none, :] = True
        for qi, q in enumerate(rows):
            w = weights[qi][used[qi]]
            ids = np.nonzero(used[qi])[0]
            votes = np.zeros(pool.n_classes, dtype=np.float64)
            np.add.at(votes, pool_preds[ids, q], w)
            labels[q] = np.argmax(votes)
            costs[q] = pool_visits[ids, q].sum()
    return labels, costs


def knora_e_batch(dsel: Dsel, pool: ClassifierPool, X, k: int,
                  pool_preds=None, pool_visits=None):
    """Vectorized KNORA-E over a query matrix. Returns (labels, costs)."""
    if dsel.n_samples < k:
        raise SelectionError(f"region size {k} exceeds {dsel.n_samples} selection samples")
    mat = np.ascontiguousarray(X, dtype=np.float32)
    if pool_preds is None:
        pool_preds, pool_visits = pool_predictions(pool, mat)
    n = mat.shape[0]
    labels = np.empty(n, dtype=np.int64)
    costs = np.empty(n, dtype=np.int64)
    chunk = max(1, (1 << 24) // max(1, dsel.n_samples))
    for s in range(0, n, chunk):
        rows = np.arange(s, min(s + chunk, n))
        d2 = _kernels.pairwise_sqdist(mat[rows], dsel.samples)
        part = np.argsort(d2, axis=1, kind="stable")[:, :k]
        # prefix[c, q, size-1] = classifier c correct on the size nearest
        prefix = np.logical_and.accumulate(dsel.correctness[:, part], axis=2)
        for qi, q in enumerate(rows):
            ids = np.empty(0, dtype=np.int64)
            for size in range(k, 0, -1):
                hits = np.nonzero(prefix[:, qi, size - 1])[0]
                if hits.size > 0:
                    ids = hits
                    break
            if ids.size == 0:
                ids = np.arange(pool.pool_size)
            votes = np.zeros(pool.n_classes, dtype=np.float64)
            np.add.at(votes, pool_preds[ids, q], 1.0)
            labels[q] = np.argmax(votes)
            costs[q] = pool_visits[ids, q].sum()
    return labels, costs


def des_clustering_batch(cm: CompetenceModel, pool: ClassifierPool, X,
                         pool_preds=None, pool_visits=None):
    """Vectorized clustering-method prediction. Returns (labels, costs)."""
    mat = np.ascontiguousarray(X, dtype=np.float32)
    if pool_preds is None:
        ref = np.unique(cm.per_cluster_ensemble)
        pool_preds = np.zeros((pool.pool_size, mat.shape[0]), dtype=np.int64)
        pool_visits = np.zeros_like(pool_preds)
        for cid in ref:
            pool_preds[cid], pool_visits[cid] = predict_batch(pool.trees[cid], mat)
    clusters = assign_batch(cm.kmeans, mat)
    n = mat.shape[0]
    labels = np.empty(n, dtype=np.int64)
    costs = np.full(n, cm.kmeans.k, dtype=np.int64)
    for c in range(cm.kmeans.k):
        rows = np.nonzero(clusters == c)[0]
        if rows.size == 0:
            continue
        ens = cm.per_cluster_ensemble[c].astype(np.int64)
        preds = pool_preds[np.ix_(ens, rows)]
        votes = np.zeros((rows.size, pool.n_classes), dtype=np.float64)
        cols = np.arange(rows.size)
        for t in range(ens.size):
            np.add.at(votes, (cols, preds[t]), 1.0)
        labels[rows] = np.argmax(votes, axis=1)
        costs[rows] += pool_visits[np.ix_(ens, rows)].sum(axis=0)
    return labels, costs
