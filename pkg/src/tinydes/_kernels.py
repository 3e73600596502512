"""Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a numba ``@njit`` version (``*_nb``) and a
vectorized numpy version (``*_np``). The active backend is chosen once at
import from the ``TINYDES_BACKEND`` environment variable (``numba`` or
``numpy``; default numba when importable). Both backends follow the same
tie rules and the same arithmetic contract:

  * split scores are exact int64 class-count sums divided once in float64,
    so the two backends pick bit-identical splits;
  * tree walks compare float32 values against float32 thresholds;
  * distances square float32 differences and accumulate in float64.

float64 accumulation order differs between backends (sequential vs numpy
pairwise), so distance values may differ in the last ulps; every consumer
breaks ties by explicit index rules, never by accumulation order.

``benchmarks/kernel_bench.py`` times the two backends side by side.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("TINYDES_BACKEND", "").strip().lower()
if _env not in ("", "numba", "numpy"):
    raise ValueError(f"TINYDES_BACKEND must be 'numba' or 'numpy', got {_env!r}")

_want_numba = _env != "numpy"
_have_numba = False
if _want_numba:
    try:
        from numba import njit, prange

        _have_numba = True
    except ImportError:
        if _env == "numba":
            raise
        _have_numba = False

BACKEND = "numba" if _have_numba else "numpy"


def use_numba() -> bool:
    return BACKEND == "numba"


# ---------------------------------------------------------------------------
# Split search: maximize sum_children( sum_c count_c^2 / n_child ).
# Equivalent to minimizing weighted Gini impurity; counts are exact int64,
# each child contributes one float64 division, so scores are bit-identical
# across backends. Candidate columns are scanned ascending and boundaries
# ascending with strict '>' so ties resolve to the smallest feature id and
# the smallest threshold.
# ---------------------------------------------------------------------------


def _best_split_np(values, labels, n_classes):
    n, m = values.shape
    total = np.bincount(labels, minlength=n_classes).astype(np.int64)
    best_score = -1.0
    best_col = -1
    best_thr = np.float32(0.0)
    ar = np.arange(1, n, dtype=np.int64)
    for j in range(m):
        col = values[:, j]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        boundary = np.nonzero(sv[:-1] != sv[1:])[0]
        if boundary.size == 0:
            continue
        onehot = np.zeros((n, n_classes), dtype=np.int64)
        onehot[np.arange(n), labels[order]] = 1
        cum = np.cumsum(onehot, axis=0)
        sl = np.square(cum[:-1]).sum(axis=1)
        sr = np.square(total[None, :] - cum[:-1]).sum(axis=1)
        nl = ar
        nr = n - nl
        score = sl / nl + sr / nr
        bscore = score[boundary]
        pos = int(np.argmax(bscore))
        if bscore[pos] > best_score:
            i = int(boundary[pos])
            v0 = sv[i]
            v1 = sv[i + 1]
            thr = np.float32((np.float64(v0) + np.float64(v1)) * 0.5)
            if thr >= v1:
                # f32 midpoint rounded up to the right value; fall back to the
                # left value so '<= thr' reproduces the scored partition.
                thr = v0
            best_score = float(bscore[pos])
            best_col = j
            best_thr = thr
    return best_col, float(best_thr), best_score, best_col >= 0


if _have_numba:

    @njit(cache=True)
    def _best_split_nb(values, labels, n_classes):  # pragma: no cover - jitted
        n, m = values.shape
        total = np.zeros(n_classes, dtype=np.int64)
        for i in range(n):
            total[labels[i]] += 1
        s_total = np.int64(0)
        for c in range(n_classes):
            s_total += total[c] * total[c]
        best_score = -1.0
        best_col = -1
        best_thr = np.float32(0.0)
        for j in range(m):
            col = values[:, j].copy()
            order = np.argsort(col)
            cl = np.zeros(n_classes, dtype=np.int64)
            cr = total.copy()
            sl = np.int64(0)
            sr = s_total
            for i in range(n - 1):
                y = labels[order[i]]
                sl += 2 * cl[y] + 1
                cl[y] += 1
                sr -= 2 * cr[y] - 1
                cr[y] -= 1
                v0 = col[order[i]]
                v1 = col[order[i + 1]]
                if v0 == v1:
                    continue
                nl = i + 1
                nr = n - nl
                score = sl / nl + sr / nr
                if score > best_score:
                    thr = np.float32((np.float64(v0) + np.float64(v1)) * 0.5)
                    if thr >= v1:
                        thr = v0
                    best_score = score
                    best_col = j
                    best_thr = thr
        return best_col, best_thr, best_score, best_col >= 0

    def _best_split_dispatch(values, labels, n_classes):
        col, thr, score, ok = _best_split_nb(values, labels, n_classes)
        return int(col), float(thr), float(score), bool(ok)

    best_split = _best_split_dispatch
else:
    best_split = _best_split_np


# ---------------------------------------------------------------------------
# Flat-tree walk. Nodes are preorder; left child is pos+1, right child is
# jump[pos]; leaves store the class id in jump. Returns -1 labels on
# structural corruption instead of trapping; wrappers raise.
# ---------------------------------------------------------------------------


def _tree_walk_np(feat, thr, jump, X):
    n = X.shape[0]
    nn = feat.shape[0]
    pos = np.zeros(n, dtype=np.int64)
    labels = np.full(n, -1, dtype=np.int64)
    visits = np.ones(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    rows = np.arange(n)
    for _ in range(nn + 1):
        f = feat[pos[active]]
        leaf = f < 0
        act_rows = rows[active]
        leaf_rows = act_rows[leaf]
        labels[leaf_rows] = jump[pos[leaf_rows]]
        active[leaf_rows] = False
        if not active.any():
            break
        act_rows = act_rows[~leaf]
        p = pos[act_rows]
        goleft = X[act_rows, feat[p]] <= thr[p]
        nxt = np.where(goleft, p + 1, jump[p].astype(np.int64))
        bad = nxt >= nn
        if bad.any():
            labels[act_rows[bad]] = -1
            active[act_rows[bad]] = False
            act_rows = act_rows[~bad]
            nxt = nxt[~bad]
        pos[act_rows] = nxt
        visits[act_rows] += 1
    return labels, visits


if _have_numba:

    @njit(cache=True, parallel=True)
    def _tree_walk_nb(feat, thr, jump, X):  # pragma: no cover - jitted
        n = X.shape[0]
        nn = feat.shape[0]
        labels = np.empty(n, dtype=np.int64)
        visits = np.empty(n, dtype=np.int64)
        for r in prange(n):
            pos = 0
            steps = 0
            lab = np.int64(-1)
            while steps <= nn:
                steps += 1
                f = feat[pos]
                if f < 0:
                    lab = np.int64(jump[pos])
                    break
                if X[r, f] <= thr[pos]:
                    pos = pos + 1
                else:
                    pos = np.int64(jump[pos])
                if pos >= nn:
                    break
            labels[r] = lab
            visits[r] = steps
        return labels, visits

    tree_walk = _tree_walk_nb
else:
    tree_walk = _tree_walk_np


# ---------------------------------------------------------------------------
# Squared-L2 cluster assignment: float32 differences/squares, float64
# accumulation, ties to the smallest cluster id.
# ---------------------------------------------------------------------------


def _assign_clusters_np(X, C):
    n = X.shape[0]
    k = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    step = max(1, (1 << 22) // max(1, X.shape[1]))
    with np.errstate(over="ignore"):
        for s in range(0, n, step):
            xb = X[s : s + step]
            dm = np.empty((xb.shape[0], k), dtype=np.float64)
            for c in range(k):
                d = xb - C[c]
                dm[:, c] = np.square(d).sum(axis=1, dtype=np.float64)
            lb = np.argmin(dm, axis=1)
            labels[s : s + step] = lb
            dists[s : s + step] = dm[np.arange(xb.shape[0]), lb]
    return labels, dists


if _have_numba:

    @njit(cache=True, parallel=True)
    def _assign_clusters_nb(X, C):  # pragma: no cover - jitted
        n, nf = X.shape
        k = C.shape[0]
        labels = np.empty(n, dtype=np.int64)
        dists = np.empty(n, dtype=np.float64)
        for r in prange(n):
            best = np.inf
            bid = 0
            for c in range(k):
                acc = 0.0
                for i in range(nf):
                    d = X[r, i] - C[c, i]
                    acc += d * d
                if acc < best:
                    best = acc
                    bid = c
            labels[r] = bid
            dists[r] = best
        return labels, dists

    assign_clusters = _assign_clusters_nb
else:
    assign_clusters = _assign_clusters_np


def _cluster_means_np(X, labels, k):
    nf = X.shape[1]
    out = np.zeros((k, nf), dtype=np.float32)
    counts = np.zeros(k, dtype=np.int64)
    for c in range(k):
        mask = labels == c
        cnt = int(mask.sum())
        counts[c] = cnt
        if cnt > 0:
            out[c] = (X[mask].sum(axis=0, dtype=np.float64) / cnt).astype(np.float32)
    return out, counts


if _have_numba:

    @njit(cache=True)
    def _cluster_means_nb(X, labels, k):  # pragma: no cover - jitted
        n, nf = X.shape
        sums = np.zeros((k, nf), dtype=np.float64)
        counts = np.zeros(k, dtype=np.int64)
        for r in range(n):
            c = labels[r]
            counts[c] += 1
            for i in range(nf):
                sums[c, i] += X[r, i]
        out = np.zeros((k, nf), dtype=np.float32)
        for c in range(k):
            if counts[c] > 0:
                for i in range(nf):
                    out[c, i] = np.float32(sums[c, i] / counts[c])
        return out, counts

    cluster_means = _cluster_means_nb
else:
    cluster_means = _cluster_means_np


# ---------------------------------------------------------------------------
# Dense query-to-reference squared distances (KNORA region search).
# ---------------------------------------------------------------------------


def _pairwise_sqdist_np(Q, D):
    Qd = Q.astype(np.float64)
    Dd = D.astype(np.float64)
    qq = np.square(Qd).sum(axis=1)[:, None]
    dd = np.square(Dd).sum(axis=1)[None, :]
    out = qq - 2.0 * (Qd @ Dd.T) + dd
    np.maximum(out, 0.0, out=out)
    return out


if _have_numba:

    @njit(cache=True, parallel=True)
    def _pairwise_sqdist_nb(Q, D):  # pragma: no cover - jitted
        nq, nf = Q.shape
        nd = D.shape[0]
        out = np.empty((nq, nd), dtype=np.float64)
        for r in prange(nq):
            for s in range(nd):
                acc = 0.0
                for i in range(nf):
                    d = Q[r, i] - D[s, i]
                    acc += d * d
                out[r, s] = acc
        return out

    pairwise_sqdist = _pairwise_sqdist_nb
else:
    pairwise_sqdist = _pairwise_sqdist_np


# ---------------------------------------------------------------------------
# Double-fault pair counts: for each classifier pair, how many evaluation
# samples both get wrong. Exact integer counts in both backends.
# ---------------------------------------------------------------------------


def _both_wrong_counts_np(wrong):
    w = wrong.astype(np.int64)
    return w @ w.T


if _have_numba:

    @njit(cache=True)
    def _both_wrong_counts_nb(wrong):  # pragma: no cover - jitted
        p, m = wrong.shape
        out = np.zeros((p, p), dtype=np.int64)
        for a in range(p):
            for b in range(a, p):
                cnt = np.int64(0)
                for s in range(m):
                    if wrong[a, s] and wrong[b, s]:
                        cnt += 1
                out[a, b] = cnt
                out[b, a] = cnt
        return out

    both_wrong_counts = _both_wrong_counts_nb
else:
    both_wrong_counts = _both_wrong_counts_np


# ---------------------------------------------------------------------------
# Compact-engine inference over the flat model arrays. The numba version
# writes only into caller-provided scratch; it allocates nothing.
# ---------------------------------------------------------------------------


def _tiny_infer_np(x, mean, inv_std, centroids, ensembles, dir_off, dir_cnt,
                   feat, thr, jump, sx, votes):
    np.subtract(x, mean, out=sx)
    np.multiply(sx, inv_std, out=sx)
    k = centroids.shape[0]
    best = np.inf
    bid = 0
    with np.errstate(over="ignore"):  # f32 squares may saturate to inf, like numba
        for c in range(k):
            d = sx - centroids[c]
            acc = float(np.square(d).sum(dtype=np.float64))
            if acc < best:
                best = acc
                bid = c
    votes[:] = 0
    visits = 0
    for t in ensembles[bid]:
        base = int(dir_off[t])
        pos = 0
        while True:
            visits += 1
            f = feat[base + pos]
            if f < 0:
                votes[jump[base + pos]] += 1
                break
            if sx[f] <= thr[base + pos]:
                pos += 1
            else:
                pos = int(jump[base + pos])
    lab = 0
    bestv = -1
    for c in range(votes.shape[0]):
        if votes[c] > bestv:
            bestv = int(votes[c])
            lab = c
    return lab, visits + k


if _have_numba:

    @njit(cache=True)
    def _tiny_infer_nb(x, mean, inv_std, centroids, ensembles, dir_off, dir_cnt,
                       feat, thr, jump, sx, votes):  # pragma: no cover - jitted
        nf = x.shape[0]
        for i in range(nf):
            c0 = x[i] - mean[i]
            sx[i] = c0 * inv_std[i]
        k = centroids.shape[0]
        best = np.inf
        bid = 0
        for c in range(k):
            acc = 0.0
            for i in range(nf):
                d = sx[i] - centroids[c, i]
                acc += d * d
            if acc < best:
                best = acc
                bid = c
        nc = votes.shape[0]
        for c in range(nc):
            votes[c] = 0
        visits = 0
        nj = ensembles.shape[1]
        for jj in range(nj):
            t = ensembles[bid, jj]
            base = np.int64(dir_off[t])
            pos = np.int64(0)
            while True:
                visits += 1
                f = feat[base + pos]
                if f < 0:
                    votes[jump[base + pos]] += 1
                    break
                if sx[f] <= thr[base + pos]:
                    pos += 1
                else:
                    pos = np.int64(jump[base + pos])
        lab = 0
        bestv = -1
        for c in range(nc):
            if votes[c] > bestv:
                bestv = np.int64(votes[c])
                lab = c
        return lab, visits + k

    def _tiny_infer_dispatch(*args):
        lab, cost = _tiny_infer_nb(*args)
        return int(lab), int(cost)

    tiny_infer = _tiny_infer_dispatch
else:
    tiny_infer = _tiny_infer_np
