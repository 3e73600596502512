"""Compact flat-binary model (.tdes), fixed-memory interpreter, C89 emitter.

File layout, little-endian throughout (see docs/FORMAT.md for a worked hex
example):

    header     24 B   magic "TDES", version u32, n_features u32,
                      n_classes u16, pool_size u16, k u16, J u16,
                      n_nodes_total u32
    standard.  8*F B  mean f32[F], inv_std f32[F]
    centroids  4*K*F  f32[K][F]
    ensembles  2*K*J  u16[K][J], classifier ids after dead-tree remapping
    directory  6*P B  (node_offset u32, node_count u16) per retained tree;
                      offsets count 8-byte node records from the pool start
    node pool  8*N B  (feature i16, threshold f32, right_jump u16) records
    padding    0-3 B  zeros to a 4-byte boundary
    crc32      4 B    poly 0xEDB88320 (reflected) over all preceding bytes

Only trees referenced by an ensemble row are stored; the manifest sidecar
records the remap table and per-section byte sizes.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Standardizer
from .errors import (CapacityError, ChecksumError, FormatError,
                     ModelCorruptError, ShapeError)
from .selection import CompetenceModel
from .trees import ClassifierPool

MAGIC = b"TDES"
VERSION = 1
HEADER = struct.Struct("<4sIIHHHHI")
DIR_ENTRY = struct.Struct("<IH")
NODE_DTYPE = np.dtype([("feature", "<i2"), ("threshold", "<f4"), ("right_jump", "<u2")])
assert NODE_DTYPE.itemsize == 8


def _pad_to4(n: int) -> int:
    return (-n) % 4


def export_tiny(s: Standardizer, cm: CompetenceModel, pool: ClassifierPool):
    """Serialize standardizer + centroids + ensembles + referenced trees.

    Returns (model bytes, manifest text). Trees no ensemble references are
    dropped and classifier ids remapped; the manifest records the mapping.
    """
    nf = s.n_features
    if cm.kmeans.n_features != nf:
        raise ShapeError("standardizer and centroid widths differ")
    n_classes = pool.n_classes
    k = cm.kmeans.k
    j = cm.j
    referenced = np.unique(cm.per_cluster_ensemble).astype(np.int64)
    if referenced.max(initial=0) >= pool.pool_size:
        raise ModelCorruptError("ensemble references a classifier outside the pool")
    if referenced.size > 65535:
        raise CapacityError(f"{referenced.size} retained classifiers exceed the u16 limit")
    if n_classes > 65535 or k > 65535 or j > 65535:
        raise CapacityError("class/cluster/ensemble count exceeds the u16 limit")
    remap = {int(old): new for new, old in enumerate(referenced)}

    node_records = []
    dir_entries = []
    offset = 0
    for old in referenced:
        tree = pool.trees[int(old)]
        if tree.n_nodes > 65535:
            raise CapacityError(f"tree {int(old)} has {tree.n_nodes} nodes; u16 limit is 65535")
        rec = np.empty(tree.n_nodes, dtype=NODE_DTYPE)
        rec["feature"] = tree.feature
        rec["threshold"] = tree.threshold
        rec["right_jump"] = tree.jump
        node_records.append(rec)
        dir_entries.append((offset, tree.n_nodes))
        offset += tree.n_nodes
    n_nodes_total = offset

    parts = [HEADER.pack(MAGIC, VERSION, nf, n_classes, referenced.size, k, j, n_nodes_total)]
    parts.append(s.mean.astype("<f4").tobytes())
    parts.append(s.inv_std.astype("<f4").tobytes())
    parts.append(cm.kmeans.centroids.astype("<f4").tobytes())
    ens = np.vectorize(remap.__getitem__, otypes=[np.uint16])(cm.per_cluster_ensemble)
    parts.append(ens.astype("<u2").tobytes())
    for off, cnt in dir_entries:
        parts.append(DIR_ENTRY.pack(off, cnt))
    parts.append(b"".join(rec.tobytes() for rec in node_records))
    body = b"".join(parts)
    padding = _pad_to4(len(body))
    body += b"\x00" * padding
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    sizes = {
        "header": HEADER.size,
        "standardizer": 8 * nf,
        "centroids": 4 * k * nf,
        "ensembles": 2 * k * j,
        "directory": DIR_ENTRY.size * referenced.size,
        "nodes": 8 * n_nodes_total,
        "padding": padding,
        "crc": 4,
    }
    lines = [
        "format = tdes",
        f"version = {VERSION}",
        f"n_features = {nf}",
        f"n_classes = {n_classes}",
        f"k_clusters = {k}",
        f"ensemble_size = {j}",
        f"pool_size_source = {pool.pool_size}",
        f"pool_size_retained = {referenced.size}",
        f"trees_dropped = {pool.pool_size - referenced.size}",
        f"n_nodes_total = {n_nodes_total}",
    ]
    lines += [f"bytes.{name} = {val}" for name, val in sizes.items()]
    lines.append(f"bytes.total = {len(blob)}")
    lines.append(f"rom_estimate_bytes = {len(blob) - 4}")
    lines += [f"remap.{new} = {int(old)}" for new, old in enumerate(referenced)]
    manifest = "\n".join(lines) + "\n"
    return blob, manifest


@dataclass
class TinyEngine:
    """Loaded model view plus preallocated scratch; one engine per thread."""

    n_features: int
    n_classes: int
    pool_size: int
    k: int
    j: int
    mean: np.ndarray
    inv_std: np.ndarray
    centroids: np.ndarray
    ensembles: np.ndarray
    dir_offset: np.ndarray
    dir_count: np.ndarray
    node_feature: np.ndarray
    node_threshold: np.ndarray
    node_jump: np.ndarray
    scratch_x: np.ndarray
    scratch_votes: np.ndarray

    def predict(self, raw_x):
        return tiny_predict(self, raw_x)


def _slice(buf: bytes, start: int, nbytes: int, what: str) -> bytes:
    if start + nbytes > len(buf):
        raise FormatError(f"model truncated inside {what}")
    return buf[start : start + nbytes]


def load_tiny(data: bytes) -> TinyEngine:
    """Validate magic, version, CRC and every index bound; never repairs."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise FormatError("model must be a byte buffer")
    buf = bytes(data)
    if len(buf) < HEADER.size + 4:
        raise FormatError(f"buffer of {len(buf)} bytes is smaller than header + crc")
    magic, version, nf, n_classes, pool_size, k, j, n_nodes = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (stored_crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    if zlib.crc32(buf[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError("crc32 mismatch")
    if nf < 1 or n_classes < 1 or pool_size < 1 or k < 1 or j < 1:
        raise FormatError("zero-sized section in header")

    body = HEADER.size + 8 * nf + 4 * k * nf + 2 * k * j + DIR_ENTRY.size * pool_size + 8 * n_nodes
    expected = body + _pad_to4(body) + 4
    if expected != len(buf):
        raise FormatError(f"file is {len(buf)} bytes; header implies {expected}")

    pos = HEADER.size
    mean = np.frombuffer(_slice(buf, pos, 4 * nf, "mean"), dtype="<f4")
    pos += 4 * nf
    inv_std = np.frombuffer(_slice(buf, pos, 4 * nf, "inv_std"), dtype="<f4")
    pos += 4 * nf
    centroids = np.frombuffer(_slice(buf, pos, 4 * k * nf, "centroids"), dtype="<f4").reshape(k, nf)
    pos += 4 * k * nf
    ensembles = np.frombuffer(_slice(buf, pos, 2 * k * j, "ensembles"), dtype="<u2").reshape(k, j)
    pos += 2 * k * j
    directory = np.frombuffer(_slice(buf, pos, 6 * pool_size, "directory"),
                              dtype=np.dtype([("off", "<u4"), ("cnt", "<u2")]))
    pos += 6 * pool_size
    nodes = np.frombuffer(_slice(buf, pos, 8 * n_nodes, "nodes"), dtype=NODE_DTYPE)

    if not np.isfinite(mean).all() or not np.isfinite(inv_std).all():
        raise ModelCorruptError("non-finite standardizer values")
    if not np.isfinite(centroids).all():
        raise ModelCorruptError("non-finite centroid values")
    if (ensembles >= pool_size).any():
        raise ModelCorruptError("ensemble entry references a missing tree")
    dir_off = directory["off"].astype(np.int64)
    dir_cnt = directory["cnt"].astype(np.int64)
    if (dir_cnt < 1).any():
        raise ModelCorruptError("empty tree in directory")
    if ((dir_off + dir_cnt) > n_nodes).any():
        raise ModelCorruptError("tree directory points past the node pool")

    feat = np.ascontiguousarray(nodes["feature"])
    thr = np.ascontiguousarray(nodes["threshold"])
    jump = np.ascontiguousarray(nodes["right_jump"])
    if not np.isfinite(thr).all():
        raise ModelCorruptError("non-finite node threshold")
    for t in range(pool_size):
        lo, cnt = int(dir_off[t]), int(dir_cnt[t])
        tf = feat[lo : lo + cnt]
        tj = jump[lo : lo + cnt].astype(np.int64)
        internal = tf >= 0
        if (tf[internal] >= nf).any():
            raise ModelCorruptError(f"tree {t}: feature index out of range")
        pos_idx = np.nonzero(internal)[0]
        if ((tj[pos_idx] <= pos_idx) | (tj[pos_idx] >= cnt)).any():
            raise ModelCorruptError(f"tree {t}: right-child jump violates preorder")
        if (tj[~internal] >= n_classes).any():
            raise ModelCorruptError(f"tree {t}: leaf class out of range")

    return TinyEngine(
        n_features=nf, n_classes=n_classes, pool_size=pool_size, k=k, j=j,
        mean=mean, inv_std=inv_std, centroids=centroids, ensembles=ensembles,
        dir_offset=dir_off, dir_count=dir_cnt,
        node_feature=feat, node_threshold=thr, node_jump=jump,
        scratch_x=np.empty(nf, dtype=np.float32),
        scratch_votes=np.zeros(n_classes, dtype=np.uint16),
    )


def tiny_predict(e: TinyEngine, raw_x) -> tuple[int, int]:
    """Standardize into scratch, pick the nearest centroid, walk that
    cluster's trees, majority vote. Cost = nodes visited + k."""
    vec = np.asarray(raw_x, dtype=np.float32).ravel()
    if vec.shape[0] != e.n_features:
        raise ShapeError(f"expected {e.n_features} features, got {vec.shape[0]}")
    label, cost = _kernels.tiny_infer(
        vec, e.mean, e.inv_std, e.centroids, e.ensembles,
        e.dir_offset, e.dir_count,
        e.node_feature, e.node_threshold, e.node_jump,
        e.scratch_x, e.scratch_votes,
    )
    return int(label), int(cost)


# ---------------------------------------------------------------------------
# Static C89 source emission.
# ---------------------------------------------------------------------------


def _c_float(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return f"{v:.1f}f"
    return f"{np.float32(v):.9g}f"


def _c_array(name: str, ctype: str, values, fmt) -> str:
    vals = [fmt(v) for v in values]
    rows = [", ".join(vals[i : i + 8]) for i in range(0, len(vals), 8)]
    body = ",\n    ".join(rows)
    return f"static const {ctype} {name}[{len(vals)}] = {{\n    {body}\n}};\n"


def emit_static_source(model_bytes: bytes) -> str:
    """Emit a single self-contained C89 translation unit with the model as
    constant arrays and a ``tinydes_predict(const float* x)`` entry point
    reproducing the interpreter semantics exactly."""
    e = load_tiny(model_bytes)
    out = []
    out.append("/* Self-contained flat decision-ensemble classifier. */\n")
    out.append("/* Entry point: int tinydes_predict(const float* x);    */\n\n")
    out.append(f"#define TINYDES_N_FEATURES {e.n_features}\n")
    out.append(f"#define TINYDES_N_CLASSES {e.n_classes}\n")
    out.append(f"#define TINYDES_K {e.k}\n")
    out.append(f"#define TINYDES_J {e.j}\n\n")
    out.append(_c_array("tinydes_mean", "float", e.mean, _c_float))
    out.append(_c_array("tinydes_inv_std", "float", e.inv_std, _c_float))
    out.append(_c_array("tinydes_centroids", "float", e.centroids.ravel(), _c_float))
    out.append(_c_array("tinydes_ensembles", "unsigned short", e.ensembles.ravel(), str))
    out.append(_c_array("tinydes_tree_offset", "unsigned long", e.dir_offset, lambda v: f"{v}ul"))
    out.append(_c_array("tinydes_node_feature", "short", e.node_feature, str))
    out.append(_c_array("tinydes_node_threshold", "float", e.node_threshold, _c_float))
    out.append(_c_array("tinydes_node_jump", "unsigned short", e.node_jump, str))
    out.append("""
int tinydes_predict(const float* x)
{
    static float sx[TINYDES_N_FEATURES];
    static unsigned short votes[TINYDES_N_CLASSES];
    double best;
    int best_id;
    int c;
    int i;
    int jj;

    for (i = 0; i < TINYDES_N_FEATURES; i++) {
        float centered = x[i] - tinydes_mean[i];
        sx[i] = centered * tinydes_inv_std[i];
    }
    best = 0.0;
    best_id = -1;
    for (c = 0; c < TINYDES_K; c++) {
        double acc = 0.0;
        for (i = 0; i < TINYDES_N_FEATURES; i++) {
            float d = sx[i] - tinydes_centroids[c * TINYDES_N_FEATURES + i];
            float sq = d * d;
            acc += sq;
        }
        if (best_id < 0 || acc < best) {
            best = acc;
            best_id = c;
        }
    }
    for (c = 0; c < TINYDES_N_CLASSES; c++) {
        votes[c] = 0;
    }
    for (jj = 0; jj < TINYDES_J; jj++) {
        unsigned short tree = tinydes_ensembles[best_id * TINYDES_J + jj];
        unsigned long base = tinydes_tree_offset[tree];
        unsigned long pos = 0;
        for (;;) {
            short f = tinydes_node_feature[base + pos];
            if (f < 0) {
                votes[tinydes_node_jump[base + pos]] += 1;
                break;
            }
            if (sx[f] <= tinydes_node_threshold[base + pos]) {
                pos += 1;
            } else {
                pos = tinydes_node_jump[base + pos];
            }
        }
    }
    best_id = 0;
    for (c = 1; c < TINYDES_N_CLASSES; c++) {
        if (votes[c] > votes[best_id]) {
            best_id = c;
        }
    }
    return best_id;
}
""")
    return "".join(out)
