"""Label-grouped multi-hop neighborhood aggregation.

For a target v and relation r the hop-k set is every node reachable from v
by a walk of length <= k once self-loops are added (the nonzero pattern of
(A + I)^k).  Each hop set is split by observed label into benign, fraud and
unknown groups, v itself always going to the unknown group, and every group
is reduced to ``sum(x_u) / |group|**alpha`` (zeros when empty).

Per relation the sequence block is ``[x_v, h-(1), h+(1), h*(1), ..., h*(K)]``;
blocks are stacked in relation order, giving ``R * (3K + 1)`` rows.
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from gaga import kernels
from gaga._io import atomic_write_bytes
from gaga.graph import NUM_CLASSES, UNLABELED, GraphError, MultiRelationGraph

GROUP_BENIGN = 0
GROUP_FRAUD = 1
GROUP_UNKNOWN = 2
GROUP_NAMES = ("-", "+", "*")

VARIANT_GAGA = "gaga"
VARIANT_GT = "gt"


@dataclass(frozen=True)
class GroupAggConfig:
    num_hops: int = 2
    alpha: float = 1.0
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if self.num_hops < 1:
            raise ValueError("num_hops must be >= 1")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if self.num_classes != NUM_CLASSES:
            raise ValueError("only binary labels are supported")

    @property
    def groups_per_hop(self) -> int:
        return self.num_classes + 1

    def block_length(self, variant: str = VARIANT_GAGA) -> int:
        if variant == VARIANT_GT:
            return self.num_hops + 1
        return self.groups_per_hop * self.num_hops + 1

    def sequence_length(self, num_relations: int, variant: str = VARIANT_GAGA) -> int:
        return num_relations * self.block_length(variant)


@dataclass
class HopNeighborhoods:
    target: int
    hops: list[np.ndarray]  # hops[k-1] = sorted members of the hop-k set


def group_assignment(labels: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Group id per node: its label where observed, else the unknown group."""
    labels = np.asarray(labels)
    observed = np.asarray(observed, dtype=bool)
    if np.any(observed & (labels == UNLABELED)):
        raise GraphError("observed nodes must carry a label")
    return np.where(observed, labels, GROUP_UNKNOWN).astype(np.int8)


# ------------------------------------------------------- per-node reference


def khop_neighbors(graph: MultiRelationGraph, relation: int, v: int, num_hops: int) -> HopNeighborhoods:
    if not 0 <= v < graph.num_nodes:
        raise GraphError(f"node {v} out of range (N={graph.num_nodes})")
    if num_hops < 1:
        raise GraphError("num_hops must be >= 1")
    rel = graph.relations[relation]
    reached = np.zeros(graph.num_nodes, dtype=bool)
    reached[v] = True
    frontier = np.array([v], dtype=np.int64)
    hops = []
    for _ in range(num_hops):
        nbrs = np.concatenate([rel.neighbors(u) for u in frontier]) if len(frontier) else frontier
        new = np.unique(nbrs[~reached[nbrs]])
        reached[new] = True
        frontier = new
        hops.append(np.flatnonzero(reached))
    return HopNeighborhoods(v, hops)


def group_nodes(hop_set: np.ndarray, target: int, labels: np.ndarray, observed: np.ndarray):
    """Split one hop set into (benign, fraud, unknown) node arrays with target masking."""
    hop_set = np.asarray(hop_set, dtype=np.int64)
    rest = hop_set[hop_set != target]
    vis = np.asarray(observed, dtype=bool)[rest]
    lab = np.asarray(labels)[rest]
    benign = rest[vis & (lab == 0)]
    fraud = rest[vis & (lab == 1)]
    unknown = np.sort(np.concatenate([[target], rest[~vis]])).astype(np.int64)
    return benign, fraud, unknown


def group_aggregate(groups, features: np.ndarray, alpha: float) -> np.ndarray:
    """One vector per group: ``sum(x_u) / |V|**alpha``, zeros for an empty group."""
    out = np.zeros((len(groups), features.shape[1]))
    for i, members in enumerate(groups):
        if len(members):
            out[i] = features[members].sum(axis=0) / float(len(members)) ** alpha
    return out


# ------------------------------------------------------------- sequences


def _relation_rows(graph, relation, nodes, config, group_of, backend):
    rel = graph.relations[relation]
    return kernels.group_hop_sums(
        rel.indptr, rel.indices, graph.features, group_of, nodes,
        config.num_hops, config.alpha, backend=backend,
    )


def _assemble(graph, nodes, config, group_of, variant, backend):
    nodes = np.asarray(nodes, dtype=np.int64)
    k = config.num_hops
    s = config.block_length(variant)
    d = graph.feature_dim
    out = np.empty((len(nodes), graph.num_relations * s, d))
    for r in range(graph.num_relations):
        rows = _relation_rows(graph, r, nodes, config, group_of, backend)
        base = r * s
        out[:, base] = graph.features[nodes]
        if variant == VARIANT_GAGA:
            out[:, base + 1:base + s] = rows
        else:
            out[:, base + 1:base + s] = rows[:, GROUP_UNKNOWN::3]
    return out


def build_sequence(graph, v: int, config: GroupAggConfig, observed, backend=None) -> np.ndarray:
    """The (R * (3K + 1)) x d grouped sequence of node v."""
    if not 0 <= v < graph.num_nodes:
        raise GraphError(f"node {v} out of range (N={graph.num_nodes})")
    group_of = group_assignment(graph.labels, observed)
    return _assemble(graph, [v], config, group_of, VARIANT_GAGA, backend)[0]


def build_mean_sequence(graph, v: int, config: GroupAggConfig, backend=None) -> np.ndarray:
    """Ungrouped R * (K + 1) sequence: x_v then the plain hop means."""
    group_of = np.full(graph.num_nodes, GROUP_UNKNOWN, dtype=np.int8)
    return _assemble(graph, [v], config, group_of, VARIANT_GT, backend)[0]


def matrix_oracle(graph, relation: int, k: int, group, observed, alpha: float = 1.0) -> np.ndarray:
    """Dense-algebra reference for one group row of hop k, for every node at once.

    ``group`` is 0, 1 or ``"*"``. Reachability comes from the binarized k-th
    power of A + I with the diagonal removed; class columns are masked by
    observed label, and the target is added back to the unknown group.
    """
    n = graph.num_nodes
    rel = graph.relations[relation]
    adj = sp.csr_matrix(
        (np.ones(rel.nnz), rel.indices, rel.indptr), shape=(n, n)
    ) + sp.identity(n, format="csr")
    reach = sp.identity(n, format="csr")
    for _ in range(k):
        reach = reach @ adj
        reach.data[:] = 1.0
    reach = reach.tolil()
    reach.setdiag(0)
    reach = reach.tocsr()
    reach.eliminate_zeros()
    observed = np.asarray(observed, dtype=bool)
    if group in ("*", GROUP_UNKNOWN):
        col_mask = ~observed
    elif group in (0, 1):
        col_mask = observed & (graph.labels == group)
    else:
        raise ValueError(f"group must be 0, 1 or '*', got {group!r}")
    masked = reach @ sp.diags(col_mask.astype(np.float64))
    sums = masked @ graph.features
    counts = np.asarray(masked.sum(axis=1)).ravel()
    if group in ("*", GROUP_UNKNOWN):
        sums = sums + graph.features
        counts = counts + 1.0
    out = np.zeros_like(graph.features)
    nz = counts > 0
    out[nz] = sums[nz] / (counts[nz] ** alpha)[:, None]
    return out


# --------------------------------------------------------------- datasets


@dataclass
class SequenceDataset:
    sequences: np.ndarray  # (N, S, d) float64
    labels: np.ndarray  # (N,) int8, -1 unlabeled
    node_ids: np.ndarray  # (N,) int64
    config: GroupAggConfig
    num_relations: int
    variant: str = VARIANT_GAGA

    @property
    def num_nodes(self) -> int:
        return self.sequences.shape[0]

    @property
    def seq_len(self) -> int:
        return self.sequences.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.sequences.shape[2]

    def save(self, path) -> None:
        atomic_write_bytes(path, dataset_to_bytes(self))

    @classmethod
    def load(cls, path) -> "SequenceDataset":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"{path}: missing file")
        return dataset_from_bytes(path.read_bytes(), str(path))


def preprocess_all(
    graph: MultiRelationGraph,
    config: GroupAggConfig,
    observed,
    workers: int = 1,
    variant: str = VARIANT_GAGA,
    backend=None,
    chunk_size: int = 2048,
) -> SequenceDataset:
    """Sequences for every node; output does not depend on ``workers``."""
    if variant not in (VARIANT_GAGA, VARIANT_GT):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == VARIANT_GAGA:
        group_of = group_assignment(graph.labels, observed)
    else:
        group_of = np.full(graph.num_nodes, GROUP_UNKNOWN, dtype=np.int8)
    n = graph.num_nodes
    chunks = [np.arange(i, min(i + chunk_size, n)) for i in range(0, n, chunk_size)]
    s = config.sequence_length(graph.num_relations, variant)
    seqs = np.empty((n, s, graph.feature_dim))

    def work(nodes):
        seqs[nodes] = _assemble(graph, nodes, config, group_of, variant, backend)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, chunks))
    else:
        for nodes in chunks:
            work(nodes)
    return SequenceDataset(
        sequences=seqs,
        labels=graph.labels.copy(),
        node_ids=np.arange(n, dtype=np.int64),
        config=config,
        num_relations=graph.num_relations,
        variant=variant,
    )


# Binary layout (little-endian):
#   header: magic 8s "GAGASEQ\0", version u32, N u64, S u32, d u32, K u32,
#           R u32, C u32, alpha f64                               (48 bytes)
#   N records: node_id u64, label i8 (-1 unlabeled), S*d float32 row-major
SEQ_MAGIC = b"GAGASEQ\0"
SEQ_VERSION = 1
_SEQ_HEADER = struct.Struct("<8sIQIIIIId")


def _record_dtype(s: int, d: int) -> np.dtype:
    return np.dtype([("node_id", "<u8"), ("label", "i1"), ("x", "<f4", (s, d))])


def read_sequence_header(data: bytes, source: str = "<bytes>") -> dict:
    if len(data) < _SEQ_HEADER.size:
        raise ValueError(f"{source}: truncated sequence file header")
    magic, version, n, s, d, k, r, c, alpha = _SEQ_HEADER.unpack_from(data)
    if magic != SEQ_MAGIC:
        raise ValueError(f"{source}: not a sequence file (bad magic)")
    if version != SEQ_VERSION:
        raise ValueError(f"{source}: unsupported sequence file version {version}")
    config = GroupAggConfig(num_hops=k, alpha=alpha, num_classes=c)
    if s == config.sequence_length(r, VARIANT_GAGA):
        variant = VARIANT_GAGA
    elif s == config.sequence_length(r, VARIANT_GT):
        variant = VARIANT_GT
    else:
        raise ValueError(f"{source}: sequence length {s} inconsistent with R={r}, K={k}")
    return {"num_nodes": n, "seq_len": s, "feature_dim": d, "config": config,
            "num_relations": r, "variant": variant}


def dataset_to_bytes(ds: SequenceDataset) -> bytes:
    head = _SEQ_HEADER.pack(
        SEQ_MAGIC, SEQ_VERSION, ds.num_nodes, ds.seq_len, ds.feature_dim,
        ds.config.num_hops, ds.num_relations, ds.config.num_classes, float(ds.config.alpha),
    )
    rec = np.empty(ds.num_nodes, dtype=_record_dtype(ds.seq_len, ds.feature_dim))
    rec["node_id"] = ds.node_ids
    rec["label"] = ds.labels
    rec["x"] = ds.sequences.astype("<f4")
    return head + rec.tobytes()


def dataset_from_bytes(data: bytes, source: str = "<bytes>") -> SequenceDataset:
    h = read_sequence_header(data, source)
    dtype = _record_dtype(h["seq_len"], h["feature_dim"])
    body = data[_SEQ_HEADER.size:]
    if len(body) != h["num_nodes"] * dtype.itemsize:
        raise ValueError(f"{source}: expected {h['num_nodes']} records, file size disagrees")
    rec = np.frombuffer(body, dtype=dtype)
    return SequenceDataset(
        sequences=rec["x"].astype(np.float64),
        labels=rec["label"].astype(np.int8),
        node_ids=rec["node_id"].astype(np.int64),
        config=h["config"],
        num_relations=h["num_relations"],
        variant=h["variant"],
    )
