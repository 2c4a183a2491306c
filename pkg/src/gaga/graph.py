"""Multi-relational attributed graphs with partial binary labels.

Storage, dataset-directory IO, summary statistics, stratified splits
and a synthetic generator with controllable homophily.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gaga._io import atomic_write_text

BENIGN = 0
FRAUD = 1
UNLABELED = -1
NUM_CLASSES = 2

ROLE_TRAIN = "train"
ROLE_VAL = "val"
ROLE_TEST = "test"
ROLE_NONE = "unlabeled"
ROLES = (ROLE_TRAIN, ROLE_VAL, ROLE_TEST, ROLE_NONE)


class GraphError(ValueError):
    """Invalid graph contents or an undefined statistic."""


class DatasetError(GraphError):
    """Parse failure in a dataset directory; carries file and line."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class MissingFileError(DatasetError):
    pass


class RaggedRowError(DatasetError):
    pass


class NodeIdRangeError(DatasetError):
    pass


class NonFiniteFeatureError(DatasetError):
    pass


class MalformedLineError(DatasetError):
    pass


@dataclass(frozen=True)
class CSR:
    """Symmetric binary adjacency in compressed sparse row form."""

    indptr: np.ndarray  # int64, length N+1
    indices: np.ndarray  # int64, sorted within each row

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed (row, col) pairs, one per stored entry."""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())
        return rows, self.indices

    @classmethod
    def from_edges(cls, num_nodes: int, u, v) -> "CSR":
        """Build from an undirected edge list: symmetrize, drop self-loops, dedupe."""
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        if u.shape != v.shape:
            raise GraphError("edge endpoint arrays differ in length")
        if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= num_nodes):
            raise GraphError("node id out of range")
        keep = u != v
        rows = np.concatenate([u[keep], v[keep]])
        cols = np.concatenate([v[keep], u[keep]])
        key = np.unique(rows * num_nodes + cols)
        rows, cols = key // num_nodes, key % num_nodes
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(indptr, cols.astype(np.int64))


@dataclass
class MultiRelationGraph:
    features: np.ndarray  # (N, d) float64
    labels: np.ndarray  # (N,) int8, -1 where unlabeled
    relations: list[CSR]
    relation_names: list[str]

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise GraphError("features must be an N x d matrix")
        if not np.isfinite(self.features).all():
            raise GraphError("features contain non-finite values")
        if self.labels.shape != (n,):
            raise GraphError("labels must have one entry per node")
        if not np.isin(self.labels, (UNLABELED, BENIGN, FRAUD)).all():
            raise GraphError("labels must be 0, 1 or -1 (unlabeled)")
        if not self.relations:
            raise GraphError("at least one relation is required")
        if len(self.relation_names) != len(self.relations):
            raise GraphError("one name per relation is required")
        for name, rel in zip(self.relation_names, self.relations):
            if rel.num_nodes != n:
                raise GraphError(f"relation {name!r} has {rel.num_nodes} rows, expected {n}")

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def check_invariants(self) -> None:
        """Full structural validation (symmetry, bounds, no self-loops)."""
        n = self.num_nodes
        for name, rel in zip(self.relation_names, self.relations):
            rows, cols = rel.edge_arrays()
            if len(cols) and (cols.min() < 0 or cols.max() >= n):
                raise GraphError(f"{name}: column index out of range")
            if np.any(rows == cols):
                raise GraphError(f"{name}: self-loop stored")
            fwd = rows * n + cols
            if len(np.unique(fwd)) != len(fwd):
                raise GraphError(f"{name}: duplicate edge")
            if not np.array_equal(np.sort(fwd), np.sort(cols * n + rows)):
                raise GraphError(f"{name}: adjacency not symmetric")


# ---------------------------------------------------------------- statistics


def homophily_ratio(graph: MultiRelationGraph, relation: int) -> float:
    """Fraction of directed edges joining equal labels, over fully labeled edges."""
    rows, cols = graph.relations[relation].edge_arrays()
    yu, yv = graph.labels[rows], graph.labels[cols]
    known = (yu != UNLABELED) & (yv != UNLABELED)
    total = int(known.sum())
    if total == 0:
        raise GraphError(
            f"undefined ratio: relation {graph.relation_names[relation]!r} "
            "has no edge with both endpoints labeled"
        )
    return float(np.count_nonzero(yu[known] == yv[known]) / total)


def imbalance_ratio(graph: MultiRelationGraph) -> float:
    n_benign = int(np.count_nonzero(graph.labels == BENIGN))
    n_fraud = int(np.count_nonzero(graph.labels == FRAUD))
    if n_benign == 0 or n_fraud == 0:
        raise GraphError("imbalance ratio needs both classes among labeled nodes")
    return n_benign / n_fraud


@dataclass
class GraphStats:
    num_nodes: int
    feature_dim: int
    imbalance_ratio: float
    relation_names: list[str]
    edge_counts: list[int]  # undirected edges per relation
    homophily: list[float]

    def format_table(self) -> str:
        lines = [
            f"#Nodes (IR)\t{self.num_nodes:,} ({self.imbalance_ratio:.1f})",
            f"#Feat\t{self.feature_dim}",
            "Relation\t#Edges\tphi_r",
        ]
        for name, e, h in zip(self.relation_names, self.edge_counts, self.homophily):
            lines.append(f"{name}\t{e:,}\t{h:.4f}")
        return "\n".join(lines)


def graph_stats(graph: MultiRelationGraph) -> GraphStats:
    return GraphStats(
        num_nodes=graph.num_nodes,
        feature_dim=graph.feature_dim,
        imbalance_ratio=imbalance_ratio(graph),
        relation_names=list(graph.relation_names),
        edge_counts=[rel.nnz // 2 for rel in graph.relations],
        homophily=[homophily_ratio(graph, r) for r in range(graph.num_relations)],
    )


# -------------------------------------------------------------------- splits


@dataclass
class SplitAssignment:
    roles: np.ndarray  # (N,) object array of role strings
    observed: np.ndarray  # (N,) bool
    seed: int

    def indices(self, role: str) -> np.ndarray:
        return np.flatnonzero(self.roles == role)

    def check_invariants(self) -> None:
        if not np.isin(self.roles, ROLES).all():
            raise GraphError("unknown role in split assignment")
        if np.any(self.observed & (self.roles != ROLE_TRAIN)):
            raise GraphError("observed labels must be a subset of the train split")

    def save(self, path) -> None:
        lines = [
            f"{i}\t{role}\t{int(obs)}"
            for i, (role, obs) in enumerate(zip(self.roles, self.observed))
        ]
        atomic_write_text(path, f"# seed={self.seed}\n" + "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path, num_nodes: int | None = None) -> "SplitAssignment":
        path = Path(path)
        if not path.exists():
            raise MissingFileError(path, None, "missing file")
        seed = 0
        entries: dict[int, tuple[str, bool]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if line.startswith("# seed="):
                        seed = int(line.split("=", 1)[1])
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or parts[1] not in ROLES or parts[2] not in ("0", "1"):
                    raise MalformedLineError(path, lineno, "expected node_id, role, observed flag")
                entries[int(parts[0])] = (parts[1], parts[2] == "1")
        n = num_nodes if num_nodes is not None else len(entries)
        if sorted(entries) != list(range(n)):
            raise NodeIdRangeError(path, None, f"split must list every node id 0..{n - 1} once")
        roles = np.array([entries[i][0] for i in range(n)], dtype=object)
        observed = np.array([entries[i][1] for i in range(n)], dtype=bool)
        out = cls(roles, observed, seed)
        out.check_invariants()
        return out


def make_splits(
    graph: MultiRelationGraph,
    train_frac: float,
    val_frac: float,
    label_frac: float,
    seed: int,
) -> SplitAssignment:
    """Per-class stratified train/val/test roles plus an observed-label subset.

    Unlabeled nodes get the ``unlabeled`` role. Observed counts are
    ``round(label_frac * n_c)`` per class, drawn uniformly from that class's
    train nodes.
    """
    for name, frac in (("train_frac", train_frac), ("val_frac", val_frac), ("label_frac", label_frac)):
        if not 0.0 < frac <= 1.0:
            raise GraphError(f"{name} must be in (0, 1], got {frac}")
    if train_frac + val_frac > 1.0 + 1e-12:
        raise GraphError("train_frac + val_frac must not exceed 1")
    if label_frac > train_frac + 1e-12:
        raise GraphError("label_frac must not exceed train_frac")

    rng = np.random.default_rng(seed)
    n = graph.num_nodes
    roles = np.full(n, ROLE_NONE, dtype=object)
    observed = np.zeros(n, dtype=bool)
    for c in (BENIGN, FRAUD):
        members = np.flatnonzero(graph.labels == c)
        n_c = len(members)
        n_train = int(round(train_frac * n_c))
        n_val = int(round(val_frac * n_c))
        n_obs = int(round(label_frac * n_c))
        if n_c == 0 or n_train == 0 or n_train + n_val > n_c:
            raise GraphError(f"class {c}: {n_c} labeled nodes are too few for the requested split")
        if n_obs > n_train:
            raise GraphError(f"class {c}: {n_obs} observed labels exceed {n_train} train nodes")
        perm = members[rng.permutation(n_c)]
        roles[perm[:n_train]] = ROLE_TRAIN
        roles[perm[n_train:n_train + n_val]] = ROLE_VAL
        roles[perm[n_train + n_val:]] = ROLE_TEST
        train_nodes = perm[:n_train]
        observed[train_nodes[rng.permutation(n_train)[:n_obs]]] = True
    return SplitAssignment(roles, observed, seed)


# ----------------------------------------------------------------------- IO


def _read_meta(path: Path) -> dict[str, str]:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MalformedLineError(path, lineno, "expected key=value")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    for key in ("num_nodes", "num_relations", "feature_dim", "relation_names"):
        if key not in meta:
            raise MalformedLineError(path, None, f"missing key {key!r}")
    return meta


def _parse_id(token: str, n: int, path: Path, lineno: int) -> int:
    try:
        i = int(token)
    except ValueError:
        raise MalformedLineError(path, lineno, f"bad node id {token!r}") from None
    if not 0 <= i < n:
        raise NodeIdRangeError(path, lineno, f"node id out of range: {i} (N={n})")
    return i


def load_graph(dataset_dir) -> MultiRelationGraph:
    root = Path(dataset_dir)

    def need(name: str) -> Path:
        p = root / name
        if not p.is_file():
            raise MissingFileError(p, None, "missing file")
        return p

    meta_path = need("meta.txt")
    meta = _read_meta(meta_path)
    try:
        n = int(meta["num_nodes"])
        r = int(meta["num_relations"])
        d = int(meta["feature_dim"])
    except ValueError:
        raise MalformedLineError(meta_path, None, "num_nodes/num_relations/feature_dim must be integers") from None
    names = [s.strip() for s in meta["relation_names"].split(",") if s.strip()]
    if len(names) != r:
        raise MalformedLineError(meta_path, None, f"{len(names)} relation names for num_relations={r}")

    feat_path = need("features.tsv")
    features = np.zeros((n, d), dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    with open(feat_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            i = _parse_id(parts[0], n, feat_path, lineno)
            if len(parts) - 1 != d:
                raise RaggedRowError(feat_path, lineno, f"expected {d} feature values, found {len(parts) - 1}")
            try:
                row = [float(t) for t in parts[1:]]
            except ValueError:
                raise MalformedLineError(feat_path, lineno, "unparseable decimal") from None
            if not all(math.isfinite(x) for x in row):
                raise NonFiniteFeatureError(feat_path, lineno, "non-finite feature value")
            features[i] = row
            seen[i] = True
    if not seen.all():
        missing = int(np.flatnonzero(~seen)[0])
        raise RaggedRowError(feat_path, None, f"no feature row for node {missing}")

    label_path = need("labels.tsv")
    labels = np.full(n, UNLABELED, dtype=np.int8)
    with open(label_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise MalformedLineError(label_path, lineno, "expected node_id TAB {0,1}")
            labels[_parse_id(parts[0], n, label_path, lineno)] = int(parts[1])

    relations = []
    for name in names:
        edge_path = need(f"edges_{name}.tsv")
        us, vs = [], []
        with open(edge_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise MalformedLineError(edge_path, lineno, "expected u TAB v")
                us.append(_parse_id(parts[0], n, edge_path, lineno))
                vs.append(_parse_id(parts[1], n, edge_path, lineno))
        relations.append(CSR.from_edges(n, us, vs))
    return MultiRelationGraph(features, labels, relations, names)


def save_graph(graph: MultiRelationGraph, dataset_dir) -> None:
    """Write the dataset-directory format; each undirected edge once (u < v)."""
    root = Path(dataset_dir)
    root.mkdir(parents=True, exist_ok=True)
    meta = (
        f"num_nodes={graph.num_nodes}\n"
        f"num_relations={graph.num_relations}\n"
        f"feature_dim={graph.feature_dim}\n"
        f"relation_names={','.join(graph.relation_names)}\n"
    )
    atomic_write_text(root / "meta.txt", meta)
    feat_lines = [
        str(i) + "\t" + "\t".join(repr(float(x)) for x in row)
        for i, row in enumerate(graph.features)
    ]
    atomic_write_text(root / "features.tsv", "\n".join(feat_lines) + "\n")
    lab = np.flatnonzero(graph.labels != UNLABELED)
    atomic_write_text(
        root / "labels.tsv", "".join(f"{i}\t{int(graph.labels[i])}\n" for i in lab)
    )
    for name, rel in zip(graph.relation_names, graph.relations):
        rows, cols = rel.edge_arrays()
        upper = rows < cols
        body = "".join(f"{u}\t{v}\n" for u, v in zip(rows[upper], cols[upper]))
        atomic_write_text(root / f"edges_{name}.tsv", body)


# ---------------------------------------------------------------- synthetic


@dataclass
class SyntheticSpec:
    num_nodes: int = 2000
    num_relations: int = 1
    homophily: list[float] = field(default_factory=lambda: [0.5])
    imbalance_ratio: float = 1.0
    feature_dim: int = 8
    mean_separation: float = 1.0
    avg_degree: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        if min(self.num_nodes, self.num_relations, self.feature_dim) <= 0:
            raise GraphError("counts must be positive")
        if self.imbalance_ratio <= 0 or self.avg_degree <= 0:
            raise GraphError("imbalance_ratio and avg_degree must be positive")
        if len(self.homophily) != self.num_relations:
            raise GraphError("one homophily target per relation is required")
        if any(not 0.0 <= h <= 1.0 for h in self.homophily):
            raise GraphError("homophily targets must lie in [0, 1]")
        if self.avg_degree > self.num_nodes - 1:
            raise GraphError(f"infeasible degree {self.avg_degree} for {self.num_nodes} nodes")

    @classmethod
    def from_text(cls, text: str) -> "SyntheticSpec":
        kwargs: dict = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise GraphError(f"line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in ("num_nodes", "num_relations", "feature_dim", "seed"):
                kwargs[key] = int(value)
            elif key in ("imbalance_ratio", "mean_separation", "avg_degree"):
                kwargs[key] = float(value)
            elif key == "homophily":
                kwargs[key] = [float(s) for s in value.split(",")]
            else:
                raise GraphError(f"line {lineno}: unknown key {key!r}")
        spec = cls(**kwargs)
        if len(spec.homophily) == 1 and spec.num_relations > 1:
            spec.homophily = spec.homophily * spec.num_relations
        return spec


def _sample_pairs(rng, a: np.ndarray, b: np.ndarray | None, count: int, taken: set, n: int) -> list:
    """Draw ``count`` distinct new undirected pairs, u from a and v from b (or a)."""
    out = []
    same = b is None
    pool_b = a if same else b
    if same:
        capacity = len(a) * (len(a) - 1) // 2
    else:
        capacity = len(a) * len(b)
    if count > capacity:
        raise GraphError(f"infeasible degree: {count} edges requested among {capacity} possible pairs")
    while len(out) < count:
        need = count - len(out)
        us = a[rng.integers(0, len(a), size=2 * need + 8)]
        vs = pool_b[rng.integers(0, len(pool_b), size=2 * need + 8)]
        for u, v in zip(us.tolist(), vs.tolist()):
            if u == v:
                continue
            key = min(u, v) * n + max(u, v)
            if key in taken:
                continue
            taken.add(key)
            out.append((u, v))
            if len(out) == count:
                break
    return out


def generate_synthetic(spec: SyntheticSpec) -> MultiRelationGraph:
    """Labeled random graph whose per-relation homophily matches the targets.

    Edge counts are fixed up front: ``round(h * E)`` same-label edges split
    between classes in proportion to their possible pairs, the remainder
    drawn uniformly between classes. Features are isotropic unit Gaussians,
    the fraud mean shifted by ``mean_separation`` (Euclidean, spread evenly
    over all dimensions).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.num_nodes
    n_fraud = max(1, int(round(n / (1.0 + spec.imbalance_ratio))))
    labels = np.zeros(n, dtype=np.int8)
    labels[rng.permutation(n)[:n_fraud]] = FRAUD
    benign = np.flatnonzero(labels == BENIGN)
    fraud = np.flatnonzero(labels == FRAUD)

    shift = np.full(spec.feature_dim, spec.mean_separation / math.sqrt(spec.feature_dim))
    features = rng.standard_normal((n, spec.feature_dim))
    features[fraud] += shift

    n_edges = int(round(n * spec.avg_degree / 2))
    pairs_b = len(benign) * (len(benign) - 1) // 2
    pairs_f = len(fraud) * (len(fraud) - 1) // 2
    relations = []
    for h in spec.homophily:
        n_same = int(round(h * n_edges))
        n_cross = n_edges - n_same
        share_b = pairs_b / (pairs_b + pairs_f) if pairs_b + pairs_f else 0.0
        n_bb = int(round(n_same * share_b))
        n_ff = n_same - n_bb
        taken: set = set()
        edges = []
        edges += _sample_pairs(rng, benign, None, n_bb, taken, n)
        edges += _sample_pairs(rng, fraud, None, n_ff, taken, n)
        edges += _sample_pairs(rng, benign, fraud, n_cross, taken, n)
        arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
        relations.append(CSR.from_edges(n, arr[:, 0], arr[:, 1]))
    names = [f"rel{r}" for r in range(spec.num_relations)]
    return MultiRelationGraph(features, labels, relations, names)
