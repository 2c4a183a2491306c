import numpy as np
import pytest

from gaga.graph import CSR, UNLABELED, MultiRelationGraph


def make_graph(n, edge_lists, labels, features=None, names=None, seed=0):
    """Graph from per-relation (u, v) lists; features default to seeded normals."""
    rng = np.random.default_rng(seed)
    if features is None:
        features = rng.normal(size=(n, 3))
    rels = []
    for edges in edge_lists:
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        rels.append(CSR.from_edges(n, e[:, 0], e[:, 1]))
    names = names or [f"rel{i}" for i in range(len(rels))]
    return MultiRelationGraph(
        features=np.asarray(features, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int8),
        relations=rels,
        relation_names=names,
    )


def random_graph(rng, n, num_relations, p_edge=None, d=3, unlabeled_frac=0.1):
    p_edge = p_edge if p_edge is not None else min(1.0, 3.0 / n)
    labels = (rng.random(n) < 0.3).astype(np.int8)
    labels[rng.random(n) < unlabeled_frac] = UNLABELED
    edge_lists = []
    for _ in range(num_relations):
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(len(iu)) < p_edge
        edge_lists.append(np.stack([iu[keep], ju[keep]], axis=1))
    return make_graph(n, edge_lists, labels, features=rng.normal(size=(n, d)))


def random_observed(rng, labels, frac):
    return (rng.random(len(labels)) < frac) & (np.asarray(labels) >= 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path4():
    # 0-1-2-3 with labels 1,1,0,0
    return make_graph(4, [[(0, 1), (1, 2), (2, 3)]], [1, 1, 0, 0])


# one pass/fail line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
