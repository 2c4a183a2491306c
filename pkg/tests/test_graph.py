import numpy as np
import pytest
from numpy.testing import assert_array_equal

from gaga.graph import (
    CSR,
    ROLE_NONE,
    ROLE_TEST,
    ROLE_TRAIN,
    ROLE_VAL,
    GraphError,
    MissingFileError,
    NodeIdRangeError,
    NonFiniteFeatureError,
    RaggedRowError,
    SplitAssignment,
    SyntheticSpec,
    generate_synthetic,
    graph_stats,
    homophily_ratio,
    imbalance_ratio,
    load_graph,
    make_splits,
    save_graph,
)

from conftest import make_graph


def write_dataset(root, n, edges, labels, feats, name="r"):
    root.mkdir(exist_ok=True)
    (root / "meta.txt").write_text(
        f"num_nodes={n}\nnum_relations=1\nfeature_dim={len(feats[0])}\nrelation_names={name}\n"
    )
    (root / "features.tsv").write_text(
        "".join(f"{i}\t" + "\t".join(map(str, row)) + "\n" for i, row in enumerate(feats))
    )
    (root / "labels.tsv").write_text("".join(f"{i}\t{y}\n" for i, y in labels.items()))
    (root / f"edges_{name}.tsv").write_text("".join(f"{u}\t{v}\n" for u, v in edges))


def test_csr_symmetrizes_dedups_and_drops_self_loops():
    csr = CSR.from_edges(4, [0, 1, 0, 2, 3], [1, 0, 1, 2, 0])
    assert csr.nnz == 4
    assert_array_equal(csr.neighbors(0), [1, 3])
    assert_array_equal(csr.neighbors(2), [])
    assert_array_equal(csr.degrees(), [2, 1, 0, 1])


def test_load_small_dataset(tmp_path):
    write_dataset(tmp_path / "d", 4, [(0, 1), (2, 3)], {0: 0, 1: 1, 3: 0}, [[1, 2]] * 4)
    g = load_graph(tmp_path / "d")
    assert (g.num_nodes, g.num_relations, g.feature_dim) == (4, 1, 2)
    assert g.relations[0].nnz == 4
    assert_array_equal(g.labels, [0, 1, -1, 0])


def test_load_duplicate_and_reversed_edges_collapse(tmp_path):
    write_dataset(tmp_path / "d", 3, [(0, 1), (1, 0), (0, 1), (1, 2)], {0: 0}, [[0.5]] * 3)
    assert load_graph(tmp_path / "d").relations[0].nnz == 4


def test_load_rejects_out_of_range_node(tmp_path):
    write_dataset(tmp_path / "d", 4, [(0, 9)], {0: 0}, [[1.0]] * 4)
    with pytest.raises(NodeIdRangeError, match="node id out of range") as err:
        load_graph(tmp_path / "d")
    assert "edges_r.tsv" in str(err.value) and ":1" in str(err.value)


def test_load_rejects_ragged_rows(tmp_path):
    write_dataset(tmp_path / "d", 2, [], {}, [[1.0, 2.0], [3.0]])
    with pytest.raises(RaggedRowError, match="features.tsv"):
        load_graph(tmp_path / "d")


def test_load_rejects_non_finite_feature(tmp_path):
    write_dataset(tmp_path / "d", 2, [], {}, [[1.0], ["nan"]])
    with pytest.raises(NonFiniteFeatureError, match=":2"):
        load_graph(tmp_path / "d")


def test_load_missing_file_is_named(tmp_path):
    write_dataset(tmp_path / "d", 2, [], {}, [[1.0], [2.0]])
    (tmp_path / "d" / "labels.tsv").unlink()
    with pytest.raises(MissingFileError, match="labels.tsv"):
        load_graph(tmp_path / "d")


def test_save_load_round_trip_is_identical(tmp_path, rng):
    from conftest import random_graph

    g = random_graph(rng, 40, 2)
    save_graph(g, tmp_path / "a")
    g1 = load_graph(tmp_path / "a")
    save_graph(g1, tmp_path / "b")
    g2 = load_graph(tmp_path / "b")
    for r in range(2):
        assert_array_equal(g1.relations[r].indptr, g2.relations[r].indptr)
        assert_array_equal(g1.relations[r].indices, g2.relations[r].indices)
        assert_array_equal(g.relations[r].indices, g1.relations[r].indices)
    assert_array_equal(g.features, g1.features)
    assert_array_equal(g.labels, g1.labels)


def test_homophily_path_example(path4):
    assert homophily_ratio(path4, 0) == pytest.approx(4 / 6, abs=1e-15)


def test_homophily_all_same_label_edges():
    g = make_graph(4, [[(0, 1), (2, 3)]], [0, 0, 1, 1])
    assert homophily_ratio(g, 0) == 1.0


def test_homophily_ignores_unlabeled_endpoints():
    g = make_graph(4, [[(0, 1), (1, 2), (2, 3)]], [1, 1, -1, 0])
    assert homophily_ratio(g, 0) == 1.0


def test_homophily_undefined_without_labeled_edges():
    g = make_graph(3, [[(0, 1)]], [-1, 0, 1])
    with pytest.raises(GraphError, match="undefined ratio"):
        homophily_ratio(g, 0)


def test_imbalance_ratio_examples():
    g = make_graph(16, [[]], [0] * 12 + [1] * 4)
    assert imbalance_ratio(g) == 3.0
    assert imbalance_ratio(make_graph(4, [[]], [0, 1, 0, 1])) == 1.0
    with pytest.raises(GraphError):
        imbalance_ratio(make_graph(3, [[]], [0, 0, -1]))


def test_graph_stats_table(path4):
    st = graph_stats(path4)
    assert st.edge_counts == [3]
    text = st.format_table()
    assert "0.6667" in text and "rel0" in text


def _balanced(n, ir=1.0):
    n_fraud = int(round(n / (1 + ir)))
    return make_graph(n, [[]], [1] * n_fraud + [0] * (n - n_fraud))


@pytest.mark.parametrize("label_frac,observed", [(0.4, 400), (0.1, 100)])
def test_make_splits_counts(label_frac, observed):
    g = _balanced(1000, ir=4.0)
    s = make_splits(g, 0.4, 0.1, label_frac, seed=1)
    assert len(s.indices(ROLE_TRAIN)) == 400
    assert len(s.indices(ROLE_VAL)) == 100
    assert len(s.indices(ROLE_TEST)) == 500
    assert int(s.observed.sum()) == observed
    s.check_invariants()


def test_make_splits_is_stratified_and_deterministic():
    g = _balanced(997, ir=5.3)
    a = make_splits(g, 0.4, 0.1, 0.2, seed=3)
    b = make_splits(g, 0.4, 0.1, 0.2, seed=3)
    assert_array_equal(a.roles, b.roles)
    assert_array_equal(a.observed, b.observed)
    for c in (0, 1):
        members = g.labels == c
        n_c = members.sum()
        for role, frac in ((ROLE_TRAIN, 0.4), (ROLE_VAL, 0.1), (ROLE_TEST, 0.5)):
            assert abs((a.roles[members] == role).sum() - frac * n_c) <= 1
    assert not np.any(a.observed & (a.roles != ROLE_TRAIN))
    assert make_splits(g, 0.4, 0.1, 0.2, seed=4).roles.tolist() != a.roles.tolist()


def test_make_splits_unlabeled_nodes_get_no_role():
    g = make_graph(6, [[]], [0, 0, 1, 1, -1, -1])
    s = make_splits(g, 0.5, 0.5, 0.5, seed=0)
    assert list(s.roles[4:]) == [ROLE_NONE, ROLE_NONE]


def test_make_splits_rejects_bad_fractions():
    g = _balanced(100)
    with pytest.raises(GraphError):
        make_splits(g, 0.4, 0.1, 0.5, seed=0)
    with pytest.raises(GraphError):
        make_splits(g, 0.8, 0.3, 0.1, seed=0)
    with pytest.raises(GraphError, match="too few"):
        make_splits(make_graph(3, [[]], [0, 0, 1]), 0.1, 0.1, 0.1, seed=0)


def test_split_file_round_trip(tmp_path):
    s = make_splits(_balanced(50), 0.4, 0.1, 0.2, seed=9)
    s.save(tmp_path / "splits.tsv")
    t = SplitAssignment.load(tmp_path / "splits.tsv", num_nodes=50)
    assert_array_equal(s.roles, t.roles)
    assert_array_equal(s.observed, t.observed)
    assert t.seed == 9
    with pytest.raises(GraphError):
        SplitAssignment.load(tmp_path / "splits.tsv", num_nodes=51)


def test_synthetic_homophily_and_imbalance():
    spec = SyntheticSpec(num_nodes=5000, num_relations=1, homophily=[0.15], imbalance_ratio=6,
                         feature_dim=4, avg_degree=10, seed=7)
    g = generate_synthetic(spec)
    assert 0.10 <= homophily_ratio(g, 0) <= 0.20
    assert imbalance_ratio(g) == pytest.approx(6.0, rel=0.01)
    g.check_invariants()


def test_synthetic_full_homophily_and_balanced_half():
    g = generate_synthetic(SyntheticSpec(num_nodes=2000, homophily=[1.0], avg_degree=6, seed=1))
    assert homophily_ratio(g, 0) == 1.0
    g = generate_synthetic(SyntheticSpec(num_nodes=2000, homophily=[0.5], avg_degree=6, seed=2))
    assert abs(homophily_ratio(g, 0) - 0.5) <= 0.05


def test_synthetic_is_deterministic_and_separated():
    spec = SyntheticSpec(num_nodes=3000, num_relations=2, homophily=[0.2, 0.8], feature_dim=16,
                         mean_separation=2.0, avg_degree=5, seed=5)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert_array_equal(a.features, b.features)
    assert_array_equal(a.relations[1].indices, b.relations[1].indices)
    gap = a.features[a.labels == 1].mean(axis=0) - a.features[a.labels == 0].mean(axis=0)
    assert np.linalg.norm(gap) == pytest.approx(2.0, abs=0.25)


def test_synthetic_rejects_infeasible_degree():
    with pytest.raises(GraphError, match="infeasible degree"):
        generate_synthetic(SyntheticSpec(num_nodes=5, avg_degree=5))


def test_synthetic_spec_text():
    spec = SyntheticSpec.from_text("num_nodes=10\nnum_relations=2\nhomophily=0.3\n# note\nseed=4\n")
    assert spec.homophily == [0.3, 0.3] and spec.seed == 4
    with pytest.raises(GraphError, match="unknown key"):
        SyntheticSpec.from_text("nodes=3")
