import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gaga import autodiff as ad
from gaga.autodiff import Parameter, Tensor, grad_check
from gaga.graph import (
    ROLE_TRAIN,
    ROLES,
    SyntheticSpec,
    generate_synthetic,
    homophily_ratio,
    make_splits,
)
from gaga.groupagg import GroupAggConfig, build_sequence, khop_neighbors, matrix_oracle
from gaga.metrics import auc, average_precision
from gaga.model import GagaModel, ModelConfig

from conftest import make_graph, random_graph, random_observed

seeds = st.integers(0, 2**32 - 1)
FAST = settings(max_examples=25, deadline=None)


def scores_and_labels(seed, n):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.4).astype(int)
    y[0], y[1] = 0, 1
    return np.round(rng.normal(size=n), 1), y


@FAST
@given(seeds, st.integers(2, 60), st.sampled_from(["exp", "cube", "affine"]))
def test_rank_metrics_invariant_to_monotone_maps(seed, n, kind):
    s, y = scores_and_labels(seed, n)
    t = {"exp": np.exp(s), "cube": s ** 3 + s, "affine": 3.0 * s - 7.0}[kind]
    assert auc(t, y) == auc(s, y)
    assert average_precision(t, y) == average_precision(s, y)


@FAST
@given(seeds, st.integers(1, 4), st.integers(1, 9))
def test_softmax_normalized_and_shift_invariant(seed, rows, cols):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(rows, cols)) * 10
    y = ad.row_softmax(Tensor(x)).value
    assert_allclose(y.sum(axis=-1), 1.0, rtol=0, atol=1e-12)
    assert_allclose(ad.row_softmax(Tensor(x + rng.normal(size=(rows, 1)) * 50)).value, y, atol=1e-12)


@FAST
@given(seeds, st.integers(2, 32))
def test_layer_norm_moments(seed, width):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, width)) * rng.uniform(0.5, 10) + rng.normal() * 5
    y = ad.layer_norm(Tensor(x), Tensor(np.ones(width)), Tensor(np.zeros(width)), eps=1e-12).value
    assert_allclose(y.mean(axis=-1), 0.0, atol=1e-8)
    assert_allclose(y.var(axis=-1), 1.0, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_random_shapes_grad_check(seed, b, s, d, k):
    rng = np.random.default_rng(seed)
    x = Parameter("x", rng.normal(size=(b, s, d)))
    w = Parameter("w", rng.normal(size=(d, k)) / np.sqrt(d))
    gain = Parameter("gain", rng.normal(size=k))
    bias = Parameter("bias", rng.normal(size=k))
    c = Tensor(rng.normal(size=(b, s, k)))

    def closure():
        # layer norm of a width-2 row, or of a row that is a multiple of w (d=1),
        # does not depend on its input except through eps
        h = ad.matmul(x, w)
        if k > 2 and d > 1:
            h = ad.layer_norm(h, gain, bias)
        att = ad.row_softmax(ad.scale(ad.matmul(h, ad.transpose(h)), 1.0 / np.sqrt(k)))
        return ad.total(ad.mul(ad.activation(ad.matmul(att, h), "gelu"), c))

    # random draws put some components near zero, below the ~1e-10 roundoff of
    # the differences; the floor keeps those from reading as relative error
    report = grad_check(closure, [x, w, gain, bias], h=1e-5, tol=1e-4, floor=1e-5)
    assert report.passed, (report.worst, report.max_error)


@FAST
@given(seeds)
def test_homophily_depends_only_on_label_equality(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 30, 1, p_edge=0.2)
    flipped = make_graph(30, [np.stack(g.relations[0].edge_arrays(), 1)],
                         np.where(g.labels >= 0, 1 - g.labels, g.labels), features=g.features)
    assert homophily_ratio(flipped, 0) == homophily_ratio(g, 0)


@FAST
@given(seeds, st.floats(0.1, 0.6), st.floats(0.05, 0.3))
def test_splits_partition_nodes(seed, train_frac, val_frac):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 200, 1)
    s = make_splits(g, train_frac, val_frac, train_frac / 2, seed)
    assert np.isin(s.roles, ROLES).all()
    assert not np.any(s.observed & (s.roles != ROLE_TRAIN))
    assert abs(int(s.observed.sum()) - train_frac / 2 * int((g.labels >= 0).sum())) <= 2


@FAST
@given(seeds, st.integers(1, 4))
def test_neighborhoods_are_nested(seed, k):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 40, 1, p_edge=0.06)
    for v in range(0, 40, 7):
        hops = khop_neighbors(g, 0, v, k + 1).hops
        for a, b in zip(hops, hops[1:]):
            assert np.isin(a, b).all()


@settings(max_examples=10, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3), st.floats(0.0, 1.0), st.sampled_from([0.0, 0.5, 1.0]))
def test_oracle_equivalence(seed, r, k, frac, alpha):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 60))
    g = random_graph(rng, n, r, p_edge=float(rng.uniform(0.02, 0.2)))
    obs = random_observed(rng, g.labels, frac)
    cfg = GroupAggConfig(num_hops=k, alpha=alpha)
    seqs = np.stack([build_sequence(g, v, cfg, obs) for v in range(n)])
    assert seqs.shape[1] == r * (3 * k + 1)
    block = 3 * k + 1
    for rel in range(r):
        for hop in range(1, k + 1):
            for gi, group in enumerate((0, 1, "*")):
                want = matrix_oracle(g, rel, hop, group, obs, alpha)
                assert_allclose(seqs[:, rel * block + 3 * (hop - 1) + 1 + gi], want, rtol=0, atol=1e-9)


@FAST
@given(seeds, st.floats(1e-3, 1e6))
def test_probabilities_stay_inside_unit_interval(seed, magnitude):
    rng = np.random.default_rng(seed)
    m = GagaModel(ModelConfig(input_dim=2, hidden=4, n_layers=1, n_heads=2, num_hops=1, num_relations=1,
                              dropout=0.0), seed=seed % 1000)
    p = m.predict_proba(rng.normal(size=(6, 4, 2)) * magnitude)
    assert np.all((p > 0) & (p < 1))


def test_synthetic_homophily_round_trip_over_seeds():
    for seed in range(10):
        target = [0.1 + 0.08 * seed]
        g = generate_synthetic(SyntheticSpec(num_nodes=2000, homophily=target, imbalance_ratio=3.0,
                                             avg_degree=5, seed=seed))
        assert abs(homophily_ratio(g, 0) - target[0]) <= 0.05
