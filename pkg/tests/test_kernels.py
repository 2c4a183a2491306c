import numpy as np
import pytest
from numpy.testing import assert_allclose

from gaga import kernels
from gaga.groupagg import GroupAggConfig, group_assignment, preprocess_all

from conftest import random_graph, random_observed

BACKENDS = kernels.available_backends()


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
@pytest.mark.parametrize("alpha", [1.0, 0.5, 0.0])
def test_backends_agree(rng, alpha):
    g = random_graph(rng, 200, 1, p_edge=0.03, d=5)
    obs = random_observed(rng, g.labels, 0.5)
    rel = g.relations[0]
    group_of = group_assignment(g.labels, obs)
    nodes = np.arange(200)
    out = {b: kernels.group_hop_sums(rel.indptr, rel.indices, g.features, group_of, nodes, 3, alpha, backend=b)
           for b in BACKENDS}
    assert_allclose(out["compiled"], out["python"], rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("backend", BACKENDS)
def test_each_backend_preprocesses(rng, backend):
    g = random_graph(rng, 60, 2, p_edge=0.05)
    obs = random_observed(rng, g.labels, 0.3)
    ds = preprocess_all(g, GroupAggConfig(num_hops=2), obs, backend=backend)
    ref = preprocess_all(g, GroupAggConfig(num_hops=2), obs, backend="python")
    assert_allclose(ds.sequences, ref.sequences, atol=1e-13)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.group_hop_sums(np.array([0]), np.array([], np.int64), np.zeros((0, 1)),
                               np.zeros(0, np.int8), np.array([], np.int64), 1, 1.0, backend="gpu")


def test_kernel_validates_group_ids(rng):
    g = random_graph(rng, 10, 1)
    rel = g.relations[0]
    bad = np.full(10, 7, dtype=np.int8)
    with pytest.raises(ValueError):
        kernels.group_hop_sums(rel.indptr, rel.indices, g.features, bad, np.arange(10), 1, 1.0)
