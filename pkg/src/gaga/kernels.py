"""Backend selection for the preprocessing hot loop.

The compiled extension (``gaga._ckernels``) is used when it imports; the
numpy fallback in ``gaga._pykernels`` otherwise. Set ``GAGA_PURE_PYTHON=1``
to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from gaga import _pykernels

_compiled = None
if not os.environ.get("GAGA_PURE_PYTHON"):
    try:
        from gaga import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def available_backends() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def group_hop_sums(indptr, indices, features, group_of, nodes, num_hops, alpha, backend=None):
    """Per-node, per-hop grouped aggregates under one relation.

    Returns an array of shape (len(nodes), 3 * num_hops, d); rows 3(k-1) .. 3k-1
    hold the (benign, fraud, unknown) vectors of hop k. ``group_of`` maps every
    node to 0, 1 or 2; each target is forced into group 2 of its own pipeline.
    """
    backend = backend or BACKEND
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    features = np.ascontiguousarray(features, dtype=np.float64)
    group_of = np.ascontiguousarray(group_of, dtype=np.int8)
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    n = len(indptr) - 1
    if group_of.shape != (n,) or (n and (group_of.min() < 0 or group_of.max() > 2)):
        raise ValueError("group_of must assign 0, 1 or 2 to every node")
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= n):
        raise ValueError("target node out of range")
    if num_hops < 1:
        raise ValueError("num_hops must be >= 1")
    out = np.empty((len(nodes), 3 * num_hops, features.shape[1]), dtype=np.float64)
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled backend is not available")
        _compiled.group_hop_sums(indptr, indices, features, group_of, nodes, num_hops, float(alpha), out)
    elif backend == "python":
        _pykernels.group_hop_sums(indptr, indices, features, group_of, nodes, num_hops, float(alpha), out)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return out
