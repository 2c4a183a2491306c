# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-node K-hop frontier expansion with label-grouped feature sums."""
import numpy as np

from libc.math cimport pow


def group_hop_sums(
    const long long[::1] indptr,
    const long long[::1] indices,
    const double[:, ::1] features,
    const signed char[::1] group_of,
    const long long[::1] nodes,
    int num_hops,
    double alpha,
    double[:, :, ::1] out,
):
    """Fill ``out[i, 3*(k-1) + g]`` with the group-g vector of hop k for nodes[i].

    group_of[u] is 0 (benign), 1 (fraud) or 2 (unknown); the target itself
    is always counted in group 2 regardless of its own entry.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = features.shape[1]
    cdef long long[::1] stamp = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] ball = np.empty(max(n, 1), dtype=np.int64)
    cdef double[:, ::1] sums = np.zeros((3, d), dtype=np.float64)
    cdef long long counts[3]
    cdef Py_ssize_t i, j, k, c, size, lo, hi, f, e, row
    cdef long long v, u, w, cnt
    cdef double denom, extra

    with nogil:
        for i in range(nodes.shape[0]):
            v = nodes[i]
            stamp[v] = i
            ball[0] = v
            size = 1
            lo = 0
            for c in range(3):
                counts[c] = 0
                for j in range(d):
                    sums[c, j] = 0.0
            for k in range(num_hops):
                hi = size
                for f in range(lo, hi):
                    u = ball[f]
                    for e in range(indptr[u], indptr[u + 1]):
                        w = indices[e]
                        if stamp[w] != i:
                            stamp[w] = i
                            ball[size] = w
                            size += 1
                            c = group_of[w]
                            counts[c] += 1
                            for j in range(d):
                                sums[c, j] += features[w, j]
                lo = hi
                for c in range(3):
                    row = 3 * k + c
                    cnt = counts[c] + (1 if c == 2 else 0)
                    if cnt == 0:
                        for j in range(d):
                            out[i, row, j] = 0.0
                    else:
                        denom = pow(<double>cnt, alpha)
                        for j in range(d):
                            extra = features[v, j] if c == 2 else 0.0
                            out[i, row, j] = (sums[c, j] + extra) / denom
