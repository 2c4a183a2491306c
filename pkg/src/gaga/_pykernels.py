"""Pure numpy fallback for the compiled preprocessing kernel."""
from __future__ import annotations

import numpy as np


def _gather_neighbors(indptr, indices, frontier):
    starts = indptr[frontier]
    lengths = indptr[frontier + 1] - starts
    total = int(lengths.sum())
    if total == 0:
        return indices[:0]
    offsets = np.repeat(starts - (np.cumsum(lengths) - lengths), lengths) + np.arange(total)
    return indices[offsets]


def group_hop_sums(indptr, indices, features, group_of, nodes, num_hops, alpha, out):
    """Same contract as the compiled kernel (see ``gaga.kernels``)."""
    n = len(indptr) - 1
    d = features.shape[1]
    seen = np.zeros(n, dtype=bool)
    for i, v in enumerate(np.asarray(nodes).tolist()):
        seen[v] = True
        visited = [np.array([v], dtype=np.int64)]
        frontier = visited[0]
        sums = np.zeros((3, d))
        counts = np.zeros(3, dtype=np.int64)
        for k in range(num_hops):
            cand = np.unique(_gather_neighbors(indptr, indices, frontier))
            new = cand[~seen[cand]]
            seen[new] = True
            visited.append(new)
            groups = group_of[new]
            for c in range(3):
                members = new[groups == c]
                if len(members):
                    sums[c] += features[members].sum(axis=0)
                    counts[c] += len(members)
            frontier = new
            for c in range(3):
                cnt = counts[c] + (1 if c == 2 else 0)
                row = out[i, 3 * k + c]
                if cnt == 0:
                    row[:] = 0.0
                else:
                    total = sums[c] + features[v] if c == 2 else sums[c]
                    row[:] = total / float(cnt) ** alpha
        for arr in visited:
            seen[arr] = False
