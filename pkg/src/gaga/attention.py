"""Attention-mass statistics by group, relation and hop.

For each node the query rows are the lead rows of the relation blocks (the
rows read out by inter-aggregation). Their attention distributions are
averaged over layers, heads and lead rows, giving one distribution over the
S keys per node. That distribution is then summed into three breakdowns:

* group: mass on the -, +, * rows, renormalized over non-target rows;
* relation: mass per relation block;
* hop: mass per hop index, 0 being the target row.

Per-node breakdowns are averaged over the nodes of each class, so each
breakdown sums to one for every class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gaga.groupagg import GROUP_NAMES
from gaga.model import GagaModel, group_indices, hop_indices, lead_rows, relation_indices

CLASS_NAMES = ("benign", "fraud")


@dataclass
class AttentionReport:
    groups: dict[str, np.ndarray]  # class -> (P,)
    relations: dict[str, np.ndarray]  # class -> (R,)
    hops: dict[str, np.ndarray]  # class -> (K+1,)
    counts: dict[str, int]

    def breakdowns(self):
        for name, table, labels in (
            ("group", self.groups, GROUP_NAMES),
            ("relation", self.relations, None),
            ("hop", self.hops, None),
        ):
            for cls, values in table.items():
                cats = labels if labels is not None else [
                    f"r{i}" if name == "relation" else str(i) for i in range(len(values))
                ]
                yield cls, name, list(zip(cats, values))

    def to_csv(self) -> str:
        lines = ["class,breakdown,category,mass,nodes"]
        for cls, name, pairs in self.breakdowns():
            for cat, mass in pairs:
                lines.append(f"{cls},{name},{cat},{float(mass)!r},{self.counts[cls]}")
        return "\n".join(lines) + "\n"


def node_attention(model: GagaModel, sequences: np.ndarray) -> np.ndarray:
    """(B, S) attention of the lead rows, averaged over layers, heads and leads."""
    att = model.forward(sequences).attention  # (L, M, B, S, S)
    lead = lead_rows(model.config)
    return att[:, :, :, lead, :].mean(axis=(0, 1, 3))


def attention_report(model: GagaModel, sequences, labels, batch_size: int = 512) -> AttentionReport:
    c = model.config
    seqs = np.asarray(sequences)
    labels = np.asarray(labels)
    mass = np.concatenate([
        node_attention(model, seqs[i:i + batch_size]) for i in range(0, len(seqs), batch_size)
    ]) if len(seqs) else np.zeros((0, c.seq_len))

    target = np.zeros(c.seq_len, dtype=bool)
    target[lead_rows(c)] = True
    grp, rel, hop = group_indices(c), relation_indices(c), hop_indices(c)
    rest = mass[:, ~target]
    by_group = np.stack([rest[:, grp[~target] == g].sum(axis=1) for g in range(c.groups_per_hop)], axis=1)
    by_group /= by_group.sum(axis=1, keepdims=True)
    by_rel = np.stack([mass[:, rel == r].sum(axis=1) for r in range(c.num_relations)], axis=1)
    by_hop = np.stack([mass[:, hop == k].sum(axis=1) for k in range(c.num_hops + 1)], axis=1)

    report = AttentionReport({}, {}, {}, {})
    for value, name in enumerate(CLASS_NAMES):
        rows = labels == value
        if not rows.any():
            continue
        report.groups[name] = by_group[rows].mean(axis=0)
        report.relations[name] = by_rel[rows].mean(axis=0)
        report.hops[name] = by_hop[rows].mean(axis=0)
        report.counts[name] = int(rows.sum())
    return report
