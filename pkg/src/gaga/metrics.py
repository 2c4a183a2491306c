"""Exact rank-based AUC / AP and thresholded per-class F1."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np


class MetricError(ValueError):
    pass


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def _average_ranks(s: np.ndarray) -> np.ndarray:
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    tie_rank = (starts + ends + 1) / 2.0  # mean of 1-based positions in each tie block
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(tie_rank, ends - starts)
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney estimate P(s_fraud > s_benign) + P(tie) / 2."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both classes")
    rank_sum = _average_ranks(s)[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step-wise area under precision-recall.

    Ranked by descending score; ties keep ascending index order.
    """
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    precision_at = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision_at[hits == 1].sum() / n_pos)


def _f1(tp: int, fp: int, fn: int) -> tuple[float, bool]:
    denom = 2 * tp + fp + fn
    if tp == 0:
        return 0.0, denom == 0 or tp + fp == 0 or tp + fn == 0
    return 2.0 * tp / denom, False


def f1_scores(scores, labels, threshold: float = 0.5) -> tuple[float, float, float]:
    """(f1_fraud, f1_benign, f1_macro); a node is predicted fraud when score > threshold."""
    s, y = _check(scores, labels)
    pred = s > threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    f_fraud, bad_f = _f1(tp, fp, fn)
    f_benign, bad_b = _f1(tn, fn, fp)
    if bad_f or bad_b:
        warnings.warn("F1 has an undefined precision or recall; set to 0", RuntimeWarning, stacklevel=2)
    return f_fraud, f_benign, (f_fraud + f_benign) / 2.0


@dataclass
class Metrics:
    auc: float
    ap: float
    f1_macro: float
    f1_fraud: float
    f1_benign: float
    threshold: float = 0.5

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.as_dict().items())

    def csv_header(self) -> str:
        return ",".join(self.as_dict())

    def csv_row(self) -> str:
        return ",".join(repr(v) for v in self.as_dict().values())


def compute_metrics(scores, labels, threshold: float = 0.5) -> Metrics:
    f_fraud, f_benign, f_macro = f1_scores(scores, labels, threshold)
    return Metrics(
        auc=auc(scores, labels),
        ap=average_precision(scores, labels),
        f1_macro=f_macro,
        f1_fraud=f_fraud,
        f1_benign=f_benign,
        threshold=threshold,
    )
