"""Mini-batch Adam training with early stopping, and evaluation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from gaga.autodiff import NonFiniteError, Tape, backward
from gaga.graph import ROLE_TEST, ROLE_TRAIN, ROLE_VAL, SplitAssignment
from gaga.groupagg import SequenceDataset
from gaga.metrics import Metrics, compute_metrics
from gaga.model import GagaModel, ModelConfig


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    def __init__(self, epoch: int, detail: str):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: {detail}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 512
    max_epochs: int = 500
    patience: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value = p.value - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_auc: float
    val_ap: float
    val_f1_macro: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1

    def __len__(self):
        return len(self.records)

    def to_csv(self, include_time: bool = True) -> str:
        cols = ["epoch", "loss", "val_auc", "val_ap", "val_f1_macro"] + (["seconds"] if include_time else [])
        lines = [",".join(cols)]
        for r in self.records:
            vals = [str(r.epoch), repr(r.loss), repr(r.val_auc), repr(r.val_ap), repr(r.val_f1_macro)]
            if include_time:
                vals.append(f"{r.seconds:.6f}")
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"


def _role_nodes(splits: SplitAssignment, dataset: SequenceDataset, role: str) -> np.ndarray:
    nodes = splits.indices(role)
    return nodes[dataset.labels[nodes] >= 0]


def evaluate(model: GagaModel, dataset: SequenceDataset, splits: SplitAssignment,
             role: str = ROLE_TEST, batch_size: int = 1024, threshold: float = 0.5) -> Metrics:
    nodes = _role_nodes(splits, dataset, role)
    if len(nodes) == 0:
        raise TrainingError(f"role {role!r} has no labeled nodes")
    scores = model.predict_proba(dataset.sequences[nodes], batch_size)
    return compute_metrics(scores, dataset.labels[nodes], threshold)


def check_compatible(config: ModelConfig, dataset: SequenceDataset) -> None:
    problems = []
    if config.variant != dataset.variant:
        problems.append(f"variant {config.variant} vs dataset {dataset.variant}")
    if config.seq_len != dataset.seq_len:
        problems.append(f"seq_len {config.seq_len} vs {dataset.seq_len}")
    if config.input_dim != dataset.feature_dim:
        problems.append(f"input_dim {config.input_dim} vs {dataset.feature_dim}")
    if config.num_hops != dataset.config.num_hops or config.num_relations != dataset.num_relations:
        problems.append("hop/relation counts differ")
    if problems:
        raise TrainingError("model and dataset are inconsistent: " + "; ".join(problems))


def train(
    dataset: SequenceDataset,
    splits: SplitAssignment,
    model_config: ModelConfig,
    config: TrainConfig,
    log=None,
) -> tuple[GagaModel, TrainHistory]:
    """Fit on the train role; keep the parameters with the best validation AUC."""
    check_compatible(model_config, dataset)
    train_nodes = _role_nodes(splits, dataset, ROLE_TRAIN)
    if len(train_nodes) == 0:
        raise TrainingError("empty train split")
    val_nodes = _role_nodes(splits, dataset, ROLE_VAL)
    if len(val_nodes) == 0:
        raise TrainingError("empty validation split")

    rng = np.random.default_rng(config.seed)
    model = GagaModel(model_config, seed=config.seed)
    params = model.parameters()
    opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    x_all, y_all = dataset.sequences, dataset.labels.astype(np.float64)
    history = TrainHistory()
    best_auc, best_state, stale = -np.inf, model.state(), 0

    for epoch in range(config.max_epochs):
        start = time.perf_counter()
        order = train_nodes[rng.permutation(len(train_nodes))]
        total = 0.0
        try:
            for i in range(0, len(order), config.batch_size):
                batch = order[i:i + config.batch_size]
                with Tape() as tape:
                    out = model.forward(x_all[batch], training=True, rng=rng)
                    loss = model.loss(out.probs, y_all[batch], config.weight_decay)
                model.zero_grad()
                backward(tape, loss)
                opt.step()
                total += loss.item()
            val = evaluate(model, dataset, splits, ROLE_VAL)
        except NonFiniteError as exc:
            raise TrainingDiverged(epoch, str(exc)) from exc
        rec = EpochRecord(epoch, total / len(train_nodes), val.auc, val.ap, val.f1_macro,
                          time.perf_counter() - start)
        history.records.append(rec)
        if log is not None:
            log(f"epoch {epoch:4d} loss {rec.loss:.6f} val_auc {rec.val_auc:.4f} val_ap {rec.val_ap:.4f}")
        if val.auc > best_auc:
            best_auc, best_state, stale = val.auc, model.state(), 0
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state(best_state)
    return model, history
