"""Transformer over grouped neighborhood sequences, and its GT ablation.

Input rows are projected to the hidden width, summed with hop, relation and
group embeddings, passed through post-norm multi-head self-attention blocks,
and the first output row of every relation block is concatenated and fed
to a two-layer MLP with a sigmoid output.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass

import numpy as np

from gaga import autodiff as ad
from gaga.autodiff import Parameter, Tensor
from gaga.groupagg import GROUP_UNKNOWN, VARIANT_GAGA, VARIANT_GT


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden: int = 32
    n_layers: int = 3
    n_heads: int = 4
    num_hops: int = 2
    num_relations: int = 1
    dropout: float = 0.1
    activation: str = "relu"
    variant: str = VARIANT_GAGA
    use_hop_encoding: bool = True
    use_relation_encoding: bool = True
    use_group_encoding: bool = True
    residual: bool = True
    ffn_mult: int = 2
    ln_eps: float = 1e-5
    num_classes: int = 2

    def __post_init__(self):
        if self.hidden % self.n_heads:
            raise ValueError(f"hidden={self.hidden} is not divisible by n_heads={self.n_heads}")
        if min(self.input_dim, self.hidden, self.n_layers, self.n_heads, self.num_hops,
               self.num_relations, self.ffn_mult) < 1:
            raise ValueError("model sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.variant not in (VARIANT_GAGA, VARIANT_GT):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.activation not in ("relu", "gelu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.num_classes != 2:
            raise ValueError("only binary classification is supported")

    @property
    def groups_per_hop(self) -> int:
        return self.num_classes + 1

    @property
    def block_length(self) -> int:
        if self.variant == VARIANT_GT:
            return self.num_hops + 1
        return self.groups_per_hop * self.num_hops + 1

    @property
    def seq_len(self) -> int:
        return self.num_relations * self.block_length

    def digest(self) -> bytes:
        text = "\n".join(f"{k}={v}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(text.encode("utf-8")).digest()

    @classmethod
    def gt(cls, **kwargs) -> "ModelConfig":
        """The GA-free ablation: mean-aggregated hops, no learnable encodings."""
        kwargs.setdefault("use_hop_encoding", False)
        kwargs.setdefault("use_relation_encoding", False)
        kwargs.setdefault("use_group_encoding", False)
        return cls(variant=VARIANT_GT, **kwargs)


def hop_indices(config: ModelConfig) -> np.ndarray:
    if config.variant == VARIANT_GT:
        block = list(range(config.num_hops + 1))
    else:
        block = [0] + [k for k in range(1, config.num_hops + 1) for _ in range(config.groups_per_hop)]
    return np.tile(block, config.num_relations)


def relation_indices(config: ModelConfig) -> np.ndarray:
    return np.repeat(np.arange(config.num_relations), config.block_length)


def group_indices(config: ModelConfig) -> np.ndarray:
    """Group id per row; the target row is always the unknown group."""
    if config.variant == VARIANT_GT:
        block = [GROUP_UNKNOWN] * config.block_length
    else:
        block = [GROUP_UNKNOWN] + list(range(config.groups_per_hop)) * config.num_hops
    return np.tile(block, config.num_relations)


def lead_rows(config: ModelConfig) -> np.ndarray:
    """Row of each relation block's target entry: 0, s, 2s, ..."""
    return np.arange(config.num_relations) * config.block_length


@dataclass
class ForwardResult:
    probs: Tensor  # (B,)
    attention: np.ndarray  # (L, M, B, S, S)
    z: Tensor  # (B, R * hidden)


class GagaModel:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.params: dict[str, Parameter] = {}
        c = config
        h = c.hidden
        self._linear("proj", c.input_dim, h, rng)
        if c.use_hop_encoding:
            self._embedding("enc.hop", c.num_hops + 1, h, rng)
        if c.use_relation_encoding:
            self._embedding("enc.relation", c.num_relations, h, rng)
        if c.use_group_encoding:
            self._embedding("enc.group", c.groups_per_hop, h, rng)
        dh = h // c.n_heads
        for layer in range(c.n_layers):
            for m in range(c.n_heads):
                for kind in ("query", "key", "value"):
                    self._weight(f"layer{layer}.head{m}.{kind}", h, dh, rng)
            self._linear(f"layer{layer}.out", h, h, rng)
            self._norm(f"layer{layer}.norm1", h)
            self._linear(f"layer{layer}.ffn1", h, c.ffn_mult * h, rng)
            self._linear(f"layer{layer}.ffn2", c.ffn_mult * h, h, rng)
            self._norm(f"layer{layer}.norm2", h)
        self._linear("head.fc1", c.num_relations * h, h, rng)
        self._linear("head.fc2", h, 1, rng)
        self._hop_idx = hop_indices(c)
        self._rel_idx = relation_indices(c)
        self._group_idx = group_indices(c)
        self._lead = lead_rows(c)

    # -- parameter construction

    def _add(self, name, value, init):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        self.params[name] = Parameter(name, value, init)

    def _weight(self, name, fan_in, fan_out, rng):
        bound = 1.0 / math.sqrt(fan_in)
        self._add(name, rng.uniform(-bound, bound, size=(fan_in, fan_out)), f"uniform(+-{bound:.4g})")

    def _linear(self, name, fan_in, fan_out, rng):
        self._weight(f"{name}.weight", fan_in, fan_out, rng)
        self._add(f"{name}.bias", np.zeros(fan_out), "zeros")

    def _embedding(self, name, rows, width, rng):
        self._add(name, rng.normal(0.0, 0.02, size=(rows, width)), "normal(0, 0.02)")

    def _norm(self, name, width):
        self._add(f"{name}.gain", np.ones(width), "ones")
        self._add(f"{name}.bias", np.zeros(width), "zeros")

    def __getitem__(self, name) -> Parameter:
        return self.params[name]

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_state(self, state: dict) -> None:
        if set(state) != set(self.params):
            missing = sorted(set(self.params) ^ set(state))
            raise KeyError(f"parameter names differ: {missing[:5]}")
        for k, p in self.params.items():
            value = np.asarray(state[k], dtype=np.float64)
            if value.shape != p.value.shape:
                raise ValueError(f"{k}: shape {value.shape} != {p.value.shape}")
            p.value = value.copy()

    # -- forward pieces

    def _dense(self, x, name):
        return ad.matmul(x, self.params[f"{name}.weight"]) + self.params[f"{name}.bias"]

    def encode_input(self, sequences) -> Tensor:
        """Projected rows plus the enabled encodings, shape (B, S, hidden)."""
        h = np.asarray(sequences, dtype=np.float64)
        if h.ndim == 2:
            h = h[None]
        c = self.config
        if h.shape[1:] != (c.seq_len, c.input_dim):
            raise ad.ShapeError(f"expected sequences of shape (S={c.seq_len}, d={c.input_dim}), got {h.shape[1:]}")
        x = ad.activation(self._dense(Tensor(h), "proj"), c.activation)
        if c.use_hop_encoding:
            x = x + ad.embed_lookup(self.params["enc.hop"], self._hop_idx)
        if c.use_relation_encoding:
            x = x + ad.embed_lookup(self.params["enc.relation"], self._rel_idx)
        if c.use_group_encoding:
            x = x + ad.embed_lookup(self.params["enc.group"], self._group_idx)
        return x

    def encoder_forward(self, x: Tensor, training: bool = False, rng=None):
        c = self.config
        p = self.params
        inv_scale = 1.0 / math.sqrt(c.hidden)
        rate = c.dropout
        maps = []
        for layer in range(c.n_layers):
            heads, layer_maps = [], []
            for m in range(c.n_heads):
                pre = f"layer{layer}.head{m}"
                q = ad.matmul(x, p[f"{pre}.query"])
                k = ad.matmul(x, p[f"{pre}.key"])
                v = ad.matmul(x, p[f"{pre}.value"])
                w = ad.row_softmax(ad.scale(ad.matmul(q, ad.transpose(k)), inv_scale))
                layer_maps.append(w.value)
                w = ad.dropout(w, rate, training, rng)
                heads.append(ad.matmul(w, v))
            attn = self._dense(ad.concat(heads, axis=-1), f"layer{layer}.out")
            attn = ad.dropout(attn, rate, training, rng)
            x = self._norm_apply(x + attn if c.residual else attn, f"layer{layer}.norm1")
            ff = ad.activation(self._dense(x, f"layer{layer}.ffn1"), c.activation)
            ff = ad.dropout(self._dense(ff, f"layer{layer}.ffn2"), rate, training, rng)
            x = self._norm_apply(x + ff if c.residual else ff, f"layer{layer}.norm2")
            maps.append(np.stack(layer_maps))
        return x, np.stack(maps)

    def _norm_apply(self, x, name):
        return ad.layer_norm(x, self.params[f"{name}.gain"], self.params[f"{name}.bias"], self.config.ln_eps)

    def inter_aggregate(self, z: Tensor) -> Tensor:
        """Concatenate the lead row of every relation block: (B, R * hidden)."""
        c = self.config
        if z.shape[-2] != c.seq_len:
            raise ad.ShapeError(f"expected {c.seq_len} rows, got {z.shape[-2]}")
        leads = ad.take_rows(z, self._lead)
        return ad.reshape(leads, (-1, c.num_relations * c.hidden))

    def predict(self, z: Tensor) -> Tensor:
        hidden = ad.activation(self._dense(z, "head.fc1"), self.config.activation)
        logit = self._dense(hidden, "head.fc2")
        return ad.reshape(ad.sigmoid(logit), (-1,))

    def forward(self, sequences, training: bool = False, rng=None) -> ForwardResult:
        x = self.encode_input(sequences)
        z, attention = self.encoder_forward(x, training, rng)
        zv = self.inter_aggregate(z)
        return ForwardResult(self.predict(zv), attention, zv)

    def loss(self, probs: Tensor, labels, weight_decay: float = 0.0) -> Tensor:
        return objective(probs, labels, self.parameters(), weight_decay)

    def predict_proba(self, sequences, batch_size: int = 1024) -> np.ndarray:
        """Inference probabilities, dropout off, no tape."""
        seqs = np.asarray(sequences)
        out = np.empty(len(seqs))
        for start in range(0, len(seqs), batch_size):
            out[start:start + batch_size] = self.forward(seqs[start:start + batch_size]).probs.value
        return out


def objective(probs: Tensor, labels, params, weight_decay: float) -> Tensor:
    """Summed binary cross-entropy plus ``weight_decay * sum(theta**2)``."""
    loss = ad.bce_sum(probs, labels)
    if weight_decay:
        loss = loss + ad.scale(ad.sum_squares(params), weight_decay)
    return loss
