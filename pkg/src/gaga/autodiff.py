"""Small dense tensor engine with tape-based reverse-mode differentiation.

Tensors hold float64 numpy arrays of at most three axes (batch x rows x
cols). Operations record a backward rule on the active :class:`Tape` when
one is open and any input requires a gradient; without a tape they only
compute values, which is how inference and finite differences run.

    with Tape() as tape:
        loss = some_function_of(params)
    backward(tape, loss)
"""
from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf, expit

from gaga._io import atomic_write_bytes

MAX_AXES = 3


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad: bool = False):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim > MAX_AXES:
            raise ShapeError(f"tensors have at most {MAX_AXES} axes, got shape {value.shape}")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def item(self) -> float:
        return float(self.value)


class Parameter(Tensor):
    """Named trainable tensor whose gradient persists across backward calls."""

    __slots__ = ("name", "init")

    def __init__(self, name: str, value, init: str = "given"):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.init = init
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of executed operations on this thread."""

    _local = threading.local()

    def __init__(self):
        self.entries: list = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        stack = self._stack()
        stack.append(self)
        return self

    def __exit__(self, *exc):
        self._stack().pop()
        return False

    @classmethod
    def _stack(cls) -> list:
        if not hasattr(cls._local, "stack"):
            cls._local.stack = []
        return cls._local.stack

    @classmethod
    def active(cls) -> "Tape | None":
        stack = cls._stack()
        return stack[-1] if stack else None

    def __len__(self):
        return len(self.entries)


def _record(op: str, value: np.ndarray, inputs: tuple, rule) -> Tensor:
    # a sum is non-finite iff some entry is (or the sum overflows)
    if not math.isfinite(value.sum()):
        raise NonFiniteError(f"{op}: non-finite output")
    needs = tuple(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=any(needs))
    tape = Tape.active()
    if tape is not None and out.requires_grad:
        if tape.consumed:
            raise TapeError("tape already used for backward")
        tape.entries.append((out, inputs, needs, rule))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every Parameter reached by the tape."""
    if tape.consumed:
        raise TapeError("double backward through one tape is not supported")
    if not tape.entries:
        raise TapeError("backward before forward: the tape is empty")
    if loss.value.size != 1:
        raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")
    tape.consumed = True
    loss.grad = np.ones_like(loss.value)
    for out, inputs, needs, rule in reversed(tape.entries):
        g = out.grad
        if g is None:
            continue
        for t, need, gi in zip(inputs, needs, rule(g, needs)):
            if need and gi is not None:
                t.grad = gi if t.grad is None else t.grad + gi
        if not isinstance(out, Parameter):
            out.grad = None
    tape.entries.clear()


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


# ------------------------------------------------------------------- ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")
    flat = av.ndim == 3 and bv.ndim == 2
    if flat:
        out = (av.reshape(-1, av.shape[-1]) @ bv).reshape(av.shape[:-1] + (bv.shape[-1],))
    else:
        out = av @ bv

    def rule(g, needs):
        ga = gb = None
        if flat:
            g2 = g.reshape(-1, g.shape[-1])
            if needs[0]:
                ga = (g2 @ bv.T).reshape(av.shape)
            if needs[1]:
                gb = av.reshape(-1, av.shape[-1]).T @ g2
            return ga, gb
        if needs[0]:
            ga = _unbroadcast(g @ _swap(bv), av.shape)
        if needs[1]:
            gb = _unbroadcast(_swap(av) @ g, bv.shape)
        return ga, gb

    return _record("matmul", out, (a, b), rule)


def _broadcast_check(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", a.value + b.value, (a, b),
                   lambda g, needs: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", a.value - b.value, (a, b),
                   lambda g, needs: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check("mul", a, b)
    av, bv = a.value, b.value
    return _record("mul", av * bv, (a, b),
                   lambda g, needs: (_unbroadcast(g * bv, av.shape) if needs[0] else None,
                                     _unbroadcast(g * av, bv.shape) if needs[1] else None))


def scale(x: Tensor, c: float) -> Tensor:
    return _record("scale", x.value * c, (x,), lambda g, needs: (g * c,))


def transpose(x: Tensor) -> Tensor:
    if x.value.ndim < 2:
        raise ShapeError("transpose needs at least two axes")
    return _record("transpose", _swap(x.value), (x,), lambda g, needs: (_swap(g),))


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.shape
    try:
        out = x.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from None
    if out.ndim > MAX_AXES:
        raise ShapeError(f"tensors have at most {MAX_AXES} axes")
    return _record("reshape", out, (x,), lambda g, needs: (g.reshape(old),))


def row_softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted."""
    z = x.value - x.value.max(axis=-1, keepdims=True)
    y = np.exp(z)
    y /= y.sum(axis=-1, keepdims=True)

    def rule(g, needs):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record("row_softmax", y, (x,), rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must have shape ({d},)")
    xv = x.value
    mu = xv.mean(axis=-1, keepdims=True)
    centered = xv - mu
    inv = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    gv = gain.value

    def rule(g, needs):
        gx = ggain = gbias = None
        if needs[0]:
            gh = g * gv
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        if needs[1]:
            ggain = (g * xhat).reshape(-1, d).sum(axis=0)
        if needs[2]:
            gbias = g.reshape(-1, d).sum(axis=0)
        return gx, ggain, gbias

    return _record("layer_norm", xhat * gv + bias.value, (x, gain, bias), rule)


_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def activation(x: Tensor, kind: str = "relu") -> Tensor:
    xv = x.value
    if kind == "relu":
        mask = xv > 0
        return _record("relu", np.where(mask, xv, 0.0), (x,), lambda g, needs: (g * mask,))
    if kind == "gelu":
        cdf = 0.5 * (1.0 + erf(xv / _SQRT2))
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * xv * xv)
        return _record("gelu", xv * cdf, (x,), lambda g, needs: (g * (cdf + xv * pdf),))
    raise ValueError(f"unknown activation {kind!r}")


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.value)
    return _record("sigmoid", y, (x,), lambda g, needs: (g * y * (1.0 - y),))


def embed_lookup(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"embed_lookup: index out of range for table with {n} rows")
    shape = table.shape

    def rule(g, needs):
        gt = np.zeros(shape)
        np.add.at(gt, idx, g)
        return (gt,)

    return _record("embed_lookup", table.value[idx], (table,), rule)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; the identity when not training or rate is 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _record("dropout", x.value * mask, (x,), lambda g, needs: (g * mask,))


def concat(tensors: list, axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(g, needs):
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", out, tuple(tensors), rule)


def concat_rows(tensors: list) -> Tensor:
    return concat(tensors, axis=-2)


def take_rows(x: Tensor, rows) -> Tensor:
    """Select rows (second-to-last axis)."""
    rows = np.asarray(rows, dtype=np.int64)
    shape = x.shape
    if x.value.ndim < 2:
        raise ShapeError("take_rows needs at least two axes")

    def rule(g, needs):
        gx = np.zeros(shape)
        np.add.at(np.moveaxis(gx, -2, 0), rows, np.moveaxis(g, -2, 0))
        return (gx,)

    return _record("take_rows", x.value[..., rows, :], (x,), rule)


def total(x: Tensor) -> Tensor:
    shape = x.shape
    return _record("sum", np.asarray(x.value.sum()), (x,),
                   lambda g, needs: (np.broadcast_to(g, shape).copy(),))


def sum_squares(tensors) -> Tensor:
    tensors = tuple(tensors)
    value = np.asarray(sum(float(np.sum(t.value * t.value)) for t in tensors))

    def rule(g, needs):
        return tuple(2.0 * g * t.value for t in tensors)

    return _record("sum_squares", value, tensors, rule)


def bce_sum(probs: Tensor, labels, clamp: float = 1e-12) -> Tensor:
    """Summed binary cross-entropy with probabilities clipped to [clamp, 1 - clamp]."""
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != probs.shape:
        raise ShapeError(f"bce_sum: labels {y.shape} vs probs {probs.shape}")
    pv = probs.value
    p = np.clip(pv, clamp, 1.0 - clamp)
    inside = (pv >= clamp) & (pv <= 1.0 - clamp)
    value = np.asarray(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))

    def rule(g, needs):
        return (g * inside * ((1.0 - y) / (1.0 - p) - y / p),)

    return _record("bce_sum", value, (probs,), rule)


# ------------------------------------------------------------ grad check


class NonDeterministicClosure(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)  # parameter name -> max relative error
    tol: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def worst(self) -> str | None:
        return max(self.errors, key=self.errors.get) if self.errors else None

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    @property
    def failing(self) -> list[str]:
        return [name for name, e in self.errors.items() if e >= self.tol]


def grad_check(closure, params, h: float = 1e-5, tol: float = 1e-4, floor: float = 1e-8) -> GradCheckReport:
    """Compare tape gradients with central differences, per parameter.

    The error is ``|g_ad - g_fd| / max(|g_ad|, |g_fd|, floor)``. Central
    differences carry roundoff of about eps * |loss| / h, so components far
    below that are noise unless ``floor`` is raised above it.

    ``closure()`` must rebuild the scalar loss from the current parameter
    values deterministically.
    """
    if floor <= 0:
        raise ValueError("floor must be positive")
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = closure()
    base = loss.item()
    backward(tape, loss)
    if closure().item() != base or closure().item() != base:
        raise NonDeterministicClosure("closure returned different losses for identical parameters")
    report = GradCheckReport(tol=tol)
    for p in params:
        g_ad = p.grad.ravel()
        g_fd = np.empty_like(g_ad)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = closure().item()
            flat[i] = orig - h
            f_minus = closure().item()
            flat[i] = orig
            g_fd[i] = (f_plus - f_minus) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), floor)
        report.errors[p.name] = float(np.max(np.abs(g_ad - g_fd) / denom)) if flat.size else 0.0
    return report


# ----------------------------------------------------------- checkpoints

# Layout (little-endian): magic 8s "GAGACKPT", version u32, config sha256
# (32 bytes), record count u32; per record: name length u32, utf-8 name,
# ndim u32, ndim x u64 dims, float32 values (row-major).
CKPT_MAGIC = b"GAGACKPT"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<8sI32sI")


def save_parameters(path, params, config_hash: bytes) -> None:
    if len(config_hash) != 32:
        raise ValueError("config hash must be a 32-byte digest")
    params = list(params)
    parts = [_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, config_hash, len(params))]
    for p in params:
        name = p.name.encode("utf-8")
        parts.append(struct.pack("<I", len(name)) + name)
        parts.append(struct.pack(f"<I{p.value.ndim}Q", p.value.ndim, *p.value.shape))
        parts.append(p.value.astype("<f4").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_parameters(path) -> tuple[bytes, dict]:
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, digest, count = _CKPT_HEADER.unpack_from(data)
    if magic != CKPT_MAGIC or version != CKPT_VERSION:
        raise ValueError(f"{path}: not a version-{CKPT_VERSION} checkpoint")
    pos = _CKPT_HEADER.size
    values = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
        values[name] = arr.astype(np.float64)
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after {count} records")
    return digest, values
