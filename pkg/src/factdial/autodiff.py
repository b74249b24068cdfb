"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a contiguous numpy array. While a Tape is active, every
operation whose inputs require gradients records a backward rule on the
tape; Tape.backward replays the rules in reverse execution order, which
is a valid topological order because ops are appended as they run.

Scope is deliberately small: exactly the primitives the dialogue model
needs, all in 64-bit, no broadcasting, single-threaded training. Tensors
are treated as immutable after the forward pass, so a finished model can
be shared read-only across threads at inference time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have non-conformable shapes."""


class NumericError(ArithmeticError):
    """An operation produced NaN or Inf, or consumed a non-finite gradient."""


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{op}: non-finite values in result")


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    `grad` is filled in by Tape.backward and holds an array of the same
    shape, or stays None for tensors the backward pass never reached.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        _check_finite(arr, "tensor")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the named functions below do the real work.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @staticmethod
    def ones(shape) -> "Tensor":
        return Tensor(np.ones(shape))

    @staticmethod
    def uniform(shape, rng: np.random.Generator, scale: float = 0.08,
                requires_grad: bool = True) -> "Tensor":
        return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=requires_grad)


@dataclass
class _TapeEntry:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Records ops in execution order and replays their backward rules.

    Entries are appended as operations run, so the list is already in
    topological order; backward walks it once, in reverse, accumulating
    gradients into every consumer's inputs (fan-out sums).
    """

    def __init__(self):
        self._entries: list[_TapeEntry] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], backward) -> None:
        self._entries.append(_TapeEntry(output, inputs, backward))

    def backward(self, root: Tensor, seed: float = 1.0) -> None:
        """Accumulate d(root)/d(leaf) into .grad of every reachable tensor."""
        if root.grad is None:
            root.grad = np.zeros_like(root.data)
        root.grad += seed
        for entry in reversed(self._entries):
            out_grad = entry.output.grad
            if out_grad is None:
                continue  # not on any path to the root
            grads = entry.backward(out_grad)
            for inp, g in zip(entry.inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                if inp.grad is None:
                    inp.grad = np.zeros_like(inp.data)
                inp.grad += g

    def clear(self) -> None:
        self._entries.clear()


def _make(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward, op: str) -> Tensor:
    _check_finite(out_data, op)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = False
    if _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE_TAPE.record(out, inputs, backward)
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise and structural primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul: only 1-D/2-D operands, got {a.shape} vs {b.shape}")
    if ad.shape[-1] != (bd.shape[0] if bd.ndim > 0 else 0):
        raise ShapeError(f"matmul: shapes {a.shape} vs {b.shape}")

    def backward(g: np.ndarray):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        return g * bd, g * ad  # 1-D dot product

    return _make(ad @ bd, (a, b), backward, "matmul")


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors into one vector."""
    if not parts or any(p.data.ndim != 1 for p in parts):
        raise ShapeError("concat: needs at least one 1-D tensor")
    sizes = [p.size for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(sizes)))

    return _make(np.concatenate([p.data for p in parts]), tuple(parts), backward, "concat")


def stack_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack equal-length 1-D tensors into a (n, d) matrix."""
    if not parts or any(p.data.ndim != 1 for p in parts):
        raise ShapeError("stack_rows: needs at least one 1-D tensor")
    if len({p.size for p in parts}) != 1:
        raise ShapeError(f"stack_rows: ragged rows {[p.shape for p in parts]}")

    def backward(g: np.ndarray):
        return tuple(g[i] for i in range(len(parts)))

    return _make(np.stack([p.data for p in parts]), tuple(parts), backward, "stack_rows")


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    shape = a.shape
    return _make(np.asarray(a.data.sum()), (a,),
                 lambda g: (np.full(shape, float(g)),), "sum")


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    if not (-x.ndim <= axis < x.ndim):
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((g - dot) * out,)

    return _make(out, (a,), backward, "softmax")


def maxout(a: Tensor) -> Tensor:
    """Pairwise max over consecutive elements: out[j] = max(x[2j], x[2j+1]).

    Gradient flows only to the winning element; on ties the first
    element of the pair wins.
    """
    x = a.data
    if x.ndim != 1 or x.size % 2 != 0:
        raise ShapeError(f"maxout: needs an even-length vector, got {a.shape}")
    pairs = x.reshape(-1, 2)
    winners = pairs.argmax(axis=1)  # argmax takes the first on ties
    rows = np.arange(pairs.shape[0])
    out = pairs[rows, winners]

    def backward(g: np.ndarray):
        dx = np.zeros_like(pairs)
        dx[rows, winners] = g
        return (dx.reshape(-1),)

    return _make(out, (a,), backward, "maxout")


# ---------------------------------------------------------------------------
# lookups
# ---------------------------------------------------------------------------

def embedding(table: Tensor, ids) -> Tensor:
    """Select rows of `table`: a single id gives a vector, a list a matrix."""
    if table.data.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    n_rows = table.shape[0]
    single = isinstance(ids, (int, np.integer))
    idx = np.asarray([ids] if single else list(ids), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n_rows):
        raise ShapeError(f"embedding: id out of range for table with {n_rows} rows")
    out = table.data[idx[0]].copy() if single else table.data[idx].copy()
    tshape = table.shape

    def backward(g: np.ndarray):
        dt = np.zeros(tshape)
        np.add.at(dt, idx, g[None, :] if single else g)
        return (dt,)

    return _make(out, (table,), backward, "embedding")


def embedding_bag(table: Tensor, ids: Sequence[int], weights: Sequence[float]) -> Tensor:
    """Weighted sum of table rows: sum_k weights[k] * table[ids[k]].

    This is the product of the table (transposed) with a sparse
    count/weight vector, without materializing the dense vector.
    """
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_bag: table must be 2-D, got {table.shape}")
    idx = np.asarray(list(ids), dtype=np.int64)
    w = np.asarray(list(weights), dtype=np.float64)
    if idx.shape != w.shape:
        raise ShapeError(f"embedding_bag: {idx.shape[0]} ids vs {w.shape[0]} weights")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding_bag: id out of range for table with {table.shape[0]} rows")
    out = w @ table.data[idx] if idx.size else np.zeros(table.shape[1])
    tshape = table.shape

    def backward(g: np.ndarray):
        dt = np.zeros(tshape)
        if idx.size:
            np.add.at(dt, idx, np.outer(w, g))
        return (dt,)

    return _make(out, (table,), backward, "embedding_bag")


# ---------------------------------------------------------------------------
# loss and regularization
# ---------------------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target], stabilized by max subtraction."""
    x = logits.data
    if x.ndim != 1:
        raise ShapeError(f"softmax_cross_entropy: logits must be 1-D, got {logits.shape}")
    if not 0 <= target < x.size:
        raise ValueError(f"softmax_cross_entropy: target {target} out of range [0, {x.size})")
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    probs = np.exp(x - lse)

    def backward(g: np.ndarray):
        d = probs.copy()
        d[target] -= 1.0
        return (d * float(g),)

    return _make(np.asarray(lse - x[target]), (logits,), backward, "softmax_cross_entropy")


def dropout(a: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale by 1/(1-rate).

    Identity outside training mode or at rate 0, returning the input
    tensor unchanged so the graph is untouched.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _make(a.data * keep, (a,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------------------
# GRU cell
# ---------------------------------------------------------------------------

@dataclass
class GruParams:
    """Weights of one GRU cell, each matrix shaped (hidden, input|hidden).

    Convention implemented by gru_step:
        z = sigmoid(Wz x + Uz h + bz)
        r = sigmoid(Wr x + Ur h + br)
        c = tanh(Wh x + Uh (r * h) + bh)
        h' = (1 - z) * h + z * c
    """

    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wh: Tensor
    uh: Tensor
    bh: Tensor

    @staticmethod
    def init(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "GruParams":
        def w(rows, cols):
            return Tensor.uniform((rows, cols), rng)

        def b():
            return Tensor.zeros(hidden_dim, requires_grad=True)

        return GruParams(
            wz=w(hidden_dim, input_dim), uz=w(hidden_dim, hidden_dim), bz=b(),
            wr=w(hidden_dim, input_dim), ur=w(hidden_dim, hidden_dim), br=b(),
            wh=w(hidden_dim, input_dim), uh=w(hidden_dim, hidden_dim), bh=b(),
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.{k}": getattr(self, k)
                for k in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")}

    @staticmethod
    def from_named(named: dict[str, Tensor], prefix: str) -> "GruParams":
        return GruParams(**{k: named[f"{prefix}.{k}"]
                            for k in ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")})


def gru_step(x: Tensor, h_prev: Tensor, p: GruParams) -> Tensor:
    """One GRU update; see GruParams for the gate convention."""
    if x.data.ndim != 1 or h_prev.data.ndim != 1:
        raise ShapeError(f"gru_step: expects vectors, got {x.shape} and {h_prev.shape}")
    z = sigmoid(add(add(matmul(p.wz, x), matmul(p.uz, h_prev)), p.bz))
    r = sigmoid(add(add(matmul(p.wr, x), matmul(p.ur, h_prev)), p.br))
    c = tanh(add(add(matmul(p.wh, x), matmul(p.uh, mul(r, h_prev))), p.bh))
    keep = sub(Tensor.ones(h_prev.shape), z)
    return add(mul(keep, h_prev), mul(z, c))
