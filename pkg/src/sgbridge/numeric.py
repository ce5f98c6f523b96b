"""Dense tensors with reverse-mode differentiation.

Everything the model needs runs on 1-D/2-D float arrays: matmul, a handful
of pointwise ops, concatenation, column-wise max pooling, softmax, and the
two classification losses. Each operation returns a Tensor that remembers
its parents and a backward rule; Trace linearises the resulting graph so
the reverse pass visits every recorded operation exactly once, in reverse
topological order.

64-bit is the default precision. 32-bit can be selected for speed, but the
finite-difference comparisons in grad_check are only meaningful in 64-bit.
"""

from __future__ import annotations

import math
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DimensionError, EmptyInputError, LabelError, NumericError

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Select np.float32 or np.float64 for tensors created from now on."""
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError("dtype must be np.float32 or np.float64")
    _DEFAULT_DTYPE = dtype


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """A dense array plus the bookkeeping needed for the reverse pass.

    Values are immutable once created; optimizers overwrite parameter
    ``.data`` between steps, never inside a live graph. ``grad`` is filled
    in by ``Trace.backward`` (or the ``backward`` convenience method).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = tuple(_parents)
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a scalar tensor, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        """Run the reverse pass from a scalar root, seeding with 1."""
        Trace(self).backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all shape checking lives in the module functions.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def constant(data) -> Tensor:
    """A tensor that never receives gradient (inputs, adjacency, targets)."""
    return Tensor(data, requires_grad=False)


class Trace:
    """Topological ordering of the gradient-carrying ops under a root.

    Subgraphs that cannot reach a parameter (requires_grad False) are not
    recorded; the reverse pass touches each recorded node exactly once.
    """

    def __init__(self, root: Tensor):
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        self.order = order  # parents precede children

    def backward(self, root: Tensor, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if root.data.size != 1:
                raise DimensionError(
                    f"backward() without a seed needs a scalar root, got {root.data.shape}"
                )
            seed = np.ones_like(root.data)
        if not root.requires_grad:
            return
        root.grad = np.asarray(seed, dtype=root.data.dtype)
        for node in reversed(self.order):
            if node._backward is None or node.grad is None:
                continue
            for parent, grad in node._backward(node.grad):
                if not parent.requires_grad:
                    continue
                parent.grad = grad if parent.grad is None else parent.grad + grad


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op} operands differ in shape: {a.data.shape} vs {b.data.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul shapes do not chain: {a.data.shape} x {b.data.shape}")

    def backward(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return Tensor(a.data @ b.data, _parents=(a, b), _backward=backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)

    def backward(g):
        return ((a, g), (b, g))

    return Tensor(a.data + b.data, _parents=(a, b), _backward=backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)

    def backward(g):
        return ((a, g), (b, -g))

    return Tensor(a.data - b.data, _parents=(a, b), _backward=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    _same_shape("mul", a, b)

    def backward(g):
        return ((a, g * b.data), (b, g * a.data))

    return Tensor(a.data * b.data, _parents=(a, b), _backward=backward)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar (not differentiated w.r.t. c)."""
    c = float(c)

    def backward(g):
        return ((x, g * c),)

    return Tensor(x.data * c, _parents=(x,), _backward=backward)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-d bias vector to every row of an n-by-d tensor."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise DimensionError(
            f"add_bias needs (n, d) plus (d,), got {x.data.shape} and {b.data.shape}"
        )

    def backward(g):
        return ((x, g), (b, g.sum(axis=0)))

    return Tensor(x.data + b.data, _parents=(x, b), _backward=backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return ((x, g * mask),)

    return Tensor(np.where(mask, x.data, 0.0), _parents=(x,), _backward=backward)


def sigmoid_values(z: np.ndarray) -> np.ndarray:
    # evaluated piecewise so exp never sees a large positive argument
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = sigmoid_values(x.data)

    def backward(g):
        return ((x, g * s * (1.0 - s)),)

    return Tensor(s, _parents=(x,), _backward=backward)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def backward(g):
        return ((x, g * (1.0 - t * t)),)

    return Tensor(t, _parents=(x,), _backward=backward)


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError(f"transpose needs a 2-D tensor, got {x.data.shape}")

    def backward(g):
        return ((x, g.T),)

    return Tensor(x.data.T, _parents=(x,), _backward=backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    old = x.data.shape

    def backward(g):
        return ((x, g.reshape(old)),)

    return Tensor(x.data.reshape(shape), _parents=(x,), _backward=backward)


def take_rows(x: Tensor, indices) -> Tensor:
    """Select rows by index; the backward pass scatter-adds back."""
    if x.data.ndim != 2:
        raise DimensionError(f"take_rows needs a 2-D tensor, got {x.data.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise DimensionError(f"row index out of range for shape {x.data.shape}")

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return ((x, gx),)

    return Tensor(x.data[idx], _parents=(x,), _backward=backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along axis; the backward pass splits by the same offsets."""
    if not tensors:
        raise EmptyInputError("concat of zero tensors")
    ndim = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim:
            raise DimensionError(
                f"concat rank mismatch: {tensors[0].data.shape} vs {t.data.shape}"
            )
        for ax in range(ndim):
            if ax != axis and t.data.shape[ax] != tensors[0].data.shape[ax]:
                raise DimensionError(
                    f"concat non-concat dims differ on axis {ax}: "
                    f"{tensors[0].data.shape} vs {t.data.shape}"
                )
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        slc = [slice(None)] * ndim
        grads = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            slc[axis] = slice(lo, hi)
            grads.append((t, g[tuple(slc)]))
        return grads

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                  _parents=tuple(tensors), _backward=backward)


def max_pool_rows(x: Tensor) -> Tensor:
    """Column-wise maximum over an (n, d) tensor, n >= 1.

    Each column's gradient goes to the first row attaining the maximum
    (np.argmax picks the lowest row index on ties).
    """
    if x.data.ndim != 2:
        raise DimensionError(f"max_pool_rows needs a 2-D tensor, got {x.data.shape}")
    if x.data.shape[0] == 0:
        raise EmptyInputError("max_pool_rows over zero rows")
    idx = np.argmax(x.data, axis=0)
    cols = np.arange(x.data.shape[1])

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[idx, cols] = g
        return ((x, gx),)

    return Tensor(x.data[idx, cols], _parents=(x,), _backward=backward)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, computed with a max shift."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        gy = g * y
        return ((x, gy - y * gy.sum(axis=-1, keepdims=True)),)

    return Tensor(y, _parents=(x,), _backward=backward)


def softmax_ce(logits: Tensor, labels: Sequence[int] | np.ndarray) -> Tensor:
    """Mean softmax cross-entropy over rows; labels are class indices."""
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax_ce needs (n, C) logits, got {logits.data.shape}")
    n, n_classes = logits.data.shape
    if n == 0:
        raise EmptyInputError("softmax_ce over zero rows")
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (n,):
        raise DimensionError(f"softmax_ce labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise LabelError(
            f"class index out of range [0, {n_classes}): {labels.min()}..{labels.max()}"
        )
    z = logits.data
    m = z.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=-1))
    rows = np.arange(n)
    loss = float(np.mean(lse - z[rows, labels]))

    def backward(g):
        p = np.exp(z - m)
        p /= p.sum(axis=-1, keepdims=True)
        p[rows, labels] -= 1.0
        return ((logits, (float(g) / n) * p),)

    return Tensor(loss, _parents=(logits,), _backward=backward)


def binary_ce(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over entries of -[y*log(sigmoid(z)) + (1-y)*log(1-sigmoid(z))].

    Targets are a multi-hot array shaped like the logits; entries must be
    exactly 0 or 1.
    """
    targets = np.asarray(targets, dtype=logits.data.dtype)
    if targets.shape != logits.data.shape:
        raise DimensionError(
            f"binary_ce targets shape {targets.shape} != logits shape {logits.data.shape}"
        )
    if targets.size == 0:
        raise EmptyInputError("binary_ce over zero entries")
    if not np.all((targets == 0.0) | (targets == 1.0)):
        raise LabelError("binary_ce targets must be exactly 0 or 1")
    z = logits.data
    per_entry = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    size = z.size
    loss = float(per_entry.sum() / size)

    def backward(g):
        return ((logits, (float(g) / size) * (sigmoid_values(z) - targets)),)

    return Tensor(loss, _parents=(logits,), _backward=backward)


class ParamStore:
    """Ordered map of parameter name -> Tensor.

    Insertion order is the iteration order everywhere it matters:
    optimizer updates, checkpoint layout, and grad_check sweeps.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(value), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self._params):
            missing = sorted(set(self._params) - set(state))
            extra = sorted(set(state) - set(self._params))
            raise ValueError(f"parameter names differ; missing={missing} extra={extra}")
        for name, t in self._params.items():
            value = np.asarray(state[name], dtype=t.data.dtype)
            if value.shape != t.data.shape:
                raise DimensionError(
                    f"parameter {name}: stored shape {value.shape} != {t.data.shape}"
                )
            t.data = value.copy()


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: Sequence[int]) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)), from the given generator."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=tuple(shape))


def add_linear(store: ParamStore, prefix: str, n_in: int, n_out: int,
               rng: np.random.Generator) -> None:
    """Register weight (fan-based uniform) and bias (zeros) for one layer."""
    store.add(f"{prefix}.w", glorot_uniform(rng, n_in, n_out, (n_in, n_out)))
    store.add(f"{prefix}.b", np.zeros(n_out))


def linear(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    return add_bias(matmul(x, store[f"{prefix}.w"]), store[f"{prefix}.b"])


def add_mlp2(store: ParamStore, prefix: str, n_in: int, n_hidden: int, n_out: int,
             rng: np.random.Generator) -> None:
    add_linear(store, f"{prefix}.l1", n_in, n_hidden, rng)
    add_linear(store, f"{prefix}.l2", n_hidden, n_out, rng)


def mlp2(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """Two-layer perceptron: linear, relu, linear."""
    return linear(relu(linear(x, store, f"{prefix}.l1")), store, f"{prefix}.l2")


def grad_check(fn: Callable[[], Tensor], params: ParamStore, eps: float = 1e-6) -> float:
    """Compare reverse-mode gradients of fn() against central differences.

    fn must rebuild its graph on every call and return a scalar loss of the
    current parameter values. For each parameter entry the numeric gradient
    is (f(t+eps) - f(t-eps)) / 2 eps. The per-entry error is
    |analytic - numeric|, divided by max(|analytic|, |numeric|) when that
    exceeds 1 (relative above unit scale, absolute below — a pure ratio
    blows up when both gradients are near zero). Returns the worst entry.
    """
    loss = fn()
    if loss.data.size != 1:
        raise DimensionError(f"grad_check needs a scalar loss, got {loss.data.shape}")
    if not np.isfinite(loss.data).all():
        raise NumericError("grad_check: loss is not finite")
    params.zero_grad()
    loss.backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }
    worst = 0.0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = fn().item()
            flat[i] = saved - eps
            f_minus = fn().item()
            flat[i] = saved
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericError(f"grad_check: non-finite loss while perturbing {name}[{i}]")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a_flat[i] - numeric)
            denom = max(abs(a_flat[i]), abs(numeric))
            if denom > 1.0:
                err /= denom
            if err > worst:
                worst = err
    return worst
