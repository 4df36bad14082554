"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array. While a ``GradientTape`` is active,
every operation appends one node (a backward closure) to the tape;
``backward(loss)`` replays the tape once in reverse, accumulating
gradients additively into ``Tensor.grad``.

Precision is a process-global switch: float32 for training, float64 for
gradient checking (see ``precision``).
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from .errors import DocalignError, NumericalError, ShapeError

_DTYPE = np.float32


def set_default_dtype(name: str) -> None:
    global _DTYPE
    if name not in ("float32", "float64"):
        raise DocalignError(f"unsupported dtype {name!r}")
    _DTYPE = np.float32 if name == "float32" else np.float64


def default_dtype():
    return _DTYPE


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the global dtype (e.g. float64 for grad checks)."""
    old = _DTYPE
    set_default_dtype(name)
    try:
        yield
    finally:
        set_default_dtype("float64" if old is np.float64 else "float32")


class Tensor:
    """n-dimensional float array, optionally tracked for gradients."""

    __slots__ = ("data", "grad", "requires_grad", "name", "tape_node")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self.tape_node: int | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}{flag})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class GradientTape:
    """Append-only record of operations, replayed in reverse by backward().

    Nodes are appended in execution order, which is a topological order by
    construction: an op's inputs always exist before its output.
    """

    def __init__(self):
        self.nodes: list = []  # backward closures
        self._tensors: list[Tensor] = []  # outputs, for grad clearing

    def __enter__(self):
        _push_tape(self)
        return self

    def __exit__(self, *exc):
        _pop_tape(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out: Tensor, backward_fn) -> None:
        out.tape_node = len(self.nodes)
        self.nodes.append(backward_fn)
        self._tensors.append(out)

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1:
            raise DocalignError(f"backward() needs a scalar loss, got shape {tuple(loss.shape)}")
        if not loss.requires_grad or loss.tape_node is None:
            raise DocalignError("backward() called on a detached tensor (not recorded on this tape)")
        for t in self._tensors:
            t.grad = None
        loss.grad = np.ones_like(loss.data)
        for fn in reversed(self.nodes):
            fn()


_TAPES: list[GradientTape] = []


def _push_tape(t: GradientTape) -> None:
    _TAPES.append(t)


def _pop_tape(t: GradientTape) -> None:
    assert _TAPES and _TAPES[-1] is t
    _TAPES.pop()


def active_tape() -> GradientTape | None:
    return _TAPES[-1] if _TAPES else None


def backward(loss: Tensor) -> None:
    tape = active_tape()
    if tape is None:
        raise DocalignError("backward() called with no active GradientTape")
    tape.backward(loss)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _make(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn_factory) -> Tensor:
    """Wrap an op result; record its backward closure if a tape is active."""
    out = Tensor(data)
    out.requires_grad = any(i.requires_grad for i in inputs)
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, backward_fn_factory(out))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def bw(out):
        def fn():
            if out.grad is None:
                return
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad, b.shape))
        return fn

    return _make(data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def bw(out):
        def fn():
            if out.grad is None:
                return
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(-out.grad, b.shape))
        return fn

    return _make(data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accum(a, -out.grad)
        return fn

    return _make(-a.data, (a,), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def bw(out):
        def fn():
            if out.grad is None:
                return
            if a.requires_grad:
                _accum(a, _unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(out.grad * a.data, b.shape))
        return fn

    return _make(data, (a, b), bw)


def _unary(a: Tensor, f, df) -> Tensor:
    data = f(a.data)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accum(a, out.grad * df(a.data, out.data))
        return fn

    return _make(data, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    return _unary(a, np.tanh, lambda x, y: 1.0 - y * y)


def sigmoid(a: Tensor) -> Tensor:
    return _unary(a, lambda x: 1.0 / (1.0 + np.exp(-x)), lambda x, y: y * (1.0 - y))


def relu(a: Tensor) -> Tensor:
    return _unary(a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(x.dtype))


def exp(a: Tensor) -> Tensor:
    return _unary(a, np.exp, lambda x, y: y)


def log(a: Tensor) -> Tensor:
    return _unary(a, np.log, lambda x, y: 1.0 / x)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through inside [lo, hi], zero outside."""
    data = np.clip(a.data, lo, hi)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                inside = ((a.data >= lo) & (a.data <= hi)).astype(a.data.dtype)
                _accum(a, out.grad * inside)
        return fn

    return _make(data, (a,), bw)


# ---------------------------------------------------------------------------
# linear algebra / structure ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy matmul semantics (2-D, or stacked 3-D with
    matching leading dimension)."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {tuple(a.shape)} @ {tuple(b.shape)}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {tuple(a.shape)} @ {tuple(b.shape)}")
    if a.ndim > 2 or b.ndim > 2:
        if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"matmul batch dims differ: {tuple(a.shape)} @ {tuple(b.shape)}")
    data = np.matmul(a.data, b.data)

    def bw(out):
        def fn():
            if out.grad is None:
                return
            if a.requires_grad:
                _accum(a, np.matmul(out.grad, np.swapaxes(b.data, -1, -2)))
            if b.requires_grad:
                _accum(b, np.matmul(np.swapaxes(a.data, -1, -2), out.grad))
        return fn

    return _make(data, (a, b), bw)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b over the last axis of x; leading axes are preserved."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"affine input width {tuple(x.shape)} vs weight {tuple(w.shape)}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"affine bias {tuple(b.shape)} vs weight {tuple(w.shape)}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    data = (x2 @ w.data + b.data).reshape(*lead, w.shape[1])

    def bw(out):
        def fn():
            if out.grad is None:
                return
            g2 = out.grad.reshape(-1, w.shape[1])
            if x.requires_grad:
                _accum(x, (g2 @ w.data.T).reshape(x.shape))
            if w.requires_grad:
                _accum(w, x2.T @ g2)
            if b.requires_grad:
                _accum(b, g2.sum(axis=0))
        return fn

    return _make(data, (x, w, b), bw)


def transpose_last2(a: Tensor) -> Tensor:
    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accum(a, np.swapaxes(out.grad, -1, -2))
        return fn

    return _make(np.swapaxes(a.data, -1, -2), (a,), bw)


def reshape(a: Tensor, shape) -> Tensor:
    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accum(a, out.grad.reshape(a.shape))
        return fn

    return _make(a.data.reshape(shape), (a,), bw)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def bw(out):
        def fn():
            if out.grad is None:
                return
            offset = 0
            for t, n in zip(tensors, sizes):
                if t.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[axis if axis >= 0 else out.grad.ndim + axis] = slice(offset, offset + n)
                    _accum(t, out.grad[tuple(idx)])
                offset += n
        return fn

    return _make(data, tuple(tensors), bw)


def stack(tensors: list[Tensor], axis: int = 1) -> Tensor:
    data = np.stack([t.data for t in tensors], axis=axis)

    def bw(out):
        def fn():
            if out.grad is None:
                return
            for i, t in enumerate(tensors):
                if t.requires_grad:
                    _accum(t, np.take(out.grad, i, axis=axis))
        return fn

    return _make(data, tuple(tensors), bw)


def slice_index(a: Tensor, index: int, axis: int = 1) -> Tensor:
    """a[..., index, ...] along the given axis (the axis is dropped)."""
    data = np.take(a.data, index, axis=axis)

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                g = np.zeros_like(a.data)
                idx = [slice(None)] * a.ndim
                idx[axis] = index
                g[tuple(idx)] = out.grad
                _accum(a, g)
        return fn

    return _make(data, (a,), bw)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table; repeated ids share one gradient accumulator."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"token id out of range: max id {int(ids.max())} vs table rows {table.shape[0]}")
    data = table.data[ids]

    def bw(out):
        def fn():
            if out.grad is not None and table.requires_grad:
                g = np.zeros_like(table.data)
                np.add.at(g, ids.reshape(-1), out.grad.reshape(-1, table.shape[1]))
                _accum(table, g)
        return fn

    return _make(data, (table,), bw)


# ---------------------------------------------------------------------------
# reductions and softmax
# ---------------------------------------------------------------------------

def reduce_sum(a: Tensor) -> Tensor:
    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accum(a, np.full_like(a.data, float(out.grad)))
        return fn

    return _make(np.asarray(a.data.sum()), (a,), bw)


def reduce_mean(a: Tensor) -> Tensor:
    n = a.size

    def bw(out):
        def fn():
            if out.grad is not None and a.requires_grad:
                _accum(a, np.full_like(a.data, float(out.grad) / n))
        return fn

    return _make(np.asarray(a.data.mean()), (a,), bw)


def softmax(scores: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax over the last axis, stabilized by max-subtraction.

    ``mask`` is a boolean array broadcastable to ``scores``; masked entries
    get exactly zero weight. Raises on NaN input or fully-masked rows.
    """
    x = scores.data
    if np.isnan(x).any():
        raise NumericalError("softmax received NaN scores")
    if mask is None:
        m = x.max(axis=-1, keepdims=True)
        e = np.exp(x - m)
        denom = e.sum(axis=-1, keepdims=True)
        p = e / denom
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise DocalignError("softmax: at least one row has all entries masked")
        neg = np.where(mask, x, -np.inf)
        m = neg.max(axis=-1, keepdims=True)
        e = np.where(mask, np.exp(x - m), 0.0).astype(x.dtype)
        denom = e.sum(axis=-1, keepdims=True)
        p = e / denom

    def bw(out):
        def fn():
            if out.grad is not None and scores.requires_grad:
                y = out.data
                dot = (out.grad * y).sum(axis=-1, keepdims=True)
                _accum(scores, y * (out.grad - dot))
        return fn

    return _make(p, (scores,), bw)


# ---------------------------------------------------------------------------
# initialization, optimizer, clipping
# ---------------------------------------------------------------------------

def uniform_init(rng: np.random.Generator, shape, fan_in: int, name: str | None = None) -> Tensor:
    """Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def zeros_init(shape, name: str | None = None) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def global_grad_norm(params: dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    return math.sqrt(total)


def clip_global_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    norm = global_grad_norm(params)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


class Adam:
    """Bias-corrected Adam over a named parameter dict.

    Learning rate defaults to 1e-5; beta/epsilon are the optimizer's
    standard defaults.
    """

    def __init__(self, params: dict[str, Tensor], learning_rate: float = 1e-5,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = {k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.items()}
        self.second_moment = {k: np.zeros_like(p.data, dtype=np.float64) for k, p in params.items()}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if np.isnan(g).any():
                raise NumericalError(f"NaN gradient for parameter {name!r}")
            m = self.first_moment[name]
            v = self.second_moment[name]
            g64 = g.astype(np.float64)
            m *= self.beta1
            m += (1.0 - self.beta1) * g64
            v *= self.beta2
            v += (1.0 - self.beta2) * g64 * g64
            update = (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)
            p.data -= (self.learning_rate * update).astype(p.data.dtype)

    def zero_grads(self) -> None:
        zero_grads(self.params)
