"""Dense-tensor arithmetic with reverse-mode differentiation.

Tensors wrap row-major numpy arrays. Every operation records its parents
and a backward closure, so calling :func:`backward` on a scalar result
accumulates gradients into each ``requires_grad`` leaf. Training code runs
in float32; gradient verification runs in float64 (see :func:`grad_check`).

Only the operations the model needs are provided; there is no general
broadcasting. Row/column repetition is explicit (:func:`repeat_rows`,
:func:`tile_rows`) so the fusion semantics stay auditable.
"""

from __future__ import annotations

import contextlib
import os
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_GRAD_ENABLED = True
# Debug mode: assert every op output is finite (slower; on when the
# DUALSIGN_DEBUG environment variable is set).
_FINITE_CHECKS = bool(os.environ.get("DUALSIGN_DEBUG"))


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or infinity."""


def set_finite_checks(enabled: bool) -> bool:
    """Toggle per-op finiteness assertions; returns the previous setting."""
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference/eval mode)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        else:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # -- autograd ------------------------------------------------------
    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype)
            self.grad = self.grad.reshape(self.data.shape)
        else:
            self.grad += grad

    def backward(self) -> None:
        backward(self)

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def relu(self):
        return relu(self)

    def transpose(self):
        return transpose(self)

    def reshape(self, shape):
        return reshape(self, shape)


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _check_finite(data: np.ndarray, op: str) -> None:
    if _FINITE_CHECKS and not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data, dtype=data.dtype)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into every requires_grad leaf.

    The root must be a scalar; each graph node's closure runs exactly once,
    in reverse topological order.
    """
    if root.size != 1:
        raise ShapeError(f"backward root must be scalar, got shape {root.shape}")
    root._accumulate(np.ones_like(root.data))
    for node in reversed(_topo_order(root)):
        if node._backward is not None:
            node._backward()


# ---------------------------------------------------------------------
# elementwise / scalar ops
# ---------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        out = _result(a.data + b, (a,), "add")
        if out.requires_grad:
            def _bw():
                if a.requires_grad:
                    a._accumulate(out.grad)
            out._backward = _bw
        return out
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = _result(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accumulate(out.grad)
            if b.requires_grad:
                b._accumulate(out.grad)
        out._backward = _bw
    return out


def neg(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = _result(-a.data, (a,), "neg")
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accumulate(-out.grad)
        out._backward = _bw
    return out


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, (int, float)):
        return add(a, -b)
    return add(a, neg(as_tensor(b)))


def mul(a: Tensor, b) -> Tensor:
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        out = _result(a.data * b, (a,), "mul")
        if out.requires_grad:
            def _bw():
                if a.requires_grad:
                    a._accumulate(out.grad * b)
            out._backward = _bw
        return out
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    out = _result(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accumulate(out.grad * b.data)
            if b.requires_grad:
                b._accumulate(out.grad * a.data)
        out._backward = _bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = _result(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def _bw():
            if a.requires_grad:
                a._accumulate(out.grad @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ out.grad)
        out._backward = _bw
    return out


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-n bias row to every row of an (m, n) matrix."""
    x, bias = as_tensor(x), as_tensor(bias)
    if x.ndim != 2 or bias.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_bias: shapes {x.shape} and {bias.shape} incompatible")
    out = _result(x.data + bias.data[None, :], (x, bias), "add_bias")
    if out.requires_grad:
        def _bw():
            if x.requires_grad:
                x._accumulate(out.grad)
            if bias.requires_grad:
                bias._accumulate(out.grad.sum(axis=0))
        out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = _result(np.maximum(x.data, 0), (x,), "relu")
    if out.requires_grad:
        def _bw():
            if x.requires_grad:
                x._accumulate(out.grad * (x.data > 0))
        out._backward = _bw
    return out


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = _result(np.asarray(x.data.sum(), dtype=x.dtype), (x,), "sum")
    if out.requires_grad:
        def _bw():
            if x.requires_grad:
                x._accumulate(np.full_like(x.data, out.grad))
        out._backward = _bw
    return out


def mean_all(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = _result(np.asarray(x.data.mean(), dtype=x.dtype), (x,), "mean")
    if out.requires_grad:
        inv = 1.0 / x.size
        def _bw():
            if x.requires_grad:
                x._accumulate(np.full_like(x.data, out.grad * inv))
        out._backward = _bw
    return out


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")
    out = _result(x.data.T.copy(), (x,), "transpose")
    if out.requires_grad:
        def _bw():
            if x.requires_grad:
                x._accumulate(out.grad.T)
        out._backward = _bw
    return out


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    out = _result(x.data.reshape(shape).copy(), (x,), "reshape")
    if out.requires_grad:
        def _bw():
            if x.requires_grad:
                x._accumulate(out.grad.reshape(x.shape))
        out._backward = _bw
    return out


# ---------------------------------------------------------------------
# row/column structure ops
# ---------------------------------------------------------------------

def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or not (0 <= start < stop <= x.shape[1]):
        raise ShapeError(f"slice_cols: [{start}:{stop}] invalid for shape {x.shape}")
    out = _result(x.data[:, start:stop].copy(), (x,), "slice_cols")
    if out.requires_grad:
        def _bw():
            if x.requires_grad:
                g = np.zeros_like(x.data)
                g[:, start:stop] = out.grad
                x._accumulate(g)
        out._backward = _bw
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or not (0 <= start < stop <= x.shape[0]):
        raise ShapeError(f"slice_rows: [{start}:{stop}] invalid for shape {x.shape}")
    out = _result(x.data[start:stop].copy(), (x,), "slice_rows")
    if out.requires_grad:
        def _bw():
            if x.requires_grad:
                g = np.zeros_like(x.data)
                g[start:stop] = out.grad
                x._accumulate(g)
        out._backward = _bw
    return out


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    rows = parts[0].shape[0]
    if any(p.ndim != 2 or p.shape[0] != rows for p in parts):
        raise ShapeError(f"concat_cols: row counts differ: {[p.shape for p in parts]}")
    out = _result(np.concatenate([p.data for p in parts], axis=1), parts, "concat_cols")
    if out.requires_grad:
        offsets = np.cumsum([0] + [p.shape[1] for p in parts])
        def _bw():
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    p._accumulate(out.grad[:, lo:hi])
        out._backward = _bw
    return out


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat_rows needs at least one tensor")
    cols = parts[0].shape[1]
    if any(p.ndim != 2 or p.shape[1] != cols for p in parts):
        raise ShapeError(f"concat_rows: column counts differ: {[p.shape for p in parts]}")
    out = _result(np.concatenate([p.data for p in parts], axis=0), parts, "concat_rows")
    if out.requires_grad:
        offsets = np.cumsum([0] + [p.shape[0] for p in parts])
        def _bw():
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    p._accumulate(out.grad[lo:hi])
        out._backward = _bw
    return out


def repeat_rows(x: Tensor, k: int) -> Tensor:
    """Repeat each row k times consecutively: (n, d) -> (n*k, d)."""
    x = as_tensor(x)
    if x.ndim != 2 or k < 1:
        raise ShapeError(f"repeat_rows: shape {x.shape}, k={k}")
    out = _result(np.repeat(x.data, k, axis=0), (x,), "repeat_rows")
    if out.requires_grad:
        n, d = x.shape
        def _bw():
            if x.requires_grad:
                x._accumulate(out.grad.reshape(n, k, d).sum(axis=1))
        out._backward = _bw
    return out


def tile_rows(x: Tensor, k: int) -> Tensor:
    """Stack the whole row block k times: (n, d) -> (k*n, d)."""
    x = as_tensor(x)
    if x.ndim != 2 or k < 1:
        raise ShapeError(f"tile_rows: shape {x.shape}, k={k}")
    out = _result(np.tile(x.data, (k, 1)), (x,), "tile_rows")
    if out.requires_grad:
        n, d = x.shape
        def _bw():
            if x.requires_grad:
                x._accumulate(out.grad.reshape(k, n, d).sum(axis=0))
        out._backward = _bw
    return out


def embedding_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of an embedding table; backward scatter-adds."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2 or ids.ndim != 1:
        raise ShapeError(f"embedding_rows: table {table.shape}, ids {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding_rows: index out of range for table {table.shape}")
    out = _result(table.data[ids], (table,), "embedding_rows")
    if out.requires_grad:
        def _bw():
            if table.requires_grad:
                g = np.zeros_like(table.data)
                np.add.at(g, ids, out.grad)
                table._accumulate(g)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------
# normalization / attention primitives
# ---------------------------------------------------------------------

def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, overflow-safe via per-row max subtraction."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    y = exps / exps.sum(axis=1, keepdims=True)
    out = _result(y, (x,), "softmax_rows")
    if out.requires_grad:
        def _bw():
            if x.requires_grad:
                dy = out.grad
                inner = (dy * y).sum(axis=1, keepdims=True)
                x._accumulate(y * (dy - inner))
        out._backward = _bw
    return out


def scaled_attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int,
                     mask: np.ndarray | None = None) -> Tensor:
    """Multi-head scaled dot-product attention over projected q/k/v rows.

    Splits the model width into n_heads blocks and computes
    softmax(q_h k_h^T / sqrt(d_head)) v_h per head, concatenating the head
    outputs. One graph node equivalent to composing slice_cols, matmul,
    softmax_rows, and concat_cols per head (the composed route is kept as
    a test oracle). An additive mask of shape (queries, keys) is applied
    to the logits before the softmax.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ShapeError("scaled_attention expects three matrices")
    d = q.shape[1]
    if k.shape[1] != d or v.shape[1] != d:
        raise ShapeError(
            f"scaled_attention: widths differ: {q.shape}, {k.shape}, {v.shape}")
    if d % n_heads != 0:
        raise ShapeError(f"width {d} not divisible by {n_heads} heads")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(
            f"scaled_attention: key/value row counts differ: {k.shape} vs {v.shape}")
    tq, tk_rows = q.shape[0], k.shape[0]
    if mask is not None and mask.shape != (tq, tk_rows):
        raise ShapeError(f"attention mask shape {mask.shape} does not match "
                         f"(queries, keys) = ({tq}, {tk_rows})")
    d_head = d // n_heads
    scale = 1.0 / np.sqrt(d_head)
    qh = q.data.reshape(tq, n_heads, d_head).transpose(1, 0, 2)
    kh = k.data.reshape(tk_rows, n_heads, d_head).transpose(1, 0, 2)
    vh = v.data.reshape(tk_rows, n_heads, d_head).transpose(1, 0, 2)
    scores = (qh @ kh.transpose(0, 2, 1)) * scale
    if mask is not None:
        scores = scores + mask[None, :, :]
    shifted = scores - scores.max(axis=2, keepdims=True)
    exps = np.exp(shifted)
    weights = exps / exps.sum(axis=2, keepdims=True)
    out_heads = weights @ vh
    out = _result(out_heads.transpose(1, 0, 2).reshape(tq, d).copy(),
                  (q, k, v), "scaled_attention")
    if out.requires_grad:
        def _bw():
            dout = out.grad.reshape(tq, n_heads, d_head).transpose(1, 0, 2)
            if v.requires_grad:
                dv = weights.transpose(0, 2, 1) @ dout
                v._accumulate(dv.transpose(1, 0, 2).reshape(tk_rows, d))
            if q.requires_grad or k.requires_grad:
                dw = dout @ vh.transpose(0, 2, 1)
                ds = weights * (dw - (dw * weights).sum(axis=2, keepdims=True))
                ds *= scale
                if q.requires_grad:
                    q._accumulate((ds @ kh).transpose(1, 0, 2).reshape(tq, d))
                if k.requires_grad:
                    dk = ds.transpose(0, 2, 1) @ qh
                    k._accumulate(dk.transpose(1, 0, 2).reshape(tk_rows, d))
        out._backward = _bw
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if x.ndim != 2 or gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(
            f"layer_norm: x {x.shape}, gain {gain.shape}, bias {bias.shape}")
    if eps <= 0:
        raise ValueError("layer_norm eps must be positive")
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = _result(xhat * gain.data[None, :] + bias.data[None, :], (x, gain, bias), "layer_norm")
    if out.requires_grad:
        def _bw():
            dy = out.grad
            if gain.requires_grad:
                gain._accumulate((dy * xhat).sum(axis=0))
            if bias.requires_grad:
                bias._accumulate(dy.sum(axis=0))
            if x.requires_grad:
                dxhat = dy * gain.data[None, :]
                term = dxhat - dxhat.mean(axis=1, keepdims=True) \
                    - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
                x._accumulate(inv * term)
        out._backward = _bw
    return out


def cross_entropy_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer targets under row softmax."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape}, targets {targets.shape}")
    m = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    nll = lse - shifted[np.arange(m), targets]
    out = _result(np.asarray(nll.mean(), dtype=logits.dtype), (logits,), "cross_entropy")
    if out.requires_grad:
        probs = np.exp(shifted - lse[:, None])
        def _bw():
            if logits.requires_grad:
                g = probs.copy()
                g[np.arange(m), targets] -= 1.0
                logits._accumulate(g * (out.grad / m))
        out._backward = _bw
    return out


# ---------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------

def _projection_weights(shape, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(shape)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5,
               seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Requires float64 input. Non-scalar outputs are reduced with a fixed
    random projection so every output coordinate participates. The error
    for coordinate i is |analytic_i - numeric_i| / max(1, |numeric_i|).
    """
    if x.dtype != np.float64:
        raise ValueError("grad_check requires a float64 tensor")
    probe = f(Tensor(x.data.copy(), dtype=np.float64))
    weights = None
    if probe.size != 1:
        weights = _projection_weights(probe.shape, seed)

    def scalar_eval(arr: np.ndarray, coord) -> float:
        with no_grad():
            y = f(Tensor(arr, dtype=np.float64))
        val = float((y.data * weights).sum()) if weights is not None else y.item()
        if not np.isfinite(val):
            raise NonFiniteError(f"grad_check: non-finite value at coordinate {coord}")
        return val

    leaf = Tensor(x.data.copy(), requires_grad=True, dtype=np.float64)
    y = f(leaf)
    loss = sum_all(mul(y, Tensor(weights, dtype=np.float64))) if weights is not None else y
    backward(loss)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    worst = 0.0
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        hi = scalar_eval(bumped.reshape(x.shape), i)
        bumped[i] = flat[i] - h
        lo = scalar_eval(bumped.reshape(x.shape), i)
        numeric = (hi - lo) / (2.0 * h)
        err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst


def grad_check_params(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                      n_coords: int = 100, h: float = 1e-5,
                      rng: np.random.Generator | None = None) -> float:
    """Spot-check d(loss)/d(param) on sampled coordinates of many tensors.

    loss_fn must rebuild the scalar loss from the params' current data.
    """
    params = list(params)
    if any(p.dtype != np.float64 for p in params):
        raise ValueError("grad_check_params requires float64 parameters")
    rng = rng or np.random.default_rng(0)

    for p in params:
        p.grad = None
    backward(loss_fn())
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]

    sizes = np.array([p.size for p in params])
    prob = sizes / sizes.sum()
    worst = 0.0
    for _ in range(n_coords):
        pi = int(rng.choice(len(params), p=prob))
        ci = int(rng.integers(params[pi].size))
        flat = params[pi].data.reshape(-1)
        original = flat[ci]
        flat[ci] = original + h
        with no_grad():
            hi = loss_fn().item()
        flat[ci] = original - h
        with no_grad():
            lo = loss_fn().item()
        flat[ci] = original
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteError(
                f"grad_check_params: non-finite loss at param {pi} coordinate {ci}")
        numeric = (hi - lo) / (2.0 * h)
        err = abs(analytic[pi].reshape(-1)[ci] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst
