"""Dense float64 tensors with reverse-mode automatic differentiation.

Values are C-contiguous float64 numpy arrays and ops never mutate their
inputs.  Gradients are recorded on an explicit :class:`GradientTape`: while a
tape is active (as a context manager) every op appends one node holding a
backward closure, and :func:`backward` replays the nodes in reverse.  With no
active tape the same ops run as plain numpy computations, which is the
inference path.

Storage is always contiguous and row-major; transpose/reshape copy rather
than producing strided views.  Dropout masks and any sampling draw from the
tape's SplitMix64 stream (see :mod:`semaphrase.rng`), so a (seed, op order)
pair fully determines a training run.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ContractError, ShapeError
from .rng import SplitMix64

_TLS = threading.local()


def _tape_stack() -> list:
    stack = getattr(_TLS, "stack", None)
    if stack is None:
        stack = []
        _TLS.stack = stack
    return stack


def active_tape() -> "GradientTape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense float64 value, optionally carrying a gradient.

    ``grad`` stays ``None`` until :func:`backward` reaches the tensor;
    ``tape_id`` is the index of the node that produced it on the active tape
    (``None`` for leaves such as parameters and inputs).
    """

    __slots__ = ("data", "grad", "tape_id")

    def __init__(self, data, copy: bool = False):
        if copy:
            arr = np.array(data, dtype=np.float64, copy=True)
        elif type(data) is np.ndarray and data.dtype == np.float64 and data.flags.c_contiguous:
            arr = data  # already canonical; skip the conversion round trip
        else:
            arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


class _Node:
    __slots__ = ("op", "output", "backward_fn")

    def __init__(self, op: str, output: Tensor, backward_fn):
        self.op = op
        self.output = output
        self.backward_fn = backward_fn


class GradientTape:
    """Append-only record of executed ops for one forward pass.

    Nodes are stored in execution order, which is a topological order of the
    compute graph: an op's inputs always exist before the op runs.  One tape
    per training thread; nesting is a contract violation.
    """

    def __init__(self, seed: int = 0):
        self.nodes: list[_Node] = []
        self.rng_seed = seed
        self.rng = SplitMix64(seed)

    def record(self, op: str, output: Tensor, backward_fn) -> None:
        output.tape_id = len(self.nodes)
        self.nodes.append(_Node(op, output, backward_fn))

    def __enter__(self) -> "GradientTape":
        stack = _tape_stack()
        if stack:
            raise ContractError("gradient tapes do not nest; one tape per thread")
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _tape_stack().pop()


def backward(tape: GradientTape, loss: Tensor) -> None:
    """Populate grads of every tensor reachable from ``loss`` on ``tape``.

    Visits each node exactly once, in reverse execution order.  Tensors not
    reachable from the loss keep ``grad is None``.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if loss.tape_id is None or loss.tape_id >= len(tape.nodes) or tape.nodes[loss.tape_id].output is not loss:
        raise ContractError("loss was not recorded on this tape")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.output.grad
        if g is None:
            continue
        node.backward_fn(g)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# construction helpers


def tensor(data) -> Tensor:
    return Tensor(data)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


# ---------------------------------------------------------------------------
# elementwise / arithmetic ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, b=b):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(g, b.data.shape))
        tape.record("add", out, bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, b=b):
            _accum(a, _unbroadcast(g, a.data.shape))
            _accum(b, _unbroadcast(-g, b.data.shape))
        tape.record("sub", out, bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, b=b):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))
        tape.record("mul", out, bwd)
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, c=c):
            _accum(a, g * c)
        tape.record("scale", out, bwd)
    return out


def mul_const(a: Tensor, mask: np.ndarray) -> Tensor:
    """Elementwise product with a constant array (no gradient for the mask)."""
    out = Tensor(a.data * mask)
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, mask=mask):
            _accum(a, _unbroadcast(g * mask, a.data.shape))
        tape.record("mul_const", out, bwd)
    return out


def add_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Sum with a constant array (positional tables, cached states)."""
    out = Tensor(a.data + c)
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a):
            _accum(a, _unbroadcast(g, a.data.shape))
        tape.record("add_const", out, bwd)
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, out=out):
            _accum(a, g * (1.0 - out.data * out.data))
        tape.record("tanh", out, bwd)
    return out


def sigmoid(a: Tensor) -> Tensor:
    # exp on the negative branch only, so large |x| cannot overflow
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, out=out):
            _accum(a, g * out.data * (1.0 - out.data))
        tape.record("sigmoid", out, bwd)
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a):
            _accum(a, g * (a.data > 0.0))
        tape.record("relu", out, bwd)
    return out


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed stably; derivative is sigmoid(x)."""
    x = a.data
    out = Tensor(np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))))
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a):
            x = a.data
            s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
            _accum(a, g * s)
        tape.record("softplus", out, bwd)
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise ContractError("log requires strictly positive input")
    out = Tensor(np.log(a.data))
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a):
            _accum(a, g / a.data)
        tape.record("log", out, bwd)
    return out


# ---------------------------------------------------------------------------
# shape ops (always copy; storage stays contiguous)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a):
            _accum(a, g.reshape(a.data.shape))
        tape.record("reshape", out, bwd)
    return out


def transpose(a: Tensor, axes) -> Tensor:
    out = Tensor(a.data.transpose(axes))
    tape = active_tape()
    if tape is not None:
        inv = np.argsort(axes)
        def bwd(g, a=a, inv=inv):
            _accum(a, g.transpose(inv))
        tape.record("transpose", out, bwd)
    return out


def concat(parts: list[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ContractError("concat of zero tensors")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    tape = active_tape()
    if tape is not None:
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum(sizes)[:-1]
        def bwd(g, parts=parts, offsets=offsets, axis=axis):
            for p, piece in zip(parts, np.split(g, offsets, axis=axis)):
                _accum(p, piece)
        tape.record("concat", out, bwd)
    return out


# ---------------------------------------------------------------------------
# matmul and reductions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim < 1 or bd.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got shapes {ad.shape} x {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {ad.shape} x {bd.shape}")
    if ad.ndim > 2 and bd.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError(f"matmul leading dimensions disagree: {ad.shape} x {bd.shape}")
    out = Tensor(ad @ bd)
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, b=b):
            ad, bd = a.data, b.data
            ga = g @ bd.swapaxes(-1, -2)
            _accum(a, _unbroadcast(ga, ad.shape))
            if bd.ndim == 2 and ad.ndim > 2:
                # stacked lhs against a plain matrix: contract all leading axes
                gb = np.tensordot(ad, g, axes=(tuple(range(ad.ndim - 1)), tuple(range(g.ndim - 1))))
            else:
                gb = ad.swapaxes(-1, -2) @ g
            _accum(b, _unbroadcast(gb, bd.shape))
        tape.record("matmul", out, bwd)
    return out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, w)
    return add(out, b) if b is not None else out


def tsum(a: Tensor, axis=None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis))
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, axis=axis):
            if axis is None:
                _accum(a, np.broadcast_to(g, a.data.shape))
            else:
                _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape))
        tape.record("sum", out, bwd)
    return out


def mean(a: Tensor) -> Tensor:
    return scale(tsum(a), 1.0 / a.data.size)


# ---------------------------------------------------------------------------
# softmax family and normalization


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if axis >= a.ndim or axis < -a.ndim:
        raise ContractError(f"softmax axis {axis} out of range for rank {a.ndim}")
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    out = Tensor(e / e.sum(axis=axis, keepdims=True))
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, out=out, axis=axis):
            s = out.data
            _accum(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))
        tape.record("softmax", out, bwd)
    return out


def masked_softmax(a: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over positions where ``mask`` is True; masked weights are exactly 0.

    ``mask`` must broadcast to ``a``'s shape.  A row with no unmasked key is a
    contract violation (there is nothing to attend to).
    """
    full_mask = np.broadcast_to(mask, a.data.shape)
    if not full_mask.any(axis=axis).all():
        raise ContractError("attention row is fully masked: no valid key")
    x = np.where(full_mask, a.data, -np.inf)
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)  # exp(-inf) underflows to exactly 0.0
    out = Tensor(e / e.sum(axis=axis, keepdims=True))
    tape = active_tape()
    if tape is not None:
        def bwd(g, a=a, out=out, axis=axis):
            s = out.data
            _accum(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))
        tape.record("masked_softmax", out, bwd)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean/unit variance, then scale and shift."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.data.shape} and {bias.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)
    tape = active_tape()
    if tape is not None:
        def bwd(g, x=x, gain=gain, bias=bias, xhat=xhat, inv=inv):
            red = tuple(range(g.ndim - 1))
            _accum(bias, g.sum(axis=red) if red else g)
            _accum(gain, (g * xhat).sum(axis=red) if red else g * xhat)
            gh = g * gain.data
            n = xhat.shape[-1]
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).sum(axis=-1, keepdims=True) / n)
            _accum(x, gx)
        tape.record("layer_norm", out, bwd)
    return out


# ---------------------------------------------------------------------------
# table lookup, dropout, losses


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ContractError(
            f"embedding id out of range [0, {table.data.shape[0]}): min {ids.min()}, max {ids.max()}"
        )
    out = Tensor(table.data[ids])
    tape = active_tape()
    if tape is not None:
        def bwd(g, table=table, ids=ids):
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, g)
            _accum(table, gt)
        tape.record("embedding_lookup", out, bwd)
    return out


def dropout(x: Tensor, p: float) -> Tensor:
    """Inverted dropout: keep with probability 1-p and scale kept units by 1/(1-p).

    With p=0, or with no active tape (inference), this is the identity.
    Mask bits come from the tape's stream, so runs replay exactly.
    """
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must lie in [0, 1), got {p}")
    tape = active_tape()
    if p == 0.0 or tape is None:
        return x
    keep = tape.rng.uniform(x.data.shape) >= p
    mask = keep.astype(np.float64) * (1.0 / (1.0 - p))
    return mul_const(x, mask)


def cross_entropy(logits: Tensor, target_ids: np.ndarray, weight: np.ndarray | None = None) -> Tensor:
    """Mean token-level cross entropy of ``logits`` against integer targets.

    ``logits`` has shape (..., vocab); ``target_ids`` the leading shape.
    ``weight`` (same leading shape) selects/weights positions; the loss is
    sum(weight * nll) / sum(weight).  Defaults to uniform weights.
    """
    x = logits.data
    ids = np.asarray(target_ids)
    if ids.shape != x.shape[:-1]:
        raise ShapeError(f"targets shape {ids.shape} does not match logits {x.shape}")
    if ids.size == 0:
        raise ContractError("cross_entropy over zero targets")
    if ids.min() < 0 or ids.max() >= x.shape[-1]:
        raise ContractError(f"target id outside vocabulary of size {x.shape[-1]}")
    if weight is None:
        weight = np.ones(ids.shape, dtype=np.float64)
    denom = weight.sum()
    if denom <= 0:
        raise ContractError("cross_entropy weights sum to zero")
    m = x.max(axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(x - m).sum(axis=-1))
    picked = np.take_along_axis(x, ids[..., None], axis=-1)[..., 0]
    out = Tensor(((lse - picked) * weight).sum() / denom)
    tape = active_tape()
    if tape is not None:
        def bwd(g, logits=logits, ids=ids, weight=weight, denom=denom):
            x = logits.data
            m = x.max(axis=-1, keepdims=True)
            e = np.exp(x - m)
            p = e / e.sum(axis=-1, keepdims=True)
            idx = ids[..., None]
            np.put_along_axis(p, idx, np.take_along_axis(p, idx, axis=-1) - 1.0, axis=-1)
            _accum(logits, p * (weight[..., None] * (float(np.asarray(g).item()) / denom)))
        tape.record("cross_entropy", out, bwd)
    return out
