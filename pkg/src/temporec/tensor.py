"""Dense tensors with tape-based reverse-mode differentiation.

Every primitive validates shapes up front, computes its result with numpy,
and registers a backward rule on the active tape when gradients are needed.
Broadcasting is deliberately restricted to two auditable cases: scalar-times-
tensor and a trailing-dimension vector against an N-d tensor (bias-add style).
"""

from __future__ import annotations

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operands with incompatible shapes for the requested primitive."""


class UnknownOpError(KeyError):
    """Primitive id not in the supported set."""


class TapeError(RuntimeError):
    """Backward invoked without a usable tape, or on a non-scalar loss."""


class Tensor:
    """Dense array plus an optional gradient accumulator.

    ``grad`` exists iff ``requires_grad`` and always matches ``data`` in
    shape; it accumulates additively across uses within one backward pass.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # Light operator sugar; model code mostly calls the primitives directly.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return subtract(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return elementwise_mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class Tape:
    """Recorded primitive applications for one forward/backward cycle.

    A tape belongs to a single logical execution thread and is consumed by
    exactly one ``backward`` call, after which it is cleared.
    """

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self.used = False

    def __enter__(self) -> "Tape":
        _push_tape(self)
        return self

    def __exit__(self, *exc) -> None:
        _pop_tape(self)


_TAPE_STACK: list[Tape] = []


def _push_tape(tape: Tape) -> None:
    _TAPE_STACK.append(tape)


def _pop_tape(tape: Tape) -> None:
    if not _TAPE_STACK or _TAPE_STACK[-1] is not tape:
        raise TapeError("tape stack corrupted: exiting a tape that is not active")
    _TAPE_STACK.pop()


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _wants_grad(*inputs: Tensor) -> bool:
    return active_tape() is not None and any(t.requires_grad for t in inputs)


def _emit(out_data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap a primitive result, recording it when gradients are required."""
    if _wants_grad(*inputs):
        out = Tensor(out_data, requires_grad=True)
        active_tape().records.append((out, inputs, backward_fn))
        return out
    return Tensor(out_data)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` for every requires_grad tensor reachable from ``loss``.

    The loss must be a scalar and an active tape must exist; the tape is
    cleared afterwards. Frozen tensors never receive gradients.
    """
    if loss.data.size != 1:
        raise TapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = active_tape()
    if tape is None:
        raise TapeError("backward requires an active tape")
    if tape.used:
        raise TapeError("tape already consumed by a previous backward pass")
    tape.used = True

    if loss.grad is not None:
        loss.grad[...] = 1.0
    for out, inputs, backward_fn in reversed(tape.records):
        if out.grad is None or not np.any(out.grad):
            continue
        grads = backward_fn(out.grad)
        for inp, g in zip(inputs, grads):
            if g is not None and inp.requires_grad:
                inp.grad += g
    tape.records.clear()


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def _check_float(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.data.dtype not in FLOAT_DTYPES:
            raise ShapeError(f"{op}: expected float tensor, got {t.data.dtype}")


def _is_row_vector(vec: Tensor, ref: Tensor) -> bool:
    return vec.ndim == 1 and ref.ndim >= 1 and vec.shape[0] == ref.shape[-1]


def _sum_to_last_dim(g: np.ndarray) -> np.ndarray:
    # collapse all leading axes, leaving the trailing vector shape
    return g.sum(axis=tuple(range(g.ndim - 1)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    Either both operands share identical leading dimensions, or ``b`` is a
    plain 2-d weight matrix applied to every row of ``a``.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-d, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ: {a.shape} @ {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: leading dimensions differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)
    a_data, b_data = a.data, b.data

    def bwd(g):
        ga = np.matmul(g, b_data.swapaxes(-1, -2)) if a.requires_grad else None
        if b.requires_grad:
            gb = np.matmul(a_data.swapaxes(-1, -2), g)
            if b_data.ndim == 2 and gb.ndim > 2:
                gb = gb.sum(axis=tuple(range(gb.ndim - 2)))
        else:
            gb = None
        return ga, gb

    return _emit(out, (a, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a trailing-dimension bias vector."""
    if a.shape == b.shape:
        row_bias = False
    elif _is_row_vector(b, a):
        row_bias = True
    else:
        raise ShapeError(f"add: incompatible shapes {a.shape} + {b.shape}")
    out = a.data + b.data

    def bwd(g):
        ga = g if a.requires_grad else None
        if b.requires_grad:
            gb = _sum_to_last_dim(g) if row_bias else g
        else:
            gb = None
        return ga, gb

    return _emit(out, (a, b), bwd)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"subtract: incompatible shapes {a.shape} - {b.shape}")
    out = a.data - b.data

    def bwd(g):
        return (g if a.requires_grad else None,
                -g if b.requires_grad else None)

    return _emit(out, (a, b), bwd)


def scale(a: Tensor, s) -> Tensor:
    """Multiply by a scalar: a Python number or a one-element Tensor."""
    if isinstance(s, Tensor):
        if s.data.size != 1:
            raise ShapeError(f"scale: scalar operand has shape {s.shape}")
        sval = float(s.data.reshape(()))
        out = a.data * sval
        a_data = a.data

        def bwd(g):
            ga = g * sval if a.requires_grad else None
            if s.requires_grad:
                gs = np.asarray(np.sum(g * a_data), dtype=a_data.dtype).reshape(s.shape)
            else:
                gs = None
            return ga, gs

        return _emit(out, (a, s), bwd)

    sval = float(s)
    out = a.data * sval

    def bwd_const(g):
        return (g * sval if a.requires_grad else None,)

    return _emit(out, (a,), bwd_const)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product; ``b`` may be a trailing-dimension scaling vector."""
    if a.shape == b.shape:
        row_vec = False
    elif _is_row_vector(b, a):
        row_vec = True
    else:
        raise ShapeError(f"elementwise_mul: incompatible shapes {a.shape} * {b.shape}")
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def bwd(g):
        ga = g * b_data if a.requires_grad else None
        if b.requires_grad:
            gb = g * a_data
            if row_vec:
                gb = _sum_to_last_dim(gb)
        else:
            gb = None
        return ga, gb

    return _emit(out, (a, b), bwd)


def concat_last_dim(tensors: list[Tensor]) -> Tensor:
    if not tensors:
        raise ShapeError("concat_last_dim: empty input list")
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(
                f"concat_last_dim: leading dims differ: {[t.shape for t in tensors]}")
    out = np.concatenate([t.data for t in tensors], axis=-1)
    sizes = [t.shape[-1] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(
            g[..., offsets[i]:offsets[i + 1]] if t.requires_grad else None
            for i, t in enumerate(tensors))

    return _emit(out, tuple(tensors), bwd)


def split_last_dim(t: Tensor, sizes: list[int]) -> list[Tensor]:
    if sum(sizes) != t.shape[-1]:
        raise ShapeError(
            f"split_last_dim: sizes {sizes} do not cover last dim of {t.shape}")
    outs = []
    offset = 0
    for size in sizes:
        lo, hi = offset, offset + size
        piece = t.data[..., lo:hi]

        def bwd(g, lo=lo, hi=hi):
            full = np.zeros_like(t.data)
            full[..., lo:hi] = g
            return (full,)

        outs.append(_emit(piece.copy(), (t,), bwd))
        offset += size
    return outs


def softmax_last_dim(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        inner = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - inner),)

    return _emit(s, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last dimension to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain/bias must be ({d},), got {gain.shape}/{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.data + bias.data
    gain_data = gain.data

    def bwd(g):
        if x.requires_grad:
            dxhat = g * gain_data
            # standard layer-norm backward collapsed into two row statistics
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            gx = inv_std * (dxhat - m1 - xhat * m2)
        else:
            gx = None
        ggain = _sum_to_last_dim(g * xhat) if gain.requires_grad else None
        gbias = _sum_to_last_dim(g) if bias.requires_grad else None
        return gx, ggain, gbias

    return _emit(out, (x, gain, bias), bwd)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout. Eval mode is the bitwise identity."""
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout: rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ShapeError("dropout: training mode requires an explicit rng")
    keep = (rng.random(x.shape) >= rate)
    factor = 1.0 / (1.0 - rate)
    mask = keep.astype(x.data.dtype) * factor
    out = x.data * mask

    def bwd(g):
        return (g * mask,)

    return _emit(out, (x,), bwd)


def cos(x: Tensor) -> Tensor:
    out = np.cos(x.data)
    x_data = x.data

    def bwd(g):
        return (-np.sin(x_data) * g,)

    return _emit(out, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bwd(g):
        return (out * g,)

    return _emit(out, (x,), bwd)


def log(x: Tensor) -> Tensor:
    bad = x.data <= 0
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"log: non-positive value {x.data[idx]} at index {idx}")
    out = np.log(x.data)
    x_data = x.data

    def bwd(g):
        return (g / x_data,)

    return _emit(out, (x,), bwd)


def gelu(x: Tensor) -> Tensor:
    """Gaussian-error activation (tanh form) used by the encoder feed-forward.

    Extends the minimal primitive set: the closed-form derivative keeps the
    backward rule auditable where a composition of the base primitives cannot
    express the erf-style curve.
    """
    c = float(np.sqrt(2.0 / np.pi))
    x_data = x.data
    inner = c * (x_data + 0.044715 * x_data ** 3)
    t = np.tanh(inner)
    out = 0.5 * x_data * (1.0 + t)

    def bwd(g):
        sech2 = 1.0 - t ** 2
        dinner = c * (1.0 + 3 * 0.044715 * x_data ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x_data * sech2 * dinner),)

    return _emit(out, (x,), bwd)


def embedding_lookup(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows of ``table``; backward scatter-adds into the table."""
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError(f"embedding_lookup: integer indices required, got {idx.dtype}")
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-d, got {table.shape}")
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError(
            f"embedding_lookup: index out of range [0, {n}): "
            f"min={idx.min()}, max={idx.max()}")
    out = table.data[idx]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _emit(out, (table,), bwd)


def cosine_similarity(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tensor:
    """All-pairs cosine similarity between row sets: (B,d) x (C,d) -> (B,C)."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"cosine_similarity: expected (B,d) and (C,d), got {a.shape}, {b.shape}")
    na = np.maximum(np.linalg.norm(a.data, axis=1, keepdims=True), eps)
    nb = np.maximum(np.linalg.norm(b.data, axis=1, keepdims=True), eps)
    an = a.data / na
    bn = b.data / nb
    sim = an @ bn.T

    def bwd(g):
        if a.requires_grad:
            ga = (g @ bn - (g * sim).sum(axis=1, keepdims=True) * an) / na
        else:
            ga = None
        if b.requires_grad:
            gb = (g.T @ an - (g * sim).sum(axis=0)[:, None] * bn) / nb
        else:
            gb = None
        return ga, gb

    return _emit(sim, (a, b), bwd)


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError(f"masked_fill: mask shape {mask.shape} != tensor shape {x.shape}")
    out = np.where(mask, np.asarray(value, dtype=x.data.dtype), x.data)

    def bwd(g):
        return (np.where(mask, 0.0, g).astype(g.dtype),)

    return _emit(out, (x,), bwd)


def transpose_last_two(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ShapeError(f"transpose_last_two: needs >=2-d tensor, got {x.shape}")
    out = x.data.swapaxes(-1, -2).copy()

    def bwd(g):
        return (g.swapaxes(-1, -2),)

    return _emit(out, (x,), bwd)


def _reduce(x: Tensor, axis, keepdims: bool, op: str) -> Tensor:
    if axis not in (None, -1):
        raise ShapeError(f"{op}: axis must be None or -1, got {axis}")
    fn = np.sum if op == "sum" else np.mean
    out = fn(x.data, axis=axis, keepdims=keepdims if axis is not None else False)
    out = np.asarray(out, dtype=x.data.dtype)
    shape = x.shape
    n = x.data.size if axis is None else shape[-1]

    def bwd(g):
        if axis is None:
            gx = np.full(shape, g.reshape(()), dtype=g.dtype)
        else:
            gexp = g if keepdims else np.expand_dims(g, -1)
            gx = np.broadcast_to(gexp, shape).copy()
        if op == "mean":
            gx = gx / n
        return (gx,)

    return _emit(out, (x,), bwd)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce(x, axis, keepdims, "sum")


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    return _reduce(x, axis, keepdims, "mean")


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "subtract": subtract,
    "scale": scale,
    "elementwise_mul": elementwise_mul,
    "concat_last_dim": lambda *ts: concat_last_dim(list(ts)),
    "split_last_dim": split_last_dim,
    "softmax_last_dim": softmax_last_dim,
    "layer_norm": layer_norm,
    "dropout": dropout,
    "cos": cos,
    "exp": exp,
    "log": log,
    "gelu": gelu,
    "embedding_lookup": embedding_lookup,
    "cosine_similarity": cosine_similarity,
    "masked_fill": masked_fill,
    "transpose_last_two": transpose_last_two,
    "mean": tensor_mean,
    "sum": tensor_sum,
}


def apply_primitive(op_kind: str, inputs: list, attrs: dict | None = None):
    """Dispatch a primitive by id. Unknown kinds are rejected."""
    fn = _PRIMITIVES.get(op_kind)
    if fn is None:
        raise UnknownOpError(f"unknown primitive {op_kind!r}")
    attrs = attrs or {}
    return fn(*inputs, **attrs)


def constant(data, dtype=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=False)


def parameter(data, name: str, dtype=None) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True, name=name)
