"""Dense reverse-mode differentiation over numpy arrays.

Every operation records its parents and a backward closure on the output
tensor. Backward closures are themselves written with tensor operations, so
when gradients are requested with ``create_graph=True`` the returned
gradients carry their own graph and can be differentiated again. Operations
whose backward uses data-dependent constants with non-zero derivative are
flagged first-order only and refuse a second pass.

Broadcasting follows numpy's trailing-dimension alignment.
"""
from __future__ import annotations

import builtins
import contextlib
import itertools
import threading

import numpy as np

from .. import kernels


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class GraphError(RuntimeError):
    """Differentiation request that the recorded graph cannot satisfy."""


_state = threading.local()
_seq = itertools.count()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def default_dtype():
    return getattr(_state, "dtype", np.float32)


@contextlib.contextmanager
def no_grad():
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def enable_grad(flag: bool = True):
    prev = _grad_enabled()
    _state.grad_enabled = flag
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def precision(dtype):
    """Set the dtype used for tensors built from raw data (float32 by default)."""
    prev = default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op",
                 "_order", "_second_order", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or default_dtype(), order="C")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"
        self._order = next(_seq)
        self._second_order = True

    @classmethod
    def _result(cls, data, parents, backward, op, second_order=True):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._order = next(_seq)
        out._op = op
        out._second_order = second_order
        if _grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # ---------------------------------------------------------------- basics
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    def backward(self, grad_output=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf on the graph."""
        tape = Tape(self)
        leaves = [n for n in tape.nodes if n._backward is None and n.requires_grad]
        grads = tape.gradients(leaves, grad_output=grad_output)
        for leaf, g in zip(leaves, grads):
            leaf.grad = g.data if leaf.grad is None else leaf.grad + g.data

    # -------------------------------------------------------------- operators
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _const(arr) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = arr
    t.requires_grad = False
    t.grad = None
    t._parents = ()
    t._backward = None
    t._op = "const"
    t._order = next(_seq)
    t._second_order = True
    return t


def _broadcast_shape(*shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError as exc:
        raise DimensionError(f"shapes {shapes} do not broadcast") from exc


# ------------------------------------------------------------ shape plumbing
def sum_to(x: Tensor, shape) -> Tensor:
    """Sum ``x`` down to ``shape`` (the inverse of broadcasting)."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, n in enumerate(shape) if n == 1 and x.shape[i + lead] != 1)
    data = x.data.sum(axis=axes, keepdims=True)
    if lead:
        data = data.reshape(data.shape[lead:])
    src_shape = x.shape

    def backward(g):
        return (broadcast_to(g, src_shape),)

    return Tensor._result(data, (x,), backward, "sum_to")


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    _broadcast_shape(x.shape, shape)
    data = np.ascontiguousarray(np.broadcast_to(x.data, shape))
    src_shape = x.shape

    def backward(g):
        return (sum_to(g, src_shape),)

    return Tensor._result(data, (x,), backward, "broadcast_to")


def reshape(x: Tensor, shape) -> Tensor:
    src_shape = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc

    def backward(g):
        return (reshape(g, src_shape),)

    return Tensor._result(data, (x,), backward, "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    data = np.ascontiguousarray(x.data.transpose(axes))

    def backward(g):
        return (transpose(g, inverse),)

    return Tensor._result(data, (x,), backward, "transpose")


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Select entries along ``axis``; repeated indices accumulate on backward."""
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % x.ndim
    data = np.take(x.data, indices, axis=axis)
    src_shape = x.shape

    def backward(g):
        return (index_add(g, indices, axis, src_shape),)

    return Tensor._result(data, (x,), backward, "take")


def index_add(g: Tensor, indices, axis: int, shape) -> Tensor:
    """Scatter-add ``g`` into zeros of ``shape`` at ``indices`` along ``axis``."""
    indices = np.asarray(indices, dtype=np.intp)
    data = np.zeros(shape, dtype=g.data.dtype)
    moved = np.moveaxis(data, axis, 0)
    src = np.moveaxis(g.data, axis, 0)
    if indices.ndim <= 1:
        np.add.at(moved, indices, src)
    else:
        np.add.at(moved, indices.reshape(-1), src.reshape((-1,) + src.shape[indices.ndim:]))

    def backward(gg):
        return (take(gg, indices, axis),)

    return Tensor._result(data, (g,), backward, "index_add")


def concat(xs, axis: int = 0) -> Tensor:
    xs = [_lift(x) for x in xs]
    axis = axis % xs[0].ndim
    try:
        data = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc
    bounds = np.cumsum([0] + [x.shape[axis] for x in xs])

    def backward(g):
        return tuple(take(g, np.arange(bounds[i], bounds[i + 1]), axis) for i in range(len(xs)))

    return Tensor._result(data, tuple(xs), backward, "concat")


# -------------------------------------------------------------- elementwise
def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def backward(g):
        return sum_to(g, sa), sum_to(g, sb)

    return Tensor._result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _broadcast_shape(a.shape, b.shape)
    sa, sb = a.shape, b.shape

    def backward(g):
        return sum_to(g, sa), sum_to(neg(g), sb)

    return Tensor._result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _broadcast_shape(a.shape, b.shape)

    def backward(g):
        return sum_to(mul(g, b), a.shape), sum_to(mul(g, a), b.shape)

    return Tensor._result(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _broadcast_shape(a.shape, b.shape)

    def backward(g):
        ga = div(g, b)
        gb = neg(div(mul(g, a), mul(b, b)))
        return sum_to(ga, a.shape), sum_to(gb, b.shape)

    return Tensor._result(a.data / b.data, (a, b), backward, "div")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        return (neg(g),)

    return Tensor._result(-a.data, (a,), backward, "neg")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (scale(g, c),)

    return Tensor._result(a.data * a.data.dtype.type(c), (a,), backward, "scale")


def square(a: Tensor) -> Tensor:
    def backward(g):
        return (scale(mul(g, a), 2.0),)

    return Tensor._result(a.data * a.data, (a,), backward, "square")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def backward(g):
        root = sqrt(a) if _grad_enabled() else _const(out)
        return (div(scale(g, 0.5), root),)

    return Tensor._result(out, (a,), backward, "sqrt")


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    sign = np.sign(a.data)

    def backward(g):
        return (mul(g, _const(sign)),)

    return Tensor._result(np.abs(a.data), (a,), backward, "abs")


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid_np(a.data)

    def backward(g):
        s = sigmoid(a) if _grad_enabled() else _const(out)
        return (mul(g, mul(s, sub(1.0, s))),)

    return Tensor._result(out, (a,), backward, "sigmoid")


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(a.data.dtype)

    def backward(g):
        return (mul(g, _const(mask)),)

    return Tensor._result(a.data * mask, (a,), backward, "relu")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    kind = a.data.dtype.type
    factor = np.where(a.data > 0, kind(1.0), kind(slope))

    def backward(g):
        return (mul(g, _const(factor)),)

    return Tensor._result(a.data * factor, (a,), backward, "leaky_relu")


def signed_power(a: Tensor, p: float) -> Tensor:
    """sign(a) * |a|**p; equals a**p for odd integers and on a >= 0. First order only."""
    p = float(p)
    mag = np.abs(a.data)
    out = np.sign(a.data) * mag ** p
    if p == 1.0:
        deriv = np.ones_like(mag)
    else:
        deriv = p * mag ** (p - 1.0)

    def backward(g):
        return (mul(g, _const(deriv.astype(a.data.dtype))),)

    return Tensor._result(out.astype(a.data.dtype), (a,), backward, "signed_power",
                          second_order=False)


# -------------------------------------------------------------- reductions
def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)
    src_shape = x.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(src_shape))

    def backward(g):
        return (broadcast_to(reshape(g, kept), src_shape),)

    return Tensor._result(np.asarray(data), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scale(sum(x, axes, keepdims), 1.0 / count)


def max(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Max along one axis. Backward routes to the lowest-index argmax."""
    if x.shape[axis] == 0:
        raise DimensionError("max over an empty axis")
    axis = axis % x.ndim
    idx = np.argmax(x.data, axis=axis)
    mask = np.zeros_like(x.data)
    np.put_along_axis(mask, np.expand_dims(idx, axis), 1.0, axis=axis)
    data = np.take_along_axis(x.data, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        data = np.squeeze(data, axis=axis)
    kept = tuple(1 if i == axis else n for i, n in enumerate(x.shape))
    src_shape = x.shape

    def backward(g):
        return (mul(broadcast_to(reshape(g, kept), src_shape), _const(mask)),)

    return Tensor._result(np.ascontiguousarray(data), (x,), backward, "max")


def reduce_max_over_points(x: Tensor) -> Tensor:
    """Per-channel max over the trailing point axis: (..., C, N) -> (..., C)."""
    if x.ndim < 1 or x.shape[-1] == 0:
        raise DimensionError("reduce_max_over_points needs a non-empty point axis")
    return max(x, axis=-1)


# ------------------------------------------------------------- linear maps
def matmul(a: Tensor, b: Tensor) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    _broadcast_shape(a.shape[:-2], b.shape[:-2])
    sa, sb = a.shape, b.shape

    def backward(g):
        return sum_to(matmul(g, swap_last(b)), sa), sum_to(matmul(swap_last(a), g), sb)

    return Tensor._result(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def conv1d_pointwise(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Kernel-size-1 convolution along the point axis: (…, C_in, N) -> (…, C_out, N)."""
    if weight.ndim != 2 or x.ndim < 2 or weight.shape[1] != x.shape[-2]:
        raise DimensionError(
            f"conv1d_pointwise: weight {weight.shape} incompatible with input {x.shape}")
    out = matmul(weight, x)
    if bias is not None:
        out = add(out, reshape(bias, (bias.shape[0], 1)))
    return out


def _triple(v):
    if isinstance(v, int):
        return (v, v, v)
    return tuple(int(i) for i in v)


def _weight_grad(g2, cols):
    """sum_b g2[b] @ cols[b].T for (B, Co, S) and (B, K, S) arrays.

    tensordot copies a transposed ``cols`` first, which dominates for large
    S; chunked batched matmul avoids the copy. Small S keeps tensordot.
    """
    B, Co, S = g2.shape
    if S < 32:
        return np.tensordot(g2, cols, axes=([0, 2], [0, 2]))
    out = np.zeros((Co, cols.shape[1]), dtype=np.result_type(g2, cols))
    step = builtins.max(1, (1 << 22) // (Co * cols.shape[1]))
    for s in range(0, B, step):
        out += np.matmul(g2[s:s + step], cols[s:s + step].transpose(0, 2, 1)).sum(axis=0)
    return out


def conv3d(x: Tensor, kernels_: Tensor, bias: Tensor | None = None,
           stride=1, padding=0) -> Tensor:
    """3-D cross-correlation, channels first: (B, C_in, W, H, D) or (C_in, W, H, D).

    ``kernels_`` has shape (C_out, C_in, kW, kH, kD). Differentiable w.r.t. the
    input, kernels and bias (first order only).
    """
    squeeze = x.ndim == 4
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 5 or kernels_.ndim != 5:
        raise DimensionError("conv3d expects a 5-D input batch and 5-D kernels")
    B, C, W, H, D = x.shape
    Co, Ci, kw, kh, kd = kernels_.shape
    if C != Ci:
        raise DimensionError(f"conv3d channel mismatch: input {C}, kernels {Ci}")
    s = _triple(stride)
    p = _triple(padding)
    out_sp = tuple((n + 2 * pp - k) // ss + 1
                   for n, pp, k, ss in zip((W, H, D), p, (kw, kh, kd), s))
    if any(n <= 0 for n in out_sp):
        raise DimensionError(f"conv3d produces non-positive output size {out_sp}")

    xp = x.data
    if any(p):
        # np.pad is several times slower than filling a zeroed buffer
        xp = np.zeros((B, C, W + 2 * p[0], H + 2 * p[1], D + 2 * p[2]), dtype=x.data.dtype)
        xp[:, :, p[0]:p[0] + W, p[1]:p[1] + H, p[2]:p[2] + D] = x.data
    cols = kernels.im2col3d(xp, (kw, kh, kd), s, out_sp)          # (B, K, S)
    w2 = kernels_.data.reshape(Co, -1)
    out = np.matmul(w2, cols).reshape((B, Co) + out_sp)
    padded_shape = xp.shape

    def backward(g):
        g2 = g.data.reshape(B, Co, -1)
        gw = _weight_grad(g2, cols).reshape(kernels_.shape)
        gx = None
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2)
            gxp = kernels.col2im3d(gcols, padded_shape, (kw, kh, kd), s, out_sp)
            gx = gxp[:, :, p[0]:p[0] + W, p[1]:p[1] + H, p[2]:p[2] + D]
            gx = _const(np.ascontiguousarray(gx))
        return gx, _const(gw.astype(g.data.dtype))

    res = Tensor._result(out, (x, kernels_), backward, "conv3d", second_order=False)
    if bias is not None:
        res = add(res, reshape(bias, (Co, 1, 1, 1)))
    if squeeze:
        res = reshape(res, res.shape[1:])
    return res


def l2_normalize(v: Tensor, axis: int = -1, eps: float = 1e-8) -> Tensor:
    """v / max(||v||_2, eps) along ``axis``. First order only."""
    axis = axis % v.ndim
    norm = np.sqrt((v.data.astype(np.float64) ** 2).sum(axis=axis, keepdims=True))
    denom = np.maximum(norm, eps).astype(v.data.dtype)
    out = v.data / denom
    live = (norm > eps).astype(v.data.dtype)

    def backward(g):
        gd = g.data
        proj = (gd * out).sum(axis=axis, keepdims=True) * live
        return (_const((gd - out * proj) / denom),)

    return Tensor._result(out, (v,), backward, "l2_normalize", second_order=False)


# ------------------------------------------------------------------- tape
class Tape:
    """Operations reachable from ``output`` in recording order (parents first)."""

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes = self._collect(output)

    @staticmethod
    def _collect(output):
        if not output.requires_grad:
            return [output]
        seen = set()
        nodes = []
        stack = [output]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(p for p in node._parents if p.requires_grad)
        # creation order is a valid topological order
        nodes.sort(key=lambda n: n._order)
        return nodes

    def gradients(self, wrt, grad_output=None, create_graph: bool = False,
                  allow_unused: bool = False):
        out = self.output
        if grad_output is None:
            if out.size != 1:
                raise GraphError("gradient of a non-scalar needs grad_output")
            grad_output = np.ones_like(out.data)
        grad_output = _lift(grad_output, out)
        members = {id(n) for n in self.nodes}
        for w in wrt:
            if id(w) not in members and not allow_unused:
                raise GraphError("requested tensor is not on the recorded graph")
        grads = {id(out): grad_output}
        wanted = {id(w) for w in wrt}
        with enable_grad(create_graph):
            for node in reversed(self.nodes):
                g = grads.get(id(node))
                if g is None or node._backward is None:
                    continue
                if id(node) not in wanted:
                    del grads[id(node)]
                if create_graph and not node._second_order:
                    raise GraphError(f"op '{node._op}' does not support second-order gradients")
                parent_grads = node._backward(g)
                for parent, pg in zip(node._parents, parent_grads):
                    if pg is None or not parent.requires_grad:
                        continue
                    prev = grads.get(id(parent))
                    grads[id(parent)] = pg if prev is None else add(prev, pg)
        result = []
        for w in wrt:
            g = grads.get(id(w))
            if g is None:
                g = _const(np.zeros_like(w.data))
            result.append(g)
        return result


def grad(output: Tensor, wrt, create_graph: bool = False, grad_output=None,
         allow_unused: bool = False):
    """d(output)/d(wrt). ``wrt`` may be a tensor or a sequence of tensors.

    Tensors that ``output`` does not depend on raise ``GraphError`` unless
    ``allow_unused`` is set, in which case their gradient is zero.
    """
    single = isinstance(wrt, Tensor)
    wrt_list = [wrt] if single else list(wrt)
    if output.size != 1 and grad_output is None:
        raise GraphError("grad expects a scalar output")
    if not output.requires_grad:
        raise GraphError("output does not depend on any tensor requiring grad")
    grads = Tape(output).gradients(wrt_list, grad_output=grad_output,
                                   create_graph=create_graph, allow_unused=allow_unused)
    return grads[0] if single else grads


def grad_of_scalar_wrt(scalar: Tensor, wrt: Tensor, create_graph: bool = False) -> Tensor:
    if scalar.size != 1:
        raise GraphError("grad_of_scalar_wrt needs a one-element tensor")
    return grad(scalar, wrt, create_graph=create_graph)
