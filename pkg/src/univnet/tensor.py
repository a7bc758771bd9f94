"""A small reverse-mode autodiff engine over numpy arrays.

Only the operations the vocoder needs are provided. A :class:`Tensor` records
the op that produced it; :meth:`Tensor.backward` walks the graph in reverse
topological order and accumulates gradients into leaves that have
``requires_grad`` set.
"""

import contextlib

import numpy as np

from univnet import kernels
from univnet.errors import DimensionError

_default_dtype = np.dtype(np.float32)
_grad_enabled = True


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype):
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _default_dtype = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily switch the dtype used for new tensors and parameters."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    """n-dimensional float array that can take part in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(_default_dtype)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self):
        return len(self.data)

    # -- graph ---------------------------------------------------------
    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar tensor")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.dtype).reshape(self.shape)
        if not self.requires_grad:
            raise ValueError("tensor does not require grad")

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operators -----------------------------------------------------
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
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def log(self):
        return log(self)

    def exp(self):
        return exp(self)

    def sqrt(self):
        return sqrt(self)

    def abs(self):
        return tabs(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)


def as_tensor(x, like=None):
    """Wrap ``x``; Python scalars take the dtype of ``like`` (or the default)."""
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return Tensor(np.asarray(x, dtype=like.dtype if like is not None else _default_dtype))
    arr = np.asarray(x)
    if arr.dtype.kind != "f":
        arr = arr.astype(_default_dtype)
    return Tensor(arr)


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _operands(a, b):
    if isinstance(a, Tensor):
        b = as_tensor(b, like=a)
    elif isinstance(b, Tensor):
        a = as_tensor(a, like=b)
    a, b = as_tensor(a), as_tensor(b)
    return a, b, np.result_type(a.dtype, b.dtype)


# -- elementwise arithmetic --------------------------------------------------

def add(a, b):
    a, b, _ = _operands(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b, _ = _operands(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b, _ = _operands(a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b, _ = _operands(a, b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), backward)


def power(a, exponent):
    a = as_tensor(a)
    exponent = float(exponent)
    out = a.data ** a.dtype.type(exponent)

    def backward(g):
        return (g * a.dtype.type(exponent) * a.data ** a.dtype.type(exponent - 1.0),)

    return _make(out, (a,), backward)


def square(a):
    a = as_tensor(a)

    def backward(g):
        return (2.0 * g * a.data,)

    return _make(a.data * a.data, (a,), backward)


# -- pointwise nonlinearities -----------------------------------------------

def log(a):
    a = as_tensor(a)

    def backward(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), backward)


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _make(out, (a,), backward)


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / out,)

    return _make(out, (a,), backward)


def tabs(a):
    a = as_tensor(a)

    def backward(g):
        return (g * np.sign(a.data),)

    return _make(np.abs(a.data), (a,), backward)


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), backward)


def sigmoid(a):
    a = as_tensor(a)
    # split by sign so large |x| never overflows exp
    x = a.data
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)

    def backward(g):
        return (g * out * (1.0 - out),)

    return _make(out, (a,), backward)


def leaky_relu(a, alpha=0.2):
    a = as_tensor(a)
    x = a.data
    pos = x >= 0
    out = np.where(pos, x, alpha * x).astype(x.dtype, copy=False)

    def backward(g):
        return (np.where(pos, g, alpha * g),)

    return _make(out, (a,), backward)


def clamp_min(a, floor):
    """``max(a, floor)`` with zero gradient where the floor is active."""
    a = as_tensor(a)
    keep = a.data > floor
    out = np.where(keep, a.data, floor).astype(a.dtype, copy=False)

    def backward(g):
        return (g * keep,)

    return _make(out, (a,), backward)


# -- reductions --------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return tsum(a, axes, keepdims) * (1.0 / count)


def l1_norm(a, axis=None):
    return tsum(tabs(a), axis)


def frobenius_norm(a, axis=None):
    """``sqrt(sum(a**2))`` over ``axis``; gradient is zero where the norm is zero."""
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    out = np.sqrt((a.data * a.data).sum(axis=axes, keepdims=True))

    def backward(g):
        g = g.reshape(out.shape)
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * a.data / safe, 0.0),)

    return _make(out.reshape([n for i, n in enumerate(a.shape) if i not in axes]), (a,), backward)


def weight_norm(v, g, out_axis=0):
    """``g * v / ||v||`` with the norm over every axis except ``out_axis``.

    ``g`` holds one magnitude per slice along ``out_axis``; each slice of the
    result has L2 norm ``|g|``.
    """
    v, g = as_tensor(v), as_tensor(g)
    axes = tuple(i for i in range(v.ndim) if i != out_axis)
    shape = [1] * v.ndim
    shape[out_axis] = v.shape[out_axis]
    norm = np.sqrt((v.data * v.data).sum(axis=axes, keepdims=True))
    scale = g.data.reshape(shape) / norm
    out = v.data * scale

    def backward(gw):
        # d/dg = <gw, v>/||v||; d/dv = scale * (gw - v * <gw, v> / ||v||^2)
        dot = (gw * v.data).sum(axis=axes, keepdims=True)
        gg = (dot / norm).reshape(g.shape) if g.requires_grad else None
        gv = None
        if v.requires_grad:
            gv = gw * scale
            gv -= v.data * (scale * dot / (norm * norm))
        return gv, gg

    return _make(out, (v, g), backward)


# -- shape manipulation ------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)

    def backward(g):
        return (g.reshape(a.shape),)

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (g.transpose(inverse),)

    return _make(a.data.transpose(axes), (a,), backward)


def getitem(a, index):
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        if _fancy(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return _make(a.data[index], (a,), backward)


def _fancy(index):
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def repeat_frames(a, hop):
    """Nearest-neighbour upsample along the last axis (each step repeated ``hop`` times)."""
    a = as_tensor(a)

    def backward(g):
        return (g.reshape(*a.shape, hop).sum(axis=-1),)

    return _make(np.repeat(a.data, hop, axis=-1), (a,), backward)


_NP_PAD_MODES = {"zeros": "constant", "reflect": "reflect", "edge": "edge"}


def pad_last(a, left, right, mode="zeros"):
    """Pad the last axis with zeros, by reflection (edge sample not repeated), or by edge replication."""
    a = as_tensor(a)
    n = a.shape[-1]
    if mode not in _NP_PAD_MODES:
        raise ValueError(f"unknown pad mode {mode!r}")
    if mode == "reflect" and (left >= n or right >= n):
        raise DimensionError(f"reflect padding ({left}, {right}) needs more than {n} samples")
    widths = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    out = np.pad(a.data, widths, mode=_NP_PAD_MODES[mode])

    def backward(g):
        dx = g[..., left:left + n].copy()
        if mode == "reflect":
            if left:
                dx[..., 1:left + 1] += g[..., :left][..., ::-1]
            if right:
                dx[..., n - 1 - right:n - 1] += g[..., left + n:][..., ::-1]
        elif mode == "edge":
            if left:
                dx[..., 0] += g[..., :left].sum(axis=-1)
            if right:
                dx[..., n - 1] += g[..., left + n:].sum(axis=-1)
        return (dx,)

    return _make(out, (a,), backward)


def matmul(a, b):
    a, b, _ = _operands(a, b)

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return _make(np.matmul(a.data, b.data), (a, b), backward)


# -- convolutions ------------------------------------------------------------

def _batched_outer(a, b):
    """``sum_i a[i] @ b[i].T`` as plain GEMMs, avoiding transposed copies."""
    out = a[0] @ b[0].T
    for i in range(1, a.shape[0]):
        out += a[i] @ b[i].T
    return out


def _batched(x, ndim):
    if x.ndim == ndim:
        return x, False
    if x.ndim == ndim - 1:
        return reshape(x, (1,) + x.shape), True
    raise DimensionError(f"expected a {ndim - 1}-D or {ndim}-D input, got shape {x.shape}")


def _pad_pair(padding, k, dilation):
    if padding == "same":
        total = dilation * (k - 1)
        return total // 2, total - total // 2
    if isinstance(padding, int):
        return padding, padding
    left, right = padding
    return int(left), int(right)


def conv1d(x, w, b=None, stride=1, dilation=1, padding=0):
    """1-D cross-correlation of ``x[(B,) C_in, T]`` with ``w[C_out, C_in, K]``.

    ``padding`` is an int (both sides), a ``(left, right)`` pair, or ``"same"``
    (zeros, stride 1, output length equals input length).
    """
    x, w = as_tensor(x), as_tensor(w)
    if stride < 1 or dilation < 1:
        raise ValueError("stride and dilation must be >= 1")
    x, squeeze = _batched(x, 3)
    c_out, c_in, k = w.shape
    if x.shape[1] != c_in:
        raise DimensionError(f"input has {x.shape[1]} channels, kernel expects {c_in}")
    if padding == "same" and stride != 1:
        raise ValueError("'same' padding requires stride 1")
    left, right = _pad_pair(padding, k, dilation)
    bsz, _, t = x.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (left, right))) if left or right else x.data
    tp = t + left + right
    t_out = (tp - dilation * (k - 1) - 1) // stride + 1
    if t_out < 1:
        raise DimensionError(f"input of length {t} too short for kernel {k} dilation {dilation}")
    cols = kernels.im2col_1d(xp, k, dilation, stride, t_out)
    w2 = w.data.reshape(c_out, c_in * k)
    out = np.matmul(w2, cols)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out += b.data[:, None]
        parents.append(b)

    def backward(g):
        gw = _batched_outer(g, cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = np.matmul(w2.T, g)
            dxp = kernels.col2im_1d(dcols, tp, k, dilation, stride)
            gx = dxp[:, :, left:left + t]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    y = _make(out, parents, backward)
    return reshape(y, y.shape[1:]) if squeeze else y


def conv_transpose1d(x, w, b=None, stride=1, padding=0):
    """Transposed 1-D convolution; ``w`` is ``[C_in, C_out, K]``.

    Output length is ``(T - 1)*stride - 2*padding + K``.
    """
    x, w = as_tensor(x), as_tensor(w)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    x, squeeze = _batched(x, 3)
    c_in, c_out, k = w.shape
    if x.shape[1] != c_in:
        raise DimensionError(f"input has {x.shape[1]} channels, kernel expects {c_in}")
    left, right = _pad_pair(padding, k, 1)
    bsz, _, t = x.shape
    full = (t - 1) * stride + k
    t_out = full - left - right
    if t_out < 1:
        raise DimensionError("transposed convolution output would be empty")
    w2 = w.data.reshape(c_in, c_out * k)
    cols = np.matmul(w2.T, x.data)
    out = kernels.col2im_1d(cols, full, k, 1, stride)[:, :, left:full - right].copy()
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out += b.data[:, None]
        parents.append(b)

    def backward(g):
        g_full = np.zeros((bsz, c_out, full), dtype=g.dtype)
        g_full[:, :, left:full - right] = g
        dcols = kernels.im2col_1d(g_full, k, 1, stride, t)
        gx = np.matmul(w2, dcols) if x.requires_grad else None
        gw = _batched_outer(x.data, dcols).reshape(w.shape) if w.requires_grad else None
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2)))
        return grads

    y = _make(out, parents, backward)
    return reshape(y, y.shape[1:]) if squeeze else y


def conv2d(x, w, b=None, stride=(1, 1), padding=(0, 0)):
    """2-D cross-correlation of ``x[(B,) C_in, H, W]`` with ``w[C_out, C_in, kh, kw]``.

    ``padding`` is ``(ph, pw)`` zeros on both sides of each axis, or ``"same"``.
    """
    x, w = as_tensor(x), as_tensor(w)
    x, squeeze = _batched(x, 4)
    c_out, c_in, kh, kw = w.shape
    if x.shape[1] != c_in:
        raise DimensionError(f"input has {x.shape[1]} channels, kernel expects {c_in}")
    if isinstance(stride, int):
        stride = (stride, stride)
    sh, sw = stride
    if padding == "same":
        padding = ((kh - 1) // 2, (kw - 1) // 2)
    ph, pw = padding
    bsz, _, h, wd = x.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x.data
    hp, wp = h + 2 * ph, wd + 2 * pw
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"input {h}x{wd} too small for kernel {kh}x{kw}")
    cols = kernels.im2col_2d(xp, kh, kw, sh, sw, ho, wo)
    w2 = w.data.reshape(c_out, c_in * kh * kw)
    out = np.matmul(w2, cols).reshape(bsz, c_out, ho, wo)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out += b.data[:, None, None]
        parents.append(b)

    def backward(g):
        g2 = g.reshape(bsz, c_out, ho * wo)
        gw = _batched_outer(g2, cols).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            dcols = np.matmul(w2.T, g2)
            dxp = kernels.col2im_2d(dcols, hp, wp, kh, kw, sh, sw, ho, wo)
            gx = dxp[:, :, ph:ph + h, pw:pw + wd]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    y = _make(out, parents, backward)
    return reshape(y, y.shape[1:]) if squeeze else y


def location_variable_conv(x, w, bias, dilation=1, hop=1):
    """Convolution whose kernel changes every ``hop`` samples.

    Args:
        x: ``[B, C, T]`` input with ``T == F * hop``.
        w: ``[B, F, O, C, K]`` kernels, one set per frame.
        bias: ``[B, F, O]`` biases, one set per frame.

    Samples ``[f*hop, (f+1)*hop)`` of the output are a dilated, zero-"same"-padded
    correlation of ``x`` with ``w[:, f]``; windows near frame edges read samples
    of neighbouring frames.
    """
    from univnet.errors import AlignmentError

    x, w, bias = as_tensor(x), as_tensor(w), as_tensor(bias)
    bsz, c, t = x.shape
    _, n_frames, o, c_w, k = w.shape
    if c_w != c:
        raise DimensionError(f"kernels expect {c_w} input channels, got {c}")
    if t != n_frames * hop:
        raise AlignmentError(f"signal length {t} != {n_frames} frames x hop {hop}")
    if k % 2 != 1:
        raise ValueError("location-variable kernels must have odd size")
    pad = dilation * (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    w2 = w.data.reshape(bsz, n_frames, o, c * k)
    out = kernels.lvc_forward(xp, w2, bias.data, k, dilation, hop)

    def backward(g):
        dxp, dw, db = kernels.lvc_backward(xp, w2, g, k, dilation, hop)
        return dxp[:, :, pad:pad + t], dw.reshape(w.shape), db

    return _make(out, (x, w, bias), backward)


def stft_frames_magnitude(xp, n_fft, hop, window):
    """``|rfft(frame * window)|`` for frames of an already padded signal ``xp[B, L]``.

    ``window`` has length ``n_fft``. Result is ``[B, F, n_fft//2 + 1]`` with
    ``F = 1 + (L - n_fft) // hop``.
    """
    from numpy.lib.stride_tricks import as_strided

    xp = as_tensor(xp)
    bsz, length = xp.shape
    n_frames = 1 + (length - n_fft) // hop
    if n_frames < 1:
        raise DimensionError(f"signal of {length} samples shorter than n_fft={n_fft}")
    data = np.ascontiguousarray(xp.data)
    sb, st = data.strides
    frames = as_strided(data, (bsz, n_frames, n_fft), (sb, st * hop, st), writeable=False)
    window = np.asarray(window, dtype=data.dtype)
    spec = np.fft.rfft(frames * window, axis=-1)
    mag = np.abs(spec).astype(data.dtype)

    def backward(g):
        safe = np.where(mag > 0, mag, 1.0)
        gspec = np.where(mag > 0, g / safe, 0.0) * spec
        # adjoint of rfft over the kept half spectrum
        half = gspec.copy()
        half[..., 1:(n_fft + 1) // 2] *= 0.5
        dframes = (np.fft.irfft(half, n=n_fft, axis=-1) * n_fft).astype(data.dtype) * window
        return (kernels.overlap_add(dframes, hop, length),)

    return _make(mag, (xp,), backward)
