"""Parameter containers and weight-normalized layers."""

import math

import numpy as np

from univnet import tensor as T
from univnet.tensor import Tensor


class Parameter(Tensor):
    """Leaf tensor that always requires grad."""

    __slots__ = ()

    def __init__(self, data, name=None):
        super().__init__(np.array(data, dtype=T.get_default_dtype()), requires_grad=True, name=name)


class Module:
    """Base class; parameters and submodules are discovered from attributes.

    Attribute order is registration order, which fixes the parameter naming
    used by checkpoints.
    """

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag=True):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)


def _uniform(rng, shape, bound):
    return rng.uniform(-bound, bound, size=shape)


class _WeightNormed(Module):
    """Holds direction ``v``, per-output-channel magnitude ``g`` and a bias.

    The effective kernel is ``g * v / ||v||`` with the norm taken over every
    axis except ``out_axis``; ``g`` starts at ``||v||`` so the initial
    effective kernel equals ``v``.
    """

    out_axis = 0

    def _init_params(self, rng, shape, fan_in, n_out, bias):
        bound = 1.0 / math.sqrt(fan_in)
        v = _uniform(rng, shape, bound)
        self.v = Parameter(v)
        self.g = Parameter(self._norm(v).reshape(n_out))
        self.bias = Parameter(_uniform(rng, (n_out,), bound)) if bias else None

    def _reduce_axes(self):
        return tuple(i for i in range(self.v.ndim) if i != self.out_axis)

    def _norm(self, v):
        axes = tuple(i for i in range(v.ndim) if i != self.out_axis)
        return np.sqrt((v * v).sum(axis=axes))

    def _g_shape(self):
        shape = [1] * self.v.ndim
        shape[self.out_axis] = self.v.shape[self.out_axis]
        return shape

    @property
    def weight(self):
        return T.weight_norm(self.v, self.g, self.out_axis)

    def effective_weight(self):
        """The kernel as a plain array (no graph)."""
        with T.no_grad():
            return self.weight.data


class Conv1d(_WeightNormed):
    """``pad_mode`` ``"edge"`` replicates border samples instead of zero padding."""

    def __init__(self, c_in, c_out, kernel_size, rng, stride=1, dilation=1, padding="same",
                 bias=True, pad_mode="zeros"):
        self.stride = stride
        self.dilation = dilation
        self.padding = padding
        self.pad_mode = pad_mode
        self._init_params(rng, (c_out, c_in, kernel_size), c_in * kernel_size, c_out, bias)

    def forward(self, x):
        if self.pad_mode == "zeros":
            return T.conv1d(x, self.weight, self.bias, self.stride, self.dilation, self.padding)
        left, right = T._pad_pair(self.padding, self.v.shape[2], self.dilation)
        x = T.pad_last(x, left, right, self.pad_mode)
        return T.conv1d(x, self.weight, self.bias, self.stride, self.dilation, 0)


class ConvTranspose1d(_WeightNormed):
    """Upsampling layer; weight is ``[C_in, C_out, K]``."""

    out_axis = 1

    def __init__(self, c_in, c_out, kernel_size, rng, stride=1, padding=0, bias=True):
        self.stride = stride
        self.padding = padding
        self._init_params(rng, (c_in, c_out, kernel_size), c_in * kernel_size // max(stride, 1), c_out, bias)

    def forward(self, x):
        return T.conv_transpose1d(x, self.weight, self.bias, self.stride, self.padding)


class Conv2d(_WeightNormed):
    def __init__(self, c_in, c_out, kernel_size, rng, stride=(1, 1), padding=(0, 0), bias=True):
        kh, kw = kernel_size
        self.stride = stride
        self.padding = padding
        self._init_params(rng, (c_out, c_in, kh, kw), c_in * kh * kw, c_out, bias)

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)
