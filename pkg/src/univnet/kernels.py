"""Hot-kernel dispatch.

The compiled extension ``univnet._ckernels`` is used when it imports; the
numpy twin in ``univnet._pykernels`` is the fallback. Set
``UNIVNET_KERNELS=python`` to force the fallback, or call :func:`use_backend`.

Under the compiled backend only the kernels where the extension measurably
wins (``benchmarks/bench_kernels.py``) are routed to it. The 1-D im2col/col2im
and the LVC kernels stay on numpy, whose strided copies and batched GEMM
outrun the scalar loops.
"""

import os

import numpy as np

from univnet import _pykernels

try:
    from univnet import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

COMPILED_KERNELS = ("im2col_2d", "col2im_2d", "overlap_add")


class _Routed:
    """Per-kernel routing: the listed names come from ``fast``, the rest from ``base``."""

    def __init__(self, fast, base, names):
        for name in ("im2col_1d", "col2im_1d", "im2col_2d", "col2im_2d",
                     "lvc_forward", "lvc_backward", "overlap_add"):
            setattr(self, name, getattr(fast if name in names else base, name))


_impl = _pykernels
backend = "python"


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select ``"compiled"`` or ``"python"`` kernels process-wide."""
    global _impl, backend
    if name not in _BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available_backends()}")
    _impl = _pykernels if name == "python" else _Routed(_ckernels, _pykernels, COMPILED_KERNELS)
    backend = name


_requested = os.environ.get("UNIVNET_KERNELS", "").strip().lower()
if _requested:
    use_backend(_requested)
elif _ckernels is not None:
    use_backend("compiled")


def _c(a):
    return np.ascontiguousarray(a)


def im2col_1d(x, k, dilation=1, stride=1, t_out=None):
    if t_out is None:
        t_out = (x.shape[2] - dilation * (k - 1) - 1) // stride + 1
    return _impl.im2col_1d(_c(x), k, dilation, stride, t_out)


def col2im_1d(cols, tp, k, dilation=1, stride=1):
    return _impl.col2im_1d(_c(cols), tp, k, dilation, stride)


def im2col_2d(x, kh, kw, sh, sw, ho, wo):
    return _impl.im2col_2d(_c(x), kh, kw, sh, sw, ho, wo)


def col2im_2d(cols, hp, wp, kh, kw, sh, sw, ho, wo):
    return _impl.col2im_2d(_c(cols), hp, wp, kh, kw, sh, sw, ho, wo)


def lvc_forward(xp, w, bias, k, dilation, hop):
    return _impl.lvc_forward(_c(xp), _c(w), _c(bias), k, dilation, hop)


def lvc_backward(xp, w, grad, k, dilation, hop):
    return _impl.lvc_backward(_c(xp), _c(w), _c(grad), k, dilation, hop)


def overlap_add(frames, hop, length):
    return _impl.overlap_add(_c(frames), hop, length)
