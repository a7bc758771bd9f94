"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Arrays come in C-contiguous and in a single floating dtype; results are new
arrays of that dtype.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def im2col_1d(x, k, dilation, stride, t_out):
    """Unfold ``x[B, C, Tp]`` into ``cols[B, C*k, t_out]``.

    ``cols[b, c*k + j, t] = x[b, c, t*stride + j*dilation]``.
    """
    b, c, _ = x.shape
    sb, sc, st = x.strides
    view = as_strided(x, (b, c, k, t_out), (sb, sc, st * dilation, st * stride), writeable=False)
    return np.ascontiguousarray(view).reshape(b, c * k, t_out)


def col2im_1d(cols, tp, k, dilation, stride):
    """Adjoint of :func:`im2col_1d`: scatter-add columns back to ``[B, C, tp]``."""
    b, ck, t_out = cols.shape
    c = ck // k
    out = np.zeros((b, c, tp), dtype=cols.dtype)
    cols = cols.reshape(b, c, k, t_out)
    span = stride * (t_out - 1) + 1
    for j in range(k):
        start = j * dilation
        out[:, :, start:start + span:stride] += cols[:, :, j, :]
    return out


def im2col_2d(x, kh, kw, sh, sw, ho, wo):
    """Unfold ``x[B, C, Hp, Wp]`` into ``cols[B, C*kh*kw, ho*wo]``."""
    b, c, _, _ = x.shape
    sb, sc, s_h, s_w = x.strides
    view = as_strided(
        x,
        (b, c, kh, kw, ho, wo),
        (sb, sc, s_h, s_w, s_h * sh, s_w * sw),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(b, c * kh * kw, ho * wo)


def col2im_2d(cols, hp, wp, kh, kw, sh, sw, ho, wo):
    b, ckk, _ = cols.shape
    c = ckk // (kh * kw)
    out = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(b, c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += cols[:, :, i, j]
    return out


def lvc_forward(xp, w, bias, k, dilation, hop):
    """Location-variable convolution.

    Args:
        xp: zero-padded input ``[B, C, F*hop + dilation*(k-1)]``.
        w: per-frame kernels ``[B, F, O, C*k]``.
        bias: per-frame biases ``[B, F, O]``.

    Returns:
        ``[B, O, F*hop]`` where samples of frame ``f`` use ``w[:, f]``.
    """
    bsz, n_frames, o, _ = w.shape
    t = n_frames * hop
    cols = im2col_1d(xp, k, dilation, 1, t)
    ck = cols.shape[1]
    cols = cols.reshape(bsz, ck, n_frames, hop).transpose(0, 2, 1, 3)
    y = np.matmul(w, cols) + bias[..., None]
    return np.ascontiguousarray(y.transpose(0, 2, 1, 3)).reshape(bsz, o, t)


def lvc_backward(xp, w, grad, k, dilation, hop):
    """Gradients of :func:`lvc_forward` w.r.t. ``xp``, ``w`` and ``bias``."""
    bsz, n_frames, o, ck = w.shape
    t = n_frames * hop
    cols = im2col_1d(xp, k, dilation, 1, t)
    cols = cols.reshape(bsz, ck, n_frames, hop).transpose(0, 2, 1, 3)
    g = grad.reshape(bsz, o, n_frames, hop).transpose(0, 2, 1, 3)
    dw = np.matmul(g, cols.transpose(0, 1, 3, 2))
    db = g.sum(axis=-1)
    dcols = np.matmul(w.transpose(0, 1, 3, 2), g)
    dcols = np.ascontiguousarray(dcols.transpose(0, 2, 1, 3)).reshape(bsz, ck, t)
    dxp = col2im_1d(dcols, xp.shape[2], k, dilation, 1)
    return dxp, np.ascontiguousarray(dw), np.ascontiguousarray(db)


def overlap_add(frames, hop, length):
    """Sum ``frames[B, F, N]`` into a ``[B, length]`` signal at offsets ``f*hop``."""
    bsz, n_frames, n = frames.shape
    out = np.zeros((bsz, length), dtype=frames.dtype)
    for f in range(n_frames):
        out[:, f * hop:f * hop + n] += frames[:, f]
    return out
