# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; same contracts as ``univnet._pykernels``."""

import numpy as np
cimport cython
from cython cimport floating


def im2col_1d(floating[:, :, ::1] x, Py_ssize_t k, Py_ssize_t dilation,
              Py_ssize_t stride, Py_ssize_t t_out):
    cdef Py_ssize_t bsz = x.shape[0], c = x.shape[1]
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((bsz, c * k, t_out), dtype=dtype)
    cdef floating[:, :, ::1] o = out
    cdef Py_ssize_t b, ci, j, t, off
    with nogil:
        for b in range(bsz):
            for ci in range(c):
                for j in range(k):
                    off = j * dilation
                    if stride == 1:
                        for t in range(t_out):
                            o[b, ci * k + j, t] = x[b, ci, off + t]
                    else:
                        for t in range(t_out):
                            o[b, ci * k + j, t] = x[b, ci, off + t * stride]
    return out


def col2im_1d(floating[:, :, ::1] cols, Py_ssize_t tp, Py_ssize_t k,
              Py_ssize_t dilation, Py_ssize_t stride):
    cdef Py_ssize_t bsz = cols.shape[0], c = cols.shape[1] // k, t_out = cols.shape[2]
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((bsz, c, tp), dtype=dtype)
    cdef floating[:, :, ::1] o = out
    cdef Py_ssize_t b, ci, j, t, off
    with nogil:
        for b in range(bsz):
            for ci in range(c):
                for j in range(k):
                    off = j * dilation
                    for t in range(t_out):
                        o[b, ci, off + t * stride] += cols[b, ci * k + j, t]
    return out


def im2col_2d(floating[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
              Py_ssize_t sh, Py_ssize_t sw, Py_ssize_t ho, Py_ssize_t wo):
    cdef Py_ssize_t bsz = x.shape[0], c = x.shape[1]
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((bsz, c * kh * kw, ho * wo), dtype=dtype)
    cdef floating[:, :, ::1] o = out
    cdef Py_ssize_t b, ci, i, j, r, q, row
    with nogil:
        for b in range(bsz):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for r in range(ho):
                            for q in range(wo):
                                o[b, row, r * wo + q] = x[b, ci, r * sh + i, q * sw + j]
    return out


def col2im_2d(floating[:, :, ::1] cols, Py_ssize_t hp, Py_ssize_t wp,
              Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
              Py_ssize_t ho, Py_ssize_t wo):
    cdef Py_ssize_t bsz = cols.shape[0], c = cols.shape[1] // (kh * kw)
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((bsz, c, hp, wp), dtype=dtype)
    cdef floating[:, :, :, ::1] o = out
    cdef Py_ssize_t b, ci, i, j, r, q, row
    with nogil:
        for b in range(bsz):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for r in range(ho):
                            for q in range(wo):
                                o[b, ci, r * sh + i, q * sw + j] += cols[b, row, r * wo + q]
    return out


def lvc_forward(floating[:, :, ::1] xp, floating[:, :, :, ::1] w,
                floating[:, :, ::1] bias, Py_ssize_t k, Py_ssize_t dilation,
                Py_ssize_t hop):
    cdef Py_ssize_t bsz = w.shape[0], n_frames = w.shape[1], n_out = w.shape[2]
    cdef Py_ssize_t c = xp.shape[1]
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((bsz, n_out, n_frames * hop), dtype=dtype)
    cdef floating[:, :, ::1] y = out
    cdef Py_ssize_t b, f, o, ci, j, n, base, off
    cdef floating wv, bv
    with nogil:
        for b in range(bsz):
            for f in range(n_frames):
                base = f * hop
                for o in range(n_out):
                    bv = bias[b, f, o]
                    for n in range(hop):
                        y[b, o, base + n] = bv
                    for ci in range(c):
                        for j in range(k):
                            wv = w[b, f, o, ci * k + j]
                            off = base + j * dilation
                            for n in range(hop):
                                y[b, o, base + n] += wv * xp[b, ci, off + n]
    return out


def lvc_backward(floating[:, :, ::1] xp, floating[:, :, :, ::1] w,
                 floating[:, :, ::1] grad, Py_ssize_t k, Py_ssize_t dilation,
                 Py_ssize_t hop):
    cdef Py_ssize_t bsz = w.shape[0], n_frames = w.shape[1], n_out = w.shape[2]
    cdef Py_ssize_t c = xp.shape[1], ck = w.shape[3]
    dtype = np.float32 if floating is float else np.float64
    dxp_arr = np.zeros((bsz, c, xp.shape[2]), dtype=dtype)
    dw_arr = np.empty((bsz, n_frames, n_out, ck), dtype=dtype)
    db_arr = np.empty((bsz, n_frames, n_out), dtype=dtype)
    cdef floating[:, :, ::1] dxp = dxp_arr
    cdef floating[:, :, :, ::1] dw = dw_arr
    cdef floating[:, :, ::1] db = db_arr
    cdef Py_ssize_t b, f, o, ci, j, n, base, off
    cdef floating acc, wv, gv
    with nogil:
        for b in range(bsz):
            for f in range(n_frames):
                base = f * hop
                for o in range(n_out):
                    acc = 0
                    for n in range(hop):
                        acc = acc + grad[b, o, base + n]
                    db[b, f, o] = acc
                    for ci in range(c):
                        for j in range(k):
                            off = base + j * dilation
                            acc = 0
                            for n in range(hop):
                                acc = acc + grad[b, o, base + n] * xp[b, ci, off + n]
                            dw[b, f, o, ci * k + j] = acc
                            wv = w[b, f, o, ci * k + j]
                            for n in range(hop):
                                dxp[b, ci, off + n] += wv * grad[b, o, base + n]
    return dxp_arr, dw_arr, db_arr


def overlap_add(floating[:, :, ::1] frames, Py_ssize_t hop, Py_ssize_t length):
    cdef Py_ssize_t bsz = frames.shape[0], n_frames = frames.shape[1], n = frames.shape[2]
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((bsz, length), dtype=dtype)
    cdef floating[:, ::1] o = out
    cdef Py_ssize_t b, f, i
    with nogil:
        for b in range(bsz):
            for f in range(n_frames):
                for i in range(n):
                    o[b, f * hop + i] += frames[b, f, i]
    return out
