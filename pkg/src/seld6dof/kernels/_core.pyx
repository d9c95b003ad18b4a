# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution kernels (direct loops, no im2col materialization).

Same signatures and layout conventions as seld6dof.kernels._numpy.
"""

import numpy as np

BACKEND = "cython"


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] w, double[::1] b,
                   Py_ssize_t pad_t, Py_ssize_t pad_f):
    cdef Py_ssize_t T = x.shape[0], Ci = x.shape[1], F = x.shape[2]
    cdef Py_ssize_t Co = w.shape[0], kt = w.shape[2], kf = w.shape[3]
    cdef Py_ssize_t t_out = T + pad_t - kt + 1
    cdef Py_ssize_t f_out = F + 2 * pad_f - kf + 1
    out = np.empty((t_out, Co, f_out))
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t t, co, ci, dt, df, f, ti, f0, f1, off
    cdef double wv
    with nogil:
        for t in range(t_out):
            for co in range(Co):
                for f in range(f_out):
                    y[t, co, f] = b[co]
            for dt in range(kt):
                ti = t - pad_t + dt
                if ti < 0 or ti >= T:
                    continue
                for co in range(Co):
                    for ci in range(Ci):
                        for df in range(kf):
                            wv = w[co, ci, dt, df]
                            off = df - pad_f
                            f0 = -off if off < 0 else 0
                            f1 = F - off
                            if f1 > f_out:
                                f1 = f_out
                            for f in range(f0, f1):
                                y[t, co, f] += wv * x[ti, ci, f + off]
    return out


def conv2d_backward(double[:, :, ::1] x, double[:, :, :, ::1] w,
                    double[:, :, ::1] dy, Py_ssize_t pad_t, Py_ssize_t pad_f,
                    bint need_dx=True):
    cdef Py_ssize_t T = x.shape[0], Ci = x.shape[1], F = x.shape[2]
    cdef Py_ssize_t Co = w.shape[0], kt = w.shape[2], kf = w.shape[3]
    cdef Py_ssize_t t_out = dy.shape[0], f_out = dy.shape[2]
    dw_arr = np.zeros((Co, Ci, kt, kf))
    db_arr = np.zeros(Co)
    dx_arr = np.zeros((T, Ci, F)) if need_dx else None
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double[:, :, ::1] dx
    if need_dx:
        dx = dx_arr
    cdef Py_ssize_t t, co, ci, dt, df, f, ti, f0, f1, off
    cdef double acc, gv
    with nogil:
        for t in range(t_out):
            for co in range(Co):
                acc = 0.0
                for f in range(f_out):
                    acc += dy[t, co, f]
                db[co] += acc
            for dt in range(kt):
                ti = t - pad_t + dt
                if ti < 0 or ti >= T:
                    continue
                for co in range(Co):
                    for ci in range(Ci):
                        for df in range(kf):
                            off = df - pad_f
                            f0 = -off if off < 0 else 0
                            f1 = F - off
                            if f1 > f_out:
                                f1 = f_out
                            acc = 0.0
                            for f in range(f0, f1):
                                acc += dy[t, co, f] * x[ti, ci, f + off]
                            dw[co, ci, dt, df] += acc
        if need_dx:
            for t in range(t_out):
                for dt in range(kt):
                    ti = t - pad_t + dt
                    if ti < 0 or ti >= T:
                        continue
                    for co in range(Co):
                        for ci in range(Ci):
                            for df in range(kf):
                                gv = w[co, ci, dt, df]
                                off = df - pad_f
                                f0 = -off if off < 0 else 0
                                f1 = F - off
                                if f1 > f_out:
                                    f1 = f_out
                                for f in range(f0, f1):
                                    dx[ti, ci, f + off] += gv * dy[t, co, f]
    return dx_arr, dw_arr, db_arr


def conv1d_forward(double[:, ::1] x, double[:, :, ::1] w, double[::1] b,
                   Py_ssize_t pad_left):
    cdef Py_ssize_t T = x.shape[0], Ci = x.shape[1]
    cdef Py_ssize_t Co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t t_out = T + pad_left - k + 1
    out = np.empty((t_out, Co))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t t, co, ci, dk, ti
    cdef double acc
    with nogil:
        for t in range(t_out):
            for co in range(Co):
                acc = b[co]
                for dk in range(k):
                    ti = t - pad_left + dk
                    if ti < 0 or ti >= T:
                        continue
                    for ci in range(Ci):
                        acc += w[co, ci, dk] * x[ti, ci]
                y[t, co] = acc
    return out


def conv1d_backward(double[:, ::1] x, double[:, :, ::1] w, double[:, ::1] dy,
                    Py_ssize_t pad_left, bint need_dx=True):
    cdef Py_ssize_t T = x.shape[0], Ci = x.shape[1]
    cdef Py_ssize_t Co = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t t_out = dy.shape[0]
    dw_arr = np.zeros((Co, Ci, k))
    db_arr = np.zeros(Co)
    dx_arr = np.zeros((T, Ci)) if need_dx else None
    cdef double[:, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dx
    if need_dx:
        dx = dx_arr
    cdef Py_ssize_t t, co, ci, dk, ti
    cdef double g
    with nogil:
        for t in range(t_out):
            for co in range(Co):
                g = dy[t, co]
                db[co] += g
                for dk in range(k):
                    ti = t - pad_left + dk
                    if ti < 0 or ti >= T:
                        continue
                    for ci in range(Ci):
                        dw[co, ci, dk] += g * x[ti, ci]
                        if need_dx:
                            dx[ti, ci] += g * w[co, ci, dk]
    return dx_arr, dw_arr, db_arr
