"""Pure-numpy convolution kernels (im2col + BLAS matmul).

Fallback backend used when the compiled extension is unavailable or when
forced via SELD6DOF_KERNELS=numpy. Same call signatures and semantics as
seld6dof.kernels._core.

Layout conventions:
  conv2d: x (T, Ci, F), w (Co, Ci, kt, kf), y (T_out, Co, F_out)
          time axis padded with pad_t zeros at the FRONT only (causal),
          frequency axis padded with pad_f zeros on both sides.
  conv1d: x (T, Ci), w (Co, Ci, k), y (T_out, Co), pad_left zeros in front.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def conv2d_forward(x, w, b, pad_t, pad_f):
    T, Ci, F = x.shape
    Co, _, kt, kf = w.shape
    t_out = T + pad_t - kt + 1
    f_out = F + 2 * pad_f - kf + 1
    xp = np.pad(x, ((pad_t, 0), (0, 0), (pad_f, pad_f)))
    win = sliding_window_view(xp, (kt, kf), axis=(0, 2))  # (t_out, Ci, f_out, kt, kf)
    cols = win.transpose(0, 2, 1, 3, 4).reshape(t_out * f_out, Ci * kt * kf)
    y = cols @ w.reshape(Co, -1).T + b
    return np.ascontiguousarray(y.reshape(t_out, f_out, Co).transpose(0, 2, 1))


def conv2d_backward(x, w, dy, pad_t, pad_f, need_dx=True):
    T, Ci, F = x.shape
    Co, _, kt, kf = w.shape
    t_out, _, f_out = dy.shape
    xp = np.pad(x, ((pad_t, 0), (0, 0), (pad_f, pad_f)))
    win = sliding_window_view(xp, (kt, kf), axis=(0, 2))
    cols = win.transpose(0, 2, 1, 3, 4).reshape(t_out * f_out, Ci * kt * kf)
    dy_mat = dy.transpose(0, 2, 1).reshape(t_out * f_out, Co)
    dw = (dy_mat.T @ cols).reshape(Co, Ci, kt, kf)
    db = dy.sum(axis=(0, 2))
    dx = None
    if need_dx:
        # dL/dx is the full correlation of dy with the flipped kernels.
        dyp = np.pad(dy, ((kt - 1, kt - 1), (0, 0), (kf - 1, kf - 1)))
        wflip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        dwin = sliding_window_view(dyp, (kt, kf), axis=(0, 2))
        tp, fp = T + pad_t, F + 2 * pad_f
        dcols = dwin.transpose(0, 2, 1, 3, 4).reshape(tp * fp, Co * kt * kf)
        dxp = (dcols @ wflip.reshape(Ci, -1).T).reshape(tp, fp, Ci).transpose(0, 2, 1)
        dx = np.ascontiguousarray(dxp[pad_t:, :, pad_f:pad_f + F])
    return dx, dw, db


def conv1d_forward(x, w, b, pad_left):
    T, Ci = x.shape
    Co, _, k = w.shape
    t_out = T + pad_left - k + 1
    xp = np.pad(x, ((pad_left, 0), (0, 0)))
    win = sliding_window_view(xp, k, axis=0)  # (t_out, Ci, k)
    cols = win.reshape(t_out, Ci * k)
    return cols @ w.reshape(Co, -1).T + b


def conv1d_backward(x, w, dy, pad_left, need_dx=True):
    T, Ci = x.shape
    Co, _, k = w.shape
    t_out = dy.shape[0]
    xp = np.pad(x, ((pad_left, 0), (0, 0)))
    win = sliding_window_view(xp, k, axis=0)
    cols = win.reshape(t_out, Ci * k)
    dw = (dy.T @ cols).reshape(Co, Ci, k)
    db = dy.sum(axis=0)
    dx = None
    if need_dx:
        dyp = np.pad(dy, ((k - 1, k - 1), (0, 0)))
        wflip = np.ascontiguousarray(w[:, :, ::-1].transpose(1, 0, 2))
        dwin = sliding_window_view(dyp, k, axis=0)  # (T+pad_left, Co, k)
        dcols = dwin.reshape(T + pad_left, Co * k)
        dx = np.ascontiguousarray((dcols @ wflip.reshape(Ci, -1).T)[pad_left:])
    return dx, dw, db
