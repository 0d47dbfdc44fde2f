"""Numba inner loops for the convolution/normalization hot paths.

All loops are explicit (no array temporaries), iteration order is fixed, and
fastmath is off, so results are bitwise deterministic. Parallelism is over
slices that never share output elements.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, fastmath=False, cache=True)
def depthwise_forward(xp, w, stride, out):
    """out[n,c] = cross-correlation of padded xp[n,c] with w[c]."""
    n_, c_, ho, wo = out.shape
    kh, kw = w.shape[1], w.shape[2]
    for nc in prange(n_ * c_):
        n = nc // c_
        c = nc % c_
        row = np.empty(wo)
        for y in range(ho):
            yy = y * stride
            for v in range(wo):
                row[v] = 0.0
            for i in range(kh):
                xr = xp[n, c, yy + i]
                for j in range(kw):
                    wv = w[c, i, j]
                    for v in range(wo):
                        row[v] += xr[j + v * stride] * wv
            for v in range(wo):
                out[n, c, y, v] = row[v]


@njit(parallel=True, fastmath=False, cache=True)
def depthwise_grad_w(g, xp, stride, gw):
    """gw[c,i,j] = sum over batch and output positions of g * shifted input.

    Accumulates lane-wise over the output row (independent writes, so the
    loop vectorizes without float reassociation) and reduces each lane
    buffer once at the end in a fixed order.
    """
    n_, c_, ho, wo = g.shape
    kh, kw = gw.shape[1], gw.shape[2]
    for c in prange(c_):
        vacc = np.zeros((kh, kw, wo))
        for n in range(n_):
            for y in range(ho):
                grow = g[n, c, y]
                yy = y * stride
                for i in range(kh):
                    xr = xp[n, c, yy + i]
                    for j in range(kw):
                        lane = vacc[i, j]
                        for v in range(wo):
                            lane[v] += grow[v] * xr[j + v * stride]
        for i in range(kh):
            for j in range(kw):
                s = 0.0
                for v in range(wo):
                    s += vacc[i, j, v]
                gw[c, i, j] = s


@njit(parallel=True, fastmath=False, cache=True)
def bn_forward(x, gamma, mu, inv_std, xhat, out):
    """One fused pass producing the normalized activations and the output."""
    n_, c_, h_, w_ = x.shape
    for nc in prange(n_ * c_):
        n = nc // c_
        c = nc % c_
        m = mu[c]
        s = inv_std[c]
        gm = gamma[c]
        for y in range(h_):
            for v in range(w_):
                xh = (x[n, c, y, v] - m) * s
                xhat[n, c, y, v] = xh
                out[n, c, y, v] = xh * gm


@njit(parallel=True, fastmath=False, cache=True)
def bn_backward_train(g, xhat, gamma, mean_g, mean_gx, inv_std, gx):
    """gx = (g*gamma - mean_g - xhat*mean_gx) * inv_std, per channel."""
    n_, c_, h_, w_ = g.shape
    for nc in prange(n_ * c_):
        n = nc // c_
        c = nc % c_
        gm = gamma[c]
        mg = mean_g[c]
        mgx = mean_gx[c]
        s = inv_std[c]
        for y in range(h_):
            for v in range(w_):
                gx[n, c, y, v] = (g[n, c, y, v] * gm - mg - xhat[n, c, y, v] * mgx) * s
