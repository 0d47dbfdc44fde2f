"""Independent reference implementations used only to check the library.

Everything in here is deliberately naive (loop nests, dense solves,
brute-force enumeration) and shares no code with the paths under test.
"""

import numpy as np


def pad_same(x, kh, kw, stride):
    """Symmetric zero padding, extra pixel bottom/right when odd."""
    n, c, h, w = x.shape
    ho = -(-h // stride)
    wo = -(-w // stride)
    th = max((ho - 1) * stride + kh - h, 0)
    tw = max((wo - 1) * stride + kw - w, 0)
    return np.pad(x, ((0, 0), (0, 0), (th // 2, th - th // 2), (tw // 2, tw - tw // 2))), ho, wo


def conv2d_loops(x, w, stride=1, padding="same"):
    """Direct 6-loop cross-correlation oracle."""
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    assert ci == c
    if padding == "same":
        xp, ho, wo = pad_same(x, kh, kw, stride)
    else:
        xp = x
        ho = (h - kh) // stride + 1
        wo = (wd - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0
                    for ci_ in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[ni, ci_, y * stride + i, xx * stride + j] * w[oi, ci_, i, j]
                    out[ni, oi, y, xx] = acc
    return out


def depthwise_conv2d_loops(x, w, stride=1, padding="same"):
    """Direct 5-loop per-channel cross-correlation oracle; w is (C,1,kh,kw)."""
    n, c, h, wd = x.shape
    kh, kw = w.shape[2:]
    if padding == "same":
        xp, ho, wo = pad_same(x, kh, kw, stride)
    else:
        xp = x
        ho = (h - kh) // stride + 1
        wo = (wd - kw) // stride + 1
    out = np.zeros((n, c, ho, wo))
    for ni in range(n):
        for ci_ in range(c):
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0
                    for i in range(kh):
                        for j in range(kw):
                            acc += xp[ni, ci_, y * stride + i, xx * stride + j] * w[ci_, 0, i, j]
                    out[ni, ci_, y, xx] = acc
    return out


def finite_diff(f, arrays, h=1e-5):
    """Central finite differences of scalar f(*arrays) w.r.t. each array."""
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a, dtype=np.float64)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(*arrays)
            flat[i] = orig - h
            fm = f(*arrays)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def rel_err(analytic, numeric):
    """Max-norm relative error between two gradient arrays."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.max(np.abs(numeric)), 1e-8)
    return np.max(np.abs(analytic - numeric)) / denom
