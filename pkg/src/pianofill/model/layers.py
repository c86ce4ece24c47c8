"""Functional building blocks with explicit forward caches and backward passes.

Parameters are plain numpy arrays owned by a flat name->array dict; each
``*_fwd`` returns (output, cache) and the matching ``*_bwd`` consumes the
upstream gradient plus the cache and returns input gradients and a
{name: grad} dict fragment.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
GATE_BIAS_INIT = 3.0  # keep-gate starts ~0.95 open: near-identity residual merge


# -- layer norm -------------------------------------------------------------

def layer_norm_fwd(x, gamma, beta):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_bwd(dy, cache):
    xhat, inv, gamma = cache
    dxhat = dy * gamma
    m1 = dxhat.mean(-1, keepdims=True)
    m2 = (dxhat * xhat).mean(-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    axes = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axes), dy.sum(axes)


# -- affine -----------------------------------------------------------------

def linear_fwd(x, w, b=None):
    y = x @ w
    if b is not None:
        y = y + b
    return y, x


def linear_bwd(dy, x, w, with_bias=True):
    dx = dy @ w.T
    flat_x = x.reshape(-1, x.shape[-1])
    flat_dy = dy.reshape(-1, dy.shape[-1])
    dw = flat_x.T @ flat_dy
    db = flat_dy.sum(0) if with_bias else None
    return dx, dw, db


# -- activations ------------------------------------------------------------

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu_fwd(x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * cdf, (x, cdf)


def gelu_bwd(dy, cache):
    x, cdf = cache
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return dy * (cdf + x * pdf)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- GRU-style gated residual merge ------------------------------------------

GATE_PARAM_NAMES = ("wz", "uz", "bz", "wr", "ur", "br", "wn", "un", "bn")


def gru_gate_fwd(h, y, p, prefix):
    """Merge the residual stream ``h`` with a sublayer output ``y``.

    GRU cell with ``h`` as the hidden state and ``y`` as the input:
    out = z*h + (1-z)*n.  The keep-gate bias starts positive so the block
    is near-identity at initialization.
    """
    wz, uz, bz = p[prefix + "wz"], p[prefix + "uz"], p[prefix + "bz"]
    wr, ur, br = p[prefix + "wr"], p[prefix + "ur"], p[prefix + "br"]
    wn, un, bn = p[prefix + "wn"], p[prefix + "un"], p[prefix + "bn"]
    z = _sigmoid(y @ wz + h @ uz + bz)
    r = _sigmoid(y @ wr + h @ ur + br)
    rh = r * h
    n = np.tanh(y @ wn + rh @ un + bn)
    out = z * h + (1.0 - z) * n
    return out, (h, y, z, r, rh, n)


def gru_gate_bwd(dout, cache, p, prefix):
    h, y, z, r, rh, n = cache
    wz, uz = p[prefix + "wz"], p[prefix + "uz"]
    wr, ur = p[prefix + "wr"], p[prefix + "ur"]
    wn, un = p[prefix + "wn"], p[prefix + "un"]

    dz = dout * (h - n)
    dn = dout * (1.0 - z)
    dh = dout * z

    dan = dn * (1.0 - n * n)
    daz = dz * z * (1.0 - z)

    drh = dan @ un.T
    dr = drh * h
    dh = dh + drh * r
    dar = dr * r * (1.0 - r)

    dy = dan @ wn.T + daz @ wz.T + dar @ wr.T
    dh = dh + daz @ uz.T + dar @ ur.T

    def wgrad(a, d):
        return a.reshape(-1, a.shape[-1]).T @ d.reshape(-1, d.shape[-1])

    axes = tuple(range(dout.ndim - 1))
    grads = {
        prefix + "wz": wgrad(y, daz), prefix + "uz": wgrad(h, daz),
        prefix + "bz": daz.sum(axes),
        prefix + "wr": wgrad(y, dar), prefix + "ur": wgrad(h, dar),
        prefix + "br": dar.sum(axes),
        prefix + "wn": wgrad(y, dan), prefix + "un": wgrad(rh, dan),
        prefix + "bn": dan.sum(axes),
    }
    return dh, dy, grads


# -- dropout ------------------------------------------------------------------

def dropout_fwd(x, rate, rng, train):
    if not train or rate <= 0.0:
        return x, None
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
    return x * mask, mask


def dropout_bwd(dy, mask):
    return dy if mask is None else dy * mask
