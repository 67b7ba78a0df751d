"""Elementwise and per-timestep layers with their analytic backward passes.

All arrays are float64; sequences are laid out ``(batch, time, channels)``.
"""

import numpy as np

from ..errors import NonPositiveTemperature, ShapeMismatch


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def h_swish(x):
    x = np.asarray(x, dtype=np.float64)
    return x * np.clip(x + 3.0, 0.0, 6.0) / 6.0


def h_swish_grad(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < -3.0, 0.0, np.where(x > 3.0, 1.0, (2.0 * x + 3.0) / 6.0))


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalise over the last axis (population variance), then scale/shift."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ShapeMismatch("layer_norm needs at least two channels")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + eps)
    return xhat * gain + bias


def layer_norm_forward(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat * gain + bias, (xhat, inv)


def layer_norm_backward(dy, cache, gain):
    xhat, inv = cache
    d = dy.shape[-1]
    dgain = (dy * xhat).reshape(-1, d).sum(axis=0)
    dbias = dy.reshape(-1, d).sum(axis=0)
    dxhat = dy * gain
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain, dbias


def temperature_softmax(logits, temperature=1.0):
    """Row-wise softmax of ``logits / temperature`` (last axis)."""
    if not temperature > 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# -- frequency-domain gating -------------------------------------------------
#
# Per channel, the lowest K real-DFT bins along time are rescaled by
# sigmoid(gate) and the result is written as a residual update:
#     y = h + irfft((sigmoid(g) - 1) * rfft(h)[:K])
# so a unit gate leaves the sequence untouched.

def kept_bins(T, K):
    return min(K, T // 2 + 1)


def _bin_weights(T, k):
    w = np.full(k, 2.0)
    w[0] = 1.0
    if T % 2 == 0 and k == T // 2 + 1:
        w[-1] = 1.0
    return w / T


def _spectral_apply(x, m):
    """``irfft(m * rfft(x)[:k])`` along axis 1 with m of shape (k, D)."""
    T = x.shape[1]
    k = m.shape[0]
    F = np.fft.rfft(x, axis=1)
    G = np.zeros_like(F)
    G[:, :k, :] = F[:, :k, :] * m[None, :, :]
    return np.fft.irfft(G, n=T, axis=1), F


def frequency_enhance(h, gate_params):
    """Spectral gating with residual; ``h`` is ``(T, D)`` or ``(B, T, D)``."""
    y, _ = frequency_enhance_forward(h, gate_params)
    return y


def frequency_enhance_forward(h, gate_params):
    h = np.asarray(h, dtype=np.float64)
    squeeze = h.ndim == 2
    if squeeze:
        h = h[None]
    B, T, D = h.shape
    if T < 2:
        raise ShapeMismatch("frequency_enhance needs at least two time steps")
    g = np.asarray(gate_params, dtype=np.float64)
    if g.ndim != 2 or g.shape[1] != D:
        raise ShapeMismatch(f"gate params {g.shape} do not match {D} channels")
    k = kept_bins(T, g.shape[0])
    s = sigmoid(g[:k])
    branch, F = _spectral_apply(h, s - 1.0)
    y = h + branch
    cache = (F, s, k, T, squeeze, g.shape[0])
    return (y[0] if squeeze else y), cache


def frequency_enhance_backward(dy, cache):
    F, s, k, T, squeeze, K = cache
    if squeeze:
        dy = dy[None]
    branch, DY = _spectral_apply(dy, s - 1.0)
    dh = dy + branch
    w = _bin_weights(T, k)
    inner = (DY[:, :k, :] * np.conj(F[:, :k, :])).real.sum(axis=0) * w[:, None]
    dg = np.zeros((K, F.shape[2]))
    dg[:k] = inner * s * (1.0 - s)
    return (dh[0] if squeeze else dh), dg
