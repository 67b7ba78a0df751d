"""Pure-Python/numpy versions of the compiled kernels.

Used when the extension is not built, or when ``RADAR_SOMNIA_PURE=1``.
"""

import math

import numpy as np

BACKEND = "python"


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def dtw(a, b, band=-1):
    """Return ``(cost, path_length)`` of the optimal warping path."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise ValueError("empty sequence")
    w = max(n, m) if band < 0 else max(band, abs(n - m))
    inf = math.inf
    D = [[inf] * m for _ in range(n)]
    L = [[0] * m for _ in range(n)]
    for i in range(n):
        ai = a[i]
        Di, Li = D[i], L[i]
        Dp = D[i - 1] if i > 0 else None
        Lp = L[i - 1] if i > 0 else None
        for j in range(max(0, i - w), min(m, i + w + 1)):
            if i == 0 and j == 0:
                Di[0] = abs(ai - b[0])
                Li[0] = 1
                continue
            if i > 0 and j > 0:
                best, lbest = Dp[j - 1], Lp[j - 1]
            else:
                best, lbest = inf, 0
            if i > 0 and Dp[j] < best:
                best, lbest = Dp[j], Lp[j]
            if j > 0 and Di[j - 1] < best:
                best, lbest = Di[j - 1], Li[j - 1]
            Di[j] = abs(ai - b[j]) + best
            Li[j] = lbest + 1
    return float(D[n - 1][m - 1]), int(L[n - 1][m - 1])


def lstm_forward(xw, wh):
    T, B, G = xw.shape
    H = G // 4
    if wh.shape != (H, G):
        raise ValueError("recurrent weight shape mismatch")
    hs = np.zeros((T, B, H))
    cs = np.zeros((T, B, H))
    acts = np.empty((T, B, G))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xw[t] + h @ wh
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        hs[t], cs[t] = h, c
        acts[t, :, :H] = i
        acts[t, :, H:2 * H] = f
        acts[t, :, 2 * H:3 * H] = g
        acts[t, :, 3 * H:] = o
    return hs, cs, acts


def lstm_backward(dhs, cs, acts, wh):
    T, B, H = dhs.shape
    dz = np.zeros((T, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = acts[t, :, :H]
        f = acts[t, :, H:2 * H]
        g = acts[t, :, 2 * H:3 * H]
        o = acts[t, :, 3 * H:]
        cprev = cs[t - 1] if t > 0 else np.zeros((B, H))
        dh = dhs[t] + dh_next
        tc = np.tanh(cs[t])
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz[t, :, :H] = dc * g * i * (1.0 - i)
        dz[t, :, H:2 * H] = dc * cprev * f * (1.0 - f)
        dz[t, :, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[t, :, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz[t] @ wh.T
    return dz
