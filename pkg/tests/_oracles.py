"""Reference implementations written independently of the package code."""

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np


def dtw_recursive(a, b, band=None):
    """Memoised recursion over the DTW recurrence; returns (cost, path_len)."""
    a, b = tuple(float(x) for x in a), tuple(float(x) for x in b)
    n, m = len(a), len(b)
    w = None if band is None else max(band, abs(n - m))

    @lru_cache(maxsize=None)
    def d(i, j):
        if w is not None and abs(i - j) > w:
            return (math.inf, 0)
        c = abs(a[i] - b[j])
        if i == 0 and j == 0:
            return (c, 1)
        cands = []
        if i > 0 and j > 0:
            cands.append(d(i - 1, j - 1))
        if i > 0:
            cands.append(d(i - 1, j))
        if j > 0:
            cands.append(d(i, j - 1))
        # first minimum wins: diagonal, then up, then left
        best = min(cands, key=lambda t: t[0])
        return (c + best[0], best[1] + 1)

    return d(n - 1, m - 1)


def exact_stats(values):
    """Trimmed mean, mean, population variance, mean squared successive difference."""
    q = [Fraction(float(v)) for v in values]
    n = len(q)
    s = sorted(q)
    k = (n * 10) // 100  # floor(0.1 n) without floating point
    core = s[k:n - k]
    mean = sum(q) / n
    var = sum((x - mean) ** 2 for x in q) / n
    d = [q[i + 1] - q[i] for i in range(n - 1)]
    msd = sum(x * x for x in d) / len(d) if d else None
    return sum(core) / len(core), mean, var, msd


def unwrap_reference(x):
    """Cumulative 2*pi corrections for every jump larger than pi."""
    out = [float(x[0])]
    offset = 0.0
    for prev, cur in zip(x[:-1], x[1:]):
        d = cur - prev
        while d > math.pi:
            d -= 2 * math.pi
            offset -= 2 * math.pi
        while d < -math.pi:
            d += 2 * math.pi
            offset += 2 * math.pi
        out.append(cur + offset)
    return np.array(out)


def count_metrics(true, pred, n_classes):
    """Per-class tp/fp/fn and totals by explicit iteration."""
    tp = [0] * n_classes
    fp = [0] * n_classes
    fn = [0] * n_classes
    correct = 0
    for t, p in zip(true, pred):
        if t == p:
            correct += 1
            tp[t] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    n = len(true)
    precision, recall, f1 = [], [], []
    present = []
    for c in range(n_classes):
        precision.append(tp[c] / (tp[c] + fp[c]) if tp[c] + fp[c] else 0.0)
        recall.append(tp[c] / (tp[c] + fn[c]) if tp[c] + fn[c] else 0.0)
        denom = 2 * tp[c] + fp[c] + fn[c]
        f1.append(2 * tp[c] / denom if denom else 0.0)
        present.append(denom > 0)
    po = Fraction(correct, n)
    pe = sum(Fraction(sum(1 for t in true if t == c) * sum(1 for p in pred if p == c), n * n)
             for c in range(n_classes))
    kappa = float((po - pe) / (1 - pe)) if pe != 1 else 0.0
    macro = sum(f for f, ok in zip(f1, present) if ok) / sum(present)
    return {"accuracy": correct / n, "precision": precision, "recall": recall, "f1": f1,
            "macro_f1": macro, "kappa": kappa}


def lstm_reference(x, wx, wh, b):
    """Plain per-step LSTM (gate order i, f, g, o) on one sequence ``(T, F)``."""
    H = wh.shape[0]
    h = np.zeros(H)
    c = np.zeros(H)
    out = []
    for t in range(x.shape[0]):
        z = x[t] @ wx + h @ wh + b
        i = 1 / (1 + np.exp(-z[:H]))
        f = 1 / (1 + np.exp(-z[H:2 * H]))
        g = np.tanh(z[2 * H:3 * H])
        o = 1 / (1 + np.exp(-z[3 * H:]))
        c = f * c + i * g
        h = o * np.tanh(c)
        out.append(h)
    return np.array(out)


def sine_gain_db(filter_fn, f, fs=20.0, seconds=200.0):
    """Steady-state RMS gain of ``filter_fn`` on a unit sinusoid."""
    t = np.arange(int(seconds * fs)) / fs
    x = np.sin(2 * np.pi * f * t)
    y = filter_fn(x)
    mid = slice(len(t) // 4, 3 * len(t) // 4)
    return 20 * np.log10(np.sqrt(np.mean(y[mid] ** 2)) / np.sqrt(np.mean(x[mid] ** 2)))
