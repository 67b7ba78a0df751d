"""Quick oracle and contract checks runnable from an installed package.

Each check compares an implementation against an independently written
reference (memoised recursion, exact rational arithmetic, finite
differences, sinusoid sweeps) and reports pass/fail with a short detail.
"""

from __future__ import annotations

import tempfile
import time
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np


def _dtw_reference(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0 and j == 0:
            return abs(a[0] - b[0])
        best = float("inf")
        if i > 0 and j > 0:
            best = d(i - 1, j - 1)
        if i > 0:
            best = min(best, d(i - 1, j))
        if j > 0:
            best = min(best, d(i, j - 1))
        return abs(a[i] - b[j]) + best

    return d(len(a) - 1, len(b) - 1)


def check_dtw(rng):
    from .features import dtw_distance

    worst = 0.0
    for _ in range(100):
        a = tuple(rng.normal(size=rng.integers(1, 10)))
        b = tuple(rng.normal(size=rng.integers(1, 10)))
        worst = max(worst, abs(dtw_distance(np.array(a), np.array(b)) - _dtw_reference(a, b)))
    return worst <= 1e-12, f"max |diff| {worst:.2e} over 100 pairs"


def _exact_stats(v):
    q = sorted(Fraction(x) for x in v)
    n = len(q)
    k = int(np.floor(0.1 * n))
    core = q[k:n - k]
    tm = sum(core) / len(core)
    mean = sum(q) / n
    var = sum((x - mean) ** 2 for x in q) / n
    d = [Fraction(v[i + 1]) - Fraction(v[i]) for i in range(n - 1)]
    ms = sum(x * x for x in d) / len(d)
    return float(tm), float(var), float(ms)


def check_stats(rng):
    from .features import epoch_stats

    worst = 0.0
    for _ in range(200):
        v = rng.normal(15, 3, size=rng.integers(2, 40))
        st = epoch_stats(v)
        tm, var, ms = _exact_stats(list(v))
        worst = max(worst, abs(st.trimmed_mean - tm), abs(st.std - np.sqrt(var)), abs(st.rmssd - np.sqrt(ms)))
    return worst < 1e-9, f"max |diff| {worst:.2e} over 200 sequences"


def check_gradients(rng):
    from .model.gradcheck import grad_check

    worst = max(grad_check(seed=int(s)) for s in rng.integers(0, 2**31, size=5))
    return worst < 1e-4, f"max relative error {worst:.2e} over 5 models"


def check_head(rng):
    from .model.layers import frequency_enhance, h_swish, temperature_softmax

    z = rng.normal(size=(50, 4)) * 5
    p = temperature_softmax(z, 0.7)
    sums = float(np.abs(p.sum(axis=1) - 1).max())
    arg = all(np.array_equal(np.argmax(temperature_softmax(z, t), 1), np.argmax(z, 1)) for t in (0.1, 1, 10))
    fixed = h_swish(np.array([0.0, 3.0, -3.0])).tolist() == [0.0, 3.0, 0.0]
    h = rng.normal(size=(2, 30, 6))
    # logits this large saturate the sigmoid to exactly 1.0
    ident = float(np.abs(frequency_enhance(h, np.full((8, 6), 40.0)) - h).max())
    ok = sums < 1e-9 and arg and fixed and ident < 1e-9
    return ok, f"row-sum err {sums:.1e}, argmax {arg}, h_swish {fixed}, identity err {ident:.1e}"


def check_kappa(rng):
    from .evaluation import ConfusionMatrix, classification_metrics

    r = classification_metrics(ConfusionMatrix(np.array([[45, 5], [10, 40]]), ("A", "B")))
    return r.accuracy == 0.85 and r.kappa == 0.7, f"accuracy {r.accuracy}, kappa {r.kappa}"


def check_filter(rng):
    from .dsp import INTERNAL_RATE, bandpass_respiration

    t = np.arange(int(200 * INTERNAL_RATE)) / INTERNAL_RATE
    mid = slice(len(t) // 4, 3 * len(t) // 4)

    def gain(f):
        x = np.sin(2 * np.pi * f * t)
        y = bandpass_respiration(x).samples
        return 20 * np.log10(np.sqrt(np.mean(y[mid] ** 2)) / np.sqrt(np.mean(x[mid] ** 2)))

    g = {f: gain(f) for f in (0.05, 0.15, 0.3, 0.5, 1.2)}
    ok = g[0.05] <= -20 and g[1.2] <= -20 and min(g[0.15], g[0.3], g[0.5]) >= -1
    return ok, ", ".join(f"{f} Hz {v:.1f} dB" for f, v in g.items())


def check_checkpoint(rng):
    from .dataio.checkpoint import load_checkpoint, save_checkpoint
    from .model.config import ModelConfig
    from .model.network import init_weights, model_forward

    cfg = ModelConfig(input_dim=5, hidden_dim=4, head_hidden_dim=3, freq_bins_kept=3)
    w = init_weights(cfg, int(rng.integers(1000)))
    x = rng.normal(size=(20, 5))
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "m.ckpt"
        save_checkpoint(w, path)
        w2 = load_checkpoint(path)
    same = all(np.array_equal(w[k], w2[k]) for k in w.arrays)
    pred = np.array_equal(model_forward(x, w), model_forward(x, w2))
    return same and pred, f"weights equal {same}, predictions equal {pred}"


CHECKS = (
    ("filter response", check_filter),
    ("dtw oracle", check_dtw),
    ("statistics oracle", check_stats),
    ("gradient check", check_gradients),
    ("head contracts", check_head),
    ("kappa hand case", check_kappa),
    ("checkpoint round-trip", check_checkpoint),
)


def run_selftest(seed=0, out=print):
    """Run every check; returns True when all pass."""
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crash is a failed check, reported not raised
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        out(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({time.perf_counter() - t0:.2f} s)")
    return all_ok
