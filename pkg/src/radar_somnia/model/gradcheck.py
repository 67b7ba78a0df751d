"""Central finite-difference check of the analytic gradients."""

import numpy as np

from .config import ModelConfig
from .network import init_weights, loss_and_grads

# gradients smaller than this are compared in absolute terms
REL_FLOOR = 1e-6


def tiny_config(seed, rng=None):
    rng = rng or np.random.default_rng(seed)
    return ModelConfig(
        input_dim=int(rng.integers(1, 5)),
        hidden_dim=int(rng.integers(1, 5)),
        num_bilstm_layers=int(rng.integers(1, 3)),
        freq_bins_kept=int(rng.integers(1, 4)),
        head_hidden_dim=int(rng.integers(1, 6)),
        num_classes=int(rng.choice([2, 4])),
        dropout_rate=0.0,
        temperature=float(rng.uniform(0.5, 2.0)),
        seed=seed,
    )


def relative_error(analytic, numeric, floor=REL_FLOOR):
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(config=None, seed=0, step=1e-5, T=None, batch=2, weights=None, inputs=None,
               floor=REL_FLOOR):
    """Max relative error between analytic and central-difference gradients
    of the full weighted cross-entropy with respect to every trainable
    parameter.

    ``floor`` sets the magnitude below which errors are measured in
    absolute rather than relative terms.
    """
    rng = np.random.default_rng(seed)
    cfg = config or tiny_config(seed, rng)
    T = T or int(rng.integers(2, 7))
    w = weights.copy() if weights is not None else init_weights(cfg, seed)
    if weights is None:
        # perturb so no parameter sits at its structured initial value
        for k in w.trainable:
            w.arrays[k] = w.arrays[k] + rng.normal(0.0, 0.3, size=w.arrays[k].shape)
    if inputs is None:
        X = rng.normal(size=(batch, T, cfg.input_dim))
        y = rng.integers(0, cfg.num_classes, size=(batch, T))
    else:
        X, y = inputs
    cw = rng.uniform(0.5, 2.0, size=cfg.num_classes)

    _, grads, _ = loss_and_grads(w, X, y, cw)
    worst = 0.0
    for name in w.trainable:
        arr = w.arrays[name]
        num = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            lp, _, _ = loss_and_grads(w, X, y, cw)
            flat[i] = old - step
            lm, _, _ = loss_and_grads(w, X, y, cw)
            flat[i] = old
            num.reshape(-1)[i] = (lp - lm) / (2 * step)
        worst = max(worst, float(relative_error(grads[name], num, floor).max()))
    return worst
