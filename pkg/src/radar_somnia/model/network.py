"""Stacked BiLSTM -> spectral gating -> LayerNorm -> linear -> dropout ->
h-swish -> linear -> temperature softmax, with hand-written backprop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import LabelOutOfRange, ShapeMismatch
from .config import ModelConfig
from .layers import (
    frequency_enhance_backward,
    frequency_enhance_forward,
    h_swish,
    h_swish_grad,
    layer_norm_backward,
    layer_norm_forward,
    temperature_softmax,
)

LN_EPS = 1e-5
LOG_EPS = 1e-12
DIRECTIONS = ("fwd", "bwd")


def param_shapes(config: ModelConfig):
    """Ordered ``name -> shape`` for every array in a weight set."""
    H, D = config.hidden_dim, 2 * config.hidden_dim
    shapes = {}
    fin = config.input_dim
    for layer in range(config.num_bilstm_layers):
        for d in DIRECTIONS:
            shapes[f"lstm{layer}_{d}_wx"] = (fin, 4 * H)
            shapes[f"lstm{layer}_{d}_wh"] = (H, 4 * H)
            shapes[f"lstm{layer}_{d}_b"] = (4 * H,)
        fin = D
    shapes["freq_gate"] = (config.freq_bins_kept, D)
    shapes["ln_gain"] = (D,)
    shapes["ln_bias"] = (D,)
    shapes["head1_w"] = (D, config.head_hidden_dim)
    shapes["head1_b"] = (config.head_hidden_dim,)
    shapes["head2_w"] = (config.head_hidden_dim, config.num_classes)
    shapes["head2_b"] = (config.num_classes,)
    # fixed input standardisation, set from training data
    shapes["input_mean"] = (config.input_dim,)
    shapes["input_std"] = (config.input_dim,)
    return shapes


FROZEN = ("input_mean", "input_std")


@dataclass
class ModelWeights:
    config: ModelConfig
    arrays: dict

    def __post_init__(self):
        shapes = param_shapes(self.config)
        if list(self.arrays) != list(shapes):
            raise ShapeMismatch("weight names do not match the model config")
        for k, shp in shapes.items():
            a = np.asarray(self.arrays[k], dtype=np.float64)
            if a.shape != shp:
                raise ShapeMismatch(f"{k}: shape {a.shape}, expected {shp}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{k}: non-finite values")
            self.arrays[k] = a

    def __getitem__(self, name):
        return self.arrays[name]

    @property
    def trainable(self):
        return [k for k in self.arrays if k not in FROZEN]

    def copy(self):
        return ModelWeights(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def n_parameters(self):
        return sum(self.arrays[k].size for k in self.trainable)


def init_weights(config: ModelConfig, seed=None) -> ModelWeights:
    rng = np.random.default_rng(config.seed if seed is None else seed)
    H = config.hidden_dim
    arrays = {}
    for name, shp in param_shapes(config).items():
        if name.endswith("_wx") or name.endswith("_wh"):
            a = rng.uniform(-1.0, 1.0, size=shp) / np.sqrt(H)
        elif name.startswith("lstm") and name.endswith("_b"):
            a = np.zeros(shp)
            a[H:2 * H] = 1.0  # forget gate
        elif name == "freq_gate":
            a = np.full(shp, 3.0)
        elif name in ("ln_gain", "input_std"):
            a = np.ones(shp)
        elif name in ("head1_w", "head2_w"):
            a = rng.normal(0.0, np.sqrt(2.0 / (shp[0] + shp[1])), size=shp)
        else:
            a = np.zeros(shp)
        arrays[name] = a
    return ModelWeights(config, arrays)


def zero_weights(config: ModelConfig) -> ModelWeights:
    w = ModelWeights(config, {k: np.zeros(s) for k, s in param_shapes(config).items()})
    w.arrays["input_std"][:] = 1.0
    return w


# -- BiLSTM ----------------------------------------------------------------

def _direction_forward(X, wx, wh, b, reverse):
    if reverse:
        X = X[:, ::-1]
    xw = np.ascontiguousarray((X @ wx + b).transpose(1, 0, 2))
    hs, cs, acts = _kernels.lstm_forward(xw, np.ascontiguousarray(wh))
    out = hs.transpose(1, 0, 2)
    if reverse:
        out = out[:, ::-1]
    return out, (X, hs, cs, acts)


def _direction_backward(dout, cache, wx, wh, reverse):
    X, hs, cs, acts = cache
    if reverse:
        dout = dout[:, ::-1]
    dhs = np.ascontiguousarray(dout.transpose(1, 0, 2))
    dz = _kernels.lstm_backward(dhs, cs, acts, np.ascontiguousarray(wh))
    T, B, G = dz.shape
    H = G // 4
    dzf = dz.reshape(-1, G)
    Xt = X.transpose(1, 0, 2).reshape(T * B, -1)
    dwx = Xt.T @ dzf
    db = dzf.sum(axis=0)
    hprev = np.zeros_like(hs)
    hprev[1:] = hs[:-1]
    dwh = hprev.reshape(-1, H).T @ dzf
    dX = (dz @ wx.T).transpose(1, 0, 2)
    if reverse:
        dX = dX[:, ::-1]
    return dX, dwx, dwh, db


def _as_batch(x, width):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != width or x.shape[1] < 1:
        raise ShapeMismatch(f"expected (T, {width}) or (B, T, {width}) input, got {x.shape}")
    return x, squeeze


def _bilstm(X, weights, caches=None):
    cfg = weights.config
    h = X
    for layer in range(cfg.num_bilstm_layers):
        outs = []
        for d, rev in zip(DIRECTIONS, (False, True)):
            p = f"lstm{layer}_{d}"
            o, c = _direction_forward(h, weights[p + "_wx"], weights[p + "_wh"],
                                      weights[p + "_b"], rev)
            outs.append(o)
            if caches is not None:
                caches.append((p, rev, c))
        h = np.concatenate(outs, axis=2)
    return h


def bilstm_forward(x, weights: ModelWeights, config: ModelConfig | None = None):
    """Stacked bidirectional LSTM over ``(T, F)`` or ``(B, T, F)`` input.

    Zero initial states; each output step is ``[forward_h, backward_h]``.
    """
    cfg = config or weights.config
    X, squeeze = _as_batch(x, cfg.input_dim)
    h = _bilstm(X, weights)
    return h[0] if squeeze else h


# -- full model --------------------------------------------------------------

def _forward(weights, X, train_mode=False, rng=None, keep=False):
    cfg = weights.config
    cache = {"lstm": [] if keep else None}
    Xn = (X - weights["input_mean"]) / weights["input_std"]
    h = _bilstm(Xn, weights, cache["lstm"])
    y, fc = frequency_enhance_forward(h, weights["freq_gate"])
    ln, lc = layer_norm_forward(y, weights["ln_gain"], weights["ln_bias"], LN_EPS)
    a1 = ln @ weights["head1_w"] + weights["head1_b"]
    if train_mode and cfg.dropout_rate > 0:
        if rng is None:
            raise ValueError("train_mode needs an rng for dropout")
        mask = (rng.random(a1.shape) >= cfg.dropout_rate) / (1.0 - cfg.dropout_rate)
    else:
        mask = None
    a1d = a1 * mask if mask is not None else a1
    act = h_swish(a1d)
    logits = act @ weights["head2_w"] + weights["head2_b"]
    probs = temperature_softmax(logits, cfg.temperature)
    if keep:
        cache.update(fc=fc, lc=lc, ln=ln, a1d=a1d, mask=mask, act=act)
    return probs, cache


def model_forward(features, weights: ModelWeights, config: ModelConfig | None = None,
                  train_mode=False, rng=None):
    """Per-epoch class probabilities, ``(T, C)`` or ``(B, T, C)``."""
    if config is not None and config != weights.config:
        raise ShapeMismatch("config does not match weights")
    x = getattr(features, "values", features)
    X, squeeze = _as_batch(x, weights.config.input_dim)
    probs, _ = _forward(weights, X, train_mode, rng)
    return probs[0] if squeeze else probs


def weighted_cross_entropy(probs, labels, class_weights=None, eps=LOG_EPS):
    """Mean of ``-w[y] * log(max(p_y, eps))`` over labelled steps.

    Labels < 0 are masked out of both sum and count.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    C = p.shape[-1]
    p2, y2 = p.reshape(-1, C), y.reshape(-1)
    if y2.max(initial=-1) >= C:
        raise LabelOutOfRange(f"label >= {C}")
    w = np.ones(C) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    valid = y2 >= 0
    n = int(valid.sum())
    if n == 0:
        return 0.0
    py = p2[valid, y2[valid]]
    return float(-(w[y2[valid]] * np.log(np.maximum(py, eps))).sum() / n)


def loss_and_grads(weights: ModelWeights, X, labels, class_weights=None, train_mode=False,
                   rng=None):
    """Loss and analytic gradients for a batch ``X (B, T, F)``, ``labels (B, T)``."""
    cfg = weights.config
    X, _ = _as_batch(X, cfg.input_dim)
    y = np.asarray(labels, dtype=np.int64).reshape(X.shape[0], X.shape[1])
    C = cfg.num_classes
    if y.max(initial=-1) >= C:
        raise LabelOutOfRange(f"label >= {C}")
    w = np.ones(C) if class_weights is None else np.asarray(class_weights, dtype=np.float64)

    probs, cache = _forward(weights, X, train_mode, rng, keep=True)
    loss = weighted_cross_entropy(probs, y, w)
    valid = y >= 0
    n = max(int(valid.sum()), 1)
    grads = {}

    # d loss / d logits through the clamped log and temperature softmax
    yi = np.where(valid, y, 0)
    py = np.take_along_axis(probs, yi[..., None], axis=-1)[..., 0]
    active = valid & (py > LOG_EPS)
    coef = np.where(active, w[yi], 0.0) / n
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, yi[..., None], 1.0, axis=-1)
    dlogits = coef[..., None] * (probs - onehot) / cfg.temperature

    act = cache["act"]
    Dh = cfg.head_hidden_dim
    grads["head2_w"] = act.reshape(-1, Dh).T @ dlogits.reshape(-1, C)
    grads["head2_b"] = dlogits.reshape(-1, C).sum(axis=0)
    dact = dlogits @ weights["head2_w"].T
    da1d = dact * h_swish_grad(cache["a1d"])
    da1 = da1d * cache["mask"] if cache["mask"] is not None else da1d
    ln = cache["ln"]
    D = ln.shape[-1]
    grads["head1_w"] = ln.reshape(-1, D).T @ da1.reshape(-1, Dh)
    grads["head1_b"] = da1.reshape(-1, Dh).sum(axis=0)
    dln = da1 @ weights["head1_w"].T
    dy, grads["ln_gain"], grads["ln_bias"] = layer_norm_backward(dln, cache["lc"], weights["ln_gain"])
    dh, grads["freq_gate"] = frequency_enhance_backward(dy, cache["fc"])

    # walk the LSTM caches in reverse (layer by layer, both directions)
    lstm = cache["lstm"]
    for layer in range(cfg.num_bilstm_layers - 1, -1, -1):
        (pf, rf, cf), (pb, rb, cb) = lstm[2 * layer], lstm[2 * layer + 1]
        H = cfg.hidden_dim
        dxf, *gf = _direction_backward(dh[:, :, :H], cf, weights[pf + "_wx"], weights[pf + "_wh"], rf)
        dxb, *gb = _direction_backward(dh[:, :, H:], cb, weights[pb + "_wx"], weights[pb + "_wh"], rb)
        for p, g in ((pf, gf), (pb, gb)):
            grads[p + "_wx"], grads[p + "_wh"], grads[p + "_b"] = g
        dh = dxf + dxb
    return loss, {k: grads[k] for k in weights.trainable}, probs
