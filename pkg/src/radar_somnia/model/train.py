"""Chunked BPTT training with Adam, early-stopping checkpointing and
session-level prediction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import median_filter

from ..dataio.hypnogram import Hypnogram, Stage
from ..errors import DivergenceDetected, EmptyDataset, ShapeMismatch
from .config import ModelConfig, TrainConfig
from .network import ModelWeights, init_weights, loss_and_grads, model_forward, weighted_cross_entropy

log = logging.getLogger(__name__)


@dataclass
class LabeledSession:
    """Features ``(T, F)`` with integer targets; -1 marks unused epochs."""

    features: np.ndarray
    labels: np.ndarray
    session_id: str = ""


def stage_targets(hypnogram: Hypnogram, num_classes=4, excluded=None):
    """Integer targets for training; Unscored/excluded epochs become -1."""
    s = np.asarray(hypnogram.stages, dtype=np.int64)
    y = s.copy() if num_classes == 4 else (s != Stage.WAKE).astype(np.int64)
    y[s == Stage.UNSCORED] = -1
    if excluded is not None:
        y[np.asarray(excluded, dtype=bool)] = -1
    return y


def as_labeled(pairs, num_classes=4):
    out = []
    for item in pairs:
        if isinstance(item, LabeledSession):
            out.append(item)
            continue
        fm, hyp = item[0], item[1]
        excluded = item[2] if len(item) > 2 else None
        x = np.asarray(getattr(fm, "values", fm), dtype=np.float64)
        y = stage_targets(hyp, num_classes, excluded) if isinstance(hyp, Hypnogram) else np.asarray(hyp)
        n = min(len(x), len(y))
        out.append(LabeledSession(x[:n], y[:n], getattr(fm, "session_id", "")))
    return out


def inverse_frequency_weights(sessions, num_classes):
    counts = np.zeros(num_classes)
    for s in sessions:
        y = s.labels[s.labels >= 0]
        counts += np.bincount(y, minlength=num_classes)[:num_classes]
    counts = np.maximum(counts, 1.0)
    w = 1.0 / counts
    return w / w.mean()


def make_chunks(n_steps, chunk_length):
    """Start offsets: 50% overlap, last chunk flush with the sequence end."""
    if n_steps <= chunk_length:
        return [(0, n_steps)]
    hop = max(1, chunk_length // 2)
    starts = list(range(0, n_steps - chunk_length + 1, hop))
    if starts[-1] != n_steps - chunk_length:
        starts.append(n_steps - chunk_length)
    return [(s, s + chunk_length) for s in starts]


class Adam:
    def __init__(self, names, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros(shapes[k]) for k in names}
        self.v = {k: np.zeros(shapes[k]) for k in names}
        self.t = 0

    def step(self, weights: ModelWeights, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            weights.arrays[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_global_norm(grads, max_norm):
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / total
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


@dataclass
class TrainResult:
    weights: ModelWeights
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    class_weights: np.ndarray | None = None


def _input_stats(sessions):
    X = np.concatenate([s.features for s in sessions])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std < 1e-8] = 1.0
    return mean, std


def session_loss(weights, sessions, class_weights):
    total, n = 0.0, 0
    for s in sessions:
        probs = model_forward(s.features, weights)
        k = int((s.labels >= 0).sum())
        if k:
            total += weighted_cross_entropy(probs, s.labels, class_weights) * k
            n += k
    return total / max(n, 1)


def train(dataset, model_config: ModelConfig, train_config: TrainConfig = TrainConfig(),
          validation=None, progress=None) -> TrainResult:
    """Fit a model; returns the weights with the lowest monitor loss.

    ``dataset`` and ``validation`` hold ``LabeledSession`` items or
    ``(features, hypnogram[, excluded])`` tuples. Without ``validation`` a
    seeded ``monitor_fraction`` subset of the training nights is scored
    without dropout after every epoch (all nights when the fraction is 0).
    """
    sessions = as_labeled(dataset, model_config.num_classes)
    if not sessions:
        raise EmptyDataset("no training sessions")
    for s in sessions:
        if s.features.shape[1] != model_config.input_dim:
            raise ShapeMismatch(f"{s.session_id}: width {s.features.shape[1]} != {model_config.input_dim}")
    tc = train_config
    rng = np.random.default_rng(tc.seed)
    if validation:
        val = as_labeled(validation, model_config.num_classes)
    else:
        k = max(1, int(np.ceil(tc.monitor_fraction * len(sessions)))) if tc.monitor_fraction > 0 else len(sessions)
        val = [sessions[i] for i in sorted(rng.choice(len(sessions), size=k, replace=False))]

    weights = init_weights(model_config)
    weights.arrays["input_mean"], weights.arrays["input_std"] = _input_stats(sessions)
    cw = (np.asarray(tc.class_weights, dtype=np.float64) if tc.class_weights is not None
          else inverse_frequency_weights(sessions, model_config.num_classes))
    if cw.size != model_config.num_classes:
        raise ValueError("class_weights length must equal num_classes")

    chunks = []
    for si, s in enumerate(sessions):
        for a, b in make_chunks(len(s.features), tc.chunk_length):
            if (s.labels[a:b] >= 0).any():
                chunks.append((si, a, b))
    if not chunks:
        raise EmptyDataset("no labelled epochs")
    shapes = {k: weights[k].shape for k in weights.trainable}
    opt = Adam(weights.trainable, shapes, tc.learning_rate, tc.beta1, tc.beta2)

    result = TrainResult(weights.copy(), class_weights=cw)
    best = np.inf
    stale = 0
    for epoch in range(tc.max_epochs):
        order = rng.permutation(len(chunks))
        by_len = {}
        for ci in order:
            si, a, b = chunks[ci]
            by_len.setdefault(b - a, []).append(ci)
        batches = []
        for length in sorted(by_len):
            ids = by_len[length]
            batches += [ids[i:i + tc.batch_size] for i in range(0, len(ids), tc.batch_size)]
        batches = [batches[i] for i in rng.permutation(len(batches))]
        ep_loss, ep_n = 0.0, 0
        for batch in batches:
            X = np.stack([sessions[chunks[c][0]].features[chunks[c][1]:chunks[c][2]] for c in batch])
            y = np.stack([sessions[chunks[c][0]].labels[chunks[c][1]:chunks[c][2]] for c in batch])
            loss, grads, _ = loss_and_grads(weights, X, y, cw, train_mode=True, rng=rng)
            if not np.isfinite(loss):
                raise DivergenceDetected(f"loss became {loss} at epoch {epoch}")
            grads, _ = clip_global_norm(grads, tc.gradient_clip_norm)
            opt.step(weights, grads)
            ep_loss += loss * len(batch)
            ep_n += len(batch)
        tr = ep_loss / ep_n
        monitor = session_loss(weights, val, cw)
        if not np.isfinite(monitor):
            raise DivergenceDetected(f"monitor loss became {monitor} at epoch {epoch}")
        result.train_loss.append(tr)
        result.val_loss.append(monitor)
        log.info("epoch %d train_loss %.4f monitor_loss %.4f", epoch, tr, monitor)
        if progress is not None:
            progress(epoch, tr, monitor)
        if monitor < best:
            best = monitor
            result.weights = weights.copy()
            result.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if tc.patience is not None and stale >= tc.patience:
                break
    return result


def predict_session(features, weights: ModelWeights, config: ModelConfig | None = None,
                    smooth=False, start_clock=0.0):
    """Argmax hypnogram (ties to the lower class) plus per-epoch probabilities.

    Four-class output uses the Stage codes; two-class output maps
    sleep to ``Stage.LIGHT``.
    """
    probs = model_forward(features, weights, config)
    labels = np.argmax(probs, axis=1)  # first maximum wins ties
    if smooth and labels.size >= 3:
        labels = median_filter(labels, size=3, mode="nearest")
    if weights.config.num_classes == 2:
        stages = np.where(labels == 0, Stage.WAKE, Stage.LIGHT)
    else:
        stages = labels
    return Hypnogram(np.asarray(stages, dtype=np.int64), start_clock), probs
