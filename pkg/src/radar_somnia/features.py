"""Per-epoch feature vectors: multi-scale respiration statistics, adjacent
epoch DTW, movement counts and time-of-night embeddings.

Column order of a :class:`FeatureMatrix` (``feature_names``):

1. ``rr{w}_{stat}`` for each window ``w`` in ``windows`` (seconds) and each
   stat in :data:`STAT_NAMES`;
2. ``dtw_adjacent``;
3. ``mv_max_consecutive``, ``mv_total_frames``, ``mv_cumulative_amplitude``;
4. ``circadian``, ``progress``;
5. imputation indicators ``imp_rr{w}`` per window, then ``imp_dtw``.

Serialized tables append a final ``validity`` column.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .dsp import EPOCH_SECONDS, RateSeries, RespWaveform, SessionSignals
from .errors import EmptySequence, GridMisalignment, ParseError, TooFewSamples

STAT_NAMES = ("trimmed_mean", "mean", "std", "rmssd", "mean_abs_diff", "max_abs_diff")
DIFF_STATS = ("rmssd", "mean_abs_diff", "max_abs_diff")
DEFAULT_WINDOWS = (30, 90, 150, 270, 510)
DTW_RATE = 2.0
DTW_BAND = 10
TRIM_FRACTION = 0.1


@dataclass(frozen=True)
class EpochStats:
    trimmed_mean: float
    mean: float
    std: float
    rmssd: float
    mean_abs_diff: float
    max_abs_diff: float

    def as_tuple(self):
        return tuple(getattr(self, k) for k in STAT_NAMES)


def trimmed_mean(values, fraction=TRIM_FRACTION):
    x = np.sort(np.asarray(values, dtype=np.float64))
    k = int(math.floor(fraction * x.size + 1e-12))
    return float(x[k:x.size - k].mean())


def epoch_stats(values, allow_short=False) -> EpochStats:
    """Summary statistics of one run of rate samples.

    With fewer than two samples the difference metrics are undefined:
    ``TooFewSamples`` is raised, or they come back as NaN when
    ``allow_short`` is set.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise TooFewSamples("no samples")
    if x.size < 2 and not allow_short:
        raise TooFewSamples("difference metrics need at least two samples")
    mean = float(x.mean())
    # shifting by the first sample keeps a constant run at exactly zero spread
    u = x - x[0]
    std = float(np.sqrt(np.mean((u - u.mean()) ** 2)))
    if x.size >= 2:
        d = np.diff(x)
        ad = np.abs(d)
        rmssd = float(np.sqrt(np.mean(d * d)))
        mad, maxd = float(ad.mean()), float(ad.max())
    else:
        rmssd = mad = maxd = float("nan")
    return EpochStats(trimmed_mean(x), mean, std, rmssd, mad, maxd)


def window_epochs(epoch_index, window_seconds, n_epochs):
    """Epoch indices of the centred window, truncated at the session edges."""
    span = int(round(window_seconds / EPOCH_SECONDS))
    if span < 1 or span % 2 == 0 or abs(span * EPOCH_SECONDS - window_seconds) > 1e-9:
        raise ValueError(f"window {window_seconds}s is not an odd multiple of 30 s")
    half = span // 2
    return range(max(0, epoch_index - half), min(n_epochs, epoch_index + half + 1))


def multiscale_stats(rates: RateSeries, epoch_index, windows=DEFAULT_WINDOWS):
    """Stats of the valid rate samples in each centred window.

    Returns ``(values, imputed)``: ``values`` has ``6 * len(windows)``
    entries in window-major order, NaN where a slot is undefined, and
    ``imputed[w]`` is True when any slot of window ``w`` is undefined.
    """
    out = np.full(len(windows) * len(STAT_NAMES), np.nan)
    imputed = np.zeros(len(windows), dtype=bool)
    for wi, w in enumerate(windows):
        eps = window_epochs(epoch_index, w, rates.n_epochs)
        block = rates.rate[eps.start:eps.stop].ravel()
        block = block[np.isfinite(block)]
        if block.size == 0:
            imputed[wi] = True
            continue
        st = epoch_stats(block, allow_short=True).as_tuple()
        out[wi * 6:(wi + 1) * 6] = st
        imputed[wi] = block.size < 2
    return out, imputed


def dtw_distance(a, b, band=None):
    """Classic DTW with absolute-difference local cost.

    ``band`` is the Sakoe-Chiba half-width in samples (widened to the length
    difference when needed); ``None`` searches the full matrix.
    """
    a = np.ascontiguousarray(a, dtype=np.float64).ravel()
    b = np.ascontiguousarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySequence("DTW needs two non-empty sequences")
    cost, _ = _kernels.dtw(a, b, -1 if band is None else int(band))
    return cost


def dtw_normalized(a, b, band=None):
    a = np.ascontiguousarray(a, dtype=np.float64).ravel()
    b = np.ascontiguousarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySequence("DTW needs two non-empty sequences")
    cost, length = _kernels.dtw(a, b, -1 if band is None else int(band))
    return cost / length


def _epoch_waveform(wave: RespWaveform, e, rate=DTW_RATE):
    per = int(round(wave.sample_rate * EPOCH_SECONDS))
    step = max(1, int(round(wave.sample_rate / rate)))
    seg = np.asarray(wave.samples[e * per:(e + 1) * per])
    n = seg.size // step
    return seg[:n * step].reshape(n, step).mean(axis=1)


def adjacent_epoch_dtw(waveform: RespWaveform, epoch_index, valid=None, band=DTW_BAND):
    """Path-normalised DTW between the 2 Hz waveforms of epochs e-1 and e.

    Returns ``(value, imputed)``; the value is NaN and ``imputed`` True for
    the first epoch or when either epoch is flagged invalid in ``valid``.
    """
    if epoch_index < 1:
        return float("nan"), True
    if valid is not None and not (valid[epoch_index] and valid[epoch_index - 1]):
        return float("nan"), True
    a = _epoch_waveform(waveform, epoch_index - 1)
    b = _epoch_waveform(waveform, epoch_index)
    if a.size == 0 or b.size == 0:
        return float("nan"), True
    return dtw_normalized(a, b, band), False


def max_run(flags):
    best = cur = 0
    for f in flags:
        cur = cur + 1 if f else 0
        best = max(best, cur)
    return best


def movement_features(moving, amplitude):
    """``(max_consecutive_moving, total_moving, cumulative_amplitude)`` for
    one epoch; the amplitude sum runs over moving frames only."""
    mv = np.asarray(moving, dtype=bool)
    amp = np.asarray(amplitude, dtype=np.float64)
    if mv.size == 0:
        return 0, 0, 0.0
    return max_run(mv), int(mv.sum()), float(amp[mv].sum())


def circadian_phase(clock_seconds):
    """Cosine prior with its minimum (-1) at 03:00 and maximum at 15:00."""
    hours = np.asarray(clock_seconds, dtype=np.float64) / 3600.0
    return -np.cos(2.0 * np.pi * (hours - 3.0) / 24.0)


def temporal_context_features(clock_time, epoch_index, total_epochs):
    if total_epochs < 2:
        raise ValueError("need at least two epochs for the progress feature")
    return float(circadian_phase(clock_time)), epoch_index / (total_epochs - 1)


def feature_names(windows=DEFAULT_WINDOWS):
    names = [f"rr{w}_{s}" for w in windows for s in STAT_NAMES]
    names += ["dtw_adjacent", "mv_max_consecutive", "mv_total_frames",
              "mv_cumulative_amplitude", "circadian", "progress"]
    names += [f"imp_rr{w}" for w in windows] + ["imp_dtw"]
    return tuple(names)


@dataclass(frozen=True)
class EpochFeatureVector:
    epoch_index: int
    values: np.ndarray
    validity: bool


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    feature_names: tuple
    validity: np.ndarray
    session_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.feature_names):
            raise GridMisalignment("feature width does not match feature_names")
        if v.shape[0] != np.asarray(self.validity).size:
            raise GridMisalignment("validity length does not match rows")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "validity", np.asarray(self.validity, dtype=bool))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self):
        return self.values.shape[0]

    @property
    def epochs(self):
        return [EpochFeatureVector(i, self.values[i], bool(self.validity[i]))
                for i in range(len(self))]

    def column(self, name):
        return self.values[:, self.feature_names.index(name)]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.feature_names) + ["validity"])
        for row, ok in zip(self.values, self.validity):
            w.writerow([repr(float(v)) for v in row] + [int(ok)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, path, session_id=""):
        path = Path(path)
        with path.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][-1] != "validity":
            raise ParseError("missing header with trailing validity column", path, 1)
        names = rows[0][:-1]
        vals, ok = [], []
        for ln, r in enumerate(rows[1:], start=2):
            if len(r) != len(names) + 1:
                raise ParseError(f"expected {len(names) + 1} columns", path, ln)
            try:
                vals.append([float(c) for c in r[:-1]])
                ok.append(bool(int(r[-1])))
            except ValueError as exc:
                raise ParseError(str(exc), path, ln) from None
        arr = np.array(vals, dtype=np.float64).reshape(len(vals), len(names))
        return cls(arr, tuple(names), np.array(ok, dtype=bool), session_id or path.stem)


def _impute(col, mask):
    """Replace masked slots by the median of the unmasked ones (0 if none)."""
    good = col[~mask]
    fill = float(np.median(good)) if good.size else 0.0
    out = col.copy()
    out[mask] = fill
    return out


def assemble_feature_matrix(signals: SessionSignals, start_clock=0.0, session_id="",
                            windows=DEFAULT_WINDOWS) -> FeatureMatrix:
    """Build the per-epoch feature table for one session."""
    n = signals.n_epochs
    rates, motion = signals.rates, signals.motion
    if rates.n_epochs != n or np.asarray(signals.moving_fraction).size != n:
        raise GridMisalignment("rate/motion series are not on the session epoch grid")
    per_wave = int(round(signals.waveform.sample_rate * EPOCH_SECONDS))
    if signals.waveform.samples.size < n * per_wave:
        raise GridMisalignment("waveform shorter than the epoch grid")
    nw = len(windows)
    validity = rates.valid.any(axis=1)

    ms = np.empty((n, 6 * nw))
    ms_imp = np.zeros((n, nw), dtype=bool)
    for e in range(n):
        ms[e], ms_imp[e] = multiscale_stats(rates, e, windows)
    ms_mask = np.isnan(ms)

    dtw = np.empty(n)
    dtw_imp = np.zeros(n, dtype=bool)
    for e in range(n):
        dtw[e], dtw_imp[e] = adjacent_epoch_dtw(signals.waveform, e, validity)

    mv = np.zeros((n, 3))
    ep = motion.epoch_of_frame()
    order = np.argsort(ep, kind="stable")
    bounds = np.searchsorted(ep[order], np.arange(n + 1))
    for e in range(n):
        sel = order[bounds[e]:bounds[e + 1]]
        mv[e] = movement_features(motion.moving[sel], motion.amplitude[sel])

    clock = start_clock + np.arange(n) * EPOCH_SECONDS
    circ = circadian_phase(clock)
    prog = np.arange(n) / (n - 1) if n > 1 else np.zeros(n)

    cols = [_impute(ms[:, j], ms_mask[:, j]) for j in range(ms.shape[1])]
    cols.append(_impute(dtw, dtw_imp))
    cols += [mv[:, 0], mv[:, 1], mv[:, 2], circ, prog]
    cols += [ms_imp[:, j].astype(float) for j in range(nw)]
    cols.append(dtw_imp.astype(float))
    values = np.column_stack(cols)
    return FeatureMatrix(values, feature_names(windows), validity, session_id)
