"""Radar phase processing: unwrap, band-pass, respiration rate, motion gating.

The input is the phase series already extracted from the chest range bin
plus per-frame point-cloud summaries; everything upstream of that (range
FFT, bin selection, clustering) happens elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .errors import (
    EmptySignal,
    LengthMismatch,
    NoBreathDetected,
    NonFiniteSample,
    SampleRateTooLow,
    SignalTooShort,
    UnorderedFrames,
)
from .overrides import apply_overrides

INTERNAL_RATE = 20.0
PASSBAND = (0.1, 0.6)
FILTER_ORDER = 4
# physiological band implied by the 0.1-0.6 Hz passband
VALID_RATE = (60.0 * PASSBAND[0], 60.0 * PASSBAND[1])
EPOCH_SECONDS = 30.0


@dataclass(frozen=True)
class PhaseSeries:
    samples: np.ndarray
    sample_rate: float
    start_clock: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self):
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class RespWaveform:
    samples: np.ndarray
    sample_rate: float


@dataclass(frozen=True)
class FramePointSummary:
    frame_index: int
    point_count: int
    motion_amplitude: float


@dataclass(frozen=True)
class FrameSummaries:
    """Column-oriented frame summaries (one entry per radar frame)."""

    frame_index: np.ndarray
    point_count: np.ndarray
    motion_amplitude: np.ndarray

    @classmethod
    def from_records(cls, frames):
        frames = list(frames)
        return cls(
            np.array([f.frame_index for f in frames], dtype=np.int64),
            np.array([f.point_count for f in frames], dtype=np.int64),
            np.array([f.motion_amplitude for f in frames], dtype=np.float64),
        )

    def __len__(self):
        return int(self.frame_index.size)


@dataclass(frozen=True)
class MotionSeries:
    frame_index: np.ndarray
    moving: np.ndarray
    amplitude: np.ndarray
    frame_rate: float

    def epoch_of_frame(self, epoch_seconds=EPOCH_SECONDS):
        per_epoch = self.frame_rate * epoch_seconds
        return np.floor(self.frame_index / per_epoch + 1e-9).astype(np.int64)


@dataclass(frozen=True)
class RateSeries:
    """Respiration-rate samples on the epoch grid.

    ``rate`` and ``confidence`` have shape ``(n_epochs, samples_per_epoch)``;
    an INVALID sample is ``NaN`` with confidence 0.
    """

    rate: np.ndarray
    confidence: np.ndarray
    epoch_seconds: float = EPOCH_SECONDS

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.rate, dtype=np.float64))
        c = np.atleast_2d(np.asarray(self.confidence, dtype=np.float64))
        if r.ndim == 2 and np.ndim(self.rate) == 1:
            r, c = r.T, c.T
        if r.shape != c.shape:
            raise LengthMismatch("rate and confidence shapes differ")
        object.__setattr__(self, "rate", r)
        object.__setattr__(self, "confidence", c)

    @property
    def n_epochs(self):
        return self.rate.shape[0]

    @property
    def valid(self):
        return np.isfinite(self.rate)


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    confidence: float
    peak_rate: float
    spectral_rate: float

    @property
    def valid(self):
        return bool(np.isfinite(self.rate))


@dataclass(frozen=True)
class DSPConfig:
    count_threshold: int = 5
    amp_threshold: float = 0.5
    gate_fraction: float = 0.5
    prominence_fraction: float = 0.2
    min_peak_distance: float = 2.0
    fusion_tolerance: float = 3.0
    rate_window: float = 30.0
    rate_hop: float = 5.0
    spectral_rate: float = 5.0
    spectral_nfft: int = 4096
    min_amplitude: float = 1e-6
    valid_rate: tuple = field(default=VALID_RATE)

    def with_overrides(self, overrides):
        return apply_overrides(self, overrides)


DEFAULT_DSP = DSPConfig()


def _check_samples(x):
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("empty signal")
    if not np.all(np.isfinite(x)):
        raise NonFiniteSample("signal contains non-finite samples")
    return x


def _unwrap(x):
    d = np.diff(x)
    # jumps within +-pi (plus rounding slack) are left alone so that
    # unwrapping is idempotent
    jump = np.abs(d) > np.pi + 1e-9
    k = np.zeros_like(d)
    dm = np.mod(d[jump] + np.pi, 2 * np.pi) - np.pi
    dm[(dm == -np.pi) & (d[jump] > 0)] = np.pi
    k[jump] = np.round((dm - d[jump]) / (2 * np.pi))
    out = x.copy()
    out[1:] += 2 * np.pi * np.cumsum(k)
    return out


def unwrap_phase(wrapped):
    """Remove 2*pi discontinuities; accepts a PhaseSeries or an array."""
    if isinstance(wrapped, PhaseSeries):
        return replace(wrapped, samples=_unwrap(_check_samples(wrapped.samples)))
    return _unwrap(_check_samples(wrapped))


def fill_gaps(samples, unwrap=True):
    """Unwrap the finite samples and linearly bridge NaN gaps.

    Returns the filled array and the boolean mask of originally missing
    samples.
    """
    x = np.asarray(samples, dtype=np.float64)
    missing = ~np.isfinite(x)
    if missing.all():
        raise EmptySignal("no finite samples")
    idx = np.flatnonzero(~missing)
    good = _unwrap(x[idx]) if unwrap else x[idx]
    out = np.interp(np.arange(x.size), idx, good)
    return out, missing


def resample_linear(x, rate_in, rate_out=INTERNAL_RATE):
    """Linear resampling onto the same span; the last sample is held."""
    if rate_in == rate_out:
        return np.asarray(x, dtype=np.float64)
    n_out = int(round(x.size * rate_out / rate_in))
    t_out = np.arange(n_out) / rate_out
    t_in = np.arange(x.size) / rate_in
    return np.interp(t_out, t_in, x)


def _design_filter(fs=INTERNAL_RATE):
    return signal.butter(FILTER_ORDER, PASSBAND, btype="bandpass", fs=fs, output="sos")


_SOS = _design_filter()


def bandpass_respiration(unwrapped) -> RespWaveform:
    """Zero-phase 0.1-0.6 Hz Butterworth band-pass at the internal 20 Hz rate."""
    if isinstance(unwrapped, PhaseSeries):
        x, fs = unwrapped.samples, unwrapped.sample_rate
    else:
        x, fs = unwrapped, INTERNAL_RATE
    x = _check_samples(x)
    if fs < 2.0:
        raise SampleRateTooLow(f"sample rate {fs} Hz < 2 Hz")
    if x.size / fs < 10.0:
        raise SignalTooShort(f"{x.size / fs:.2f} s < 10 s")
    x = resample_linear(x, fs, INTERNAL_RATE)
    # default scipy padding: odd reflection over three filter lengths
    y = signal.sosfiltfilt(_SOS, x, padtype="odd")
    return RespWaveform(y, INTERNAL_RATE)


# -- respiration rate ------------------------------------------------------

def _refine(y, k):
    if 0 < k < y.size - 1:
        a, b, c = y[k - 1], y[k], y[k + 1]
        den = a - 2 * b + c
        if den != 0:
            return k + 0.5 * (a - c) / den
    return float(k)


def _peak_rate(x, fs, cfg):
    sd = x.std()
    if sd <= cfg.min_amplitude:
        return np.nan
    peaks, _ = signal.find_peaks(
        x, prominence=cfg.prominence_fraction * sd,
        distance=max(1, int(round(cfg.min_peak_distance * fs))))
    if peaks.size < 2:
        return np.nan
    t = np.array([_refine(x, p) for p in peaks]) / fs
    span = t[-1] - t[0]
    return 60.0 * (peaks.size - 1) / span if span > 0 else np.nan


def _spectral_rates(windows, fs, cfg):
    """Band-limited spectral peak for each row of ``windows``."""
    windows = np.atleast_2d(windows)
    step = max(1, int(np.floor(fs / cfg.spectral_rate + 1e-9)))
    w = windows[:, ::step]
    fs_d = fs / step
    w = (w - w.mean(axis=1, keepdims=True)) * np.hanning(w.shape[1])
    nfft = max(cfg.spectral_nfft, w.shape[1])
    mag = np.abs(np.fft.rfft(w, n=nfft, axis=1))
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs_d)
    band = np.flatnonzero((freqs >= PASSBAND[0]) & (freqs <= PASSBAND[1]))
    sub = mag[:, band]
    kmax = np.argmax(sub, axis=1)
    out = np.full(windows.shape[0], np.nan)
    amp = windows.std(axis=1)
    df = freqs[1] - freqs[0]
    for r, k in enumerate(kmax):
        if amp[r] <= cfg.min_amplitude:
            continue
        out[r] = 60.0 * (freqs[band[0]] + _refine(sub[r], k) * df)
    return out


def _fuse(peak, spectral, cfg):
    lo, hi = cfg.valid_rate
    if np.isfinite(peak) and np.isfinite(spectral):
        if abs(peak - spectral) <= cfg.fusion_tolerance:
            rate, conf = 0.5 * (peak + spectral), 1.0
        else:
            rate, conf = spectral, 0.5
    elif np.isfinite(spectral):
        rate, conf = spectral, 0.5
    elif np.isfinite(peak):
        rate, conf = peak, 0.5
    else:
        return np.nan, 0.0
    if not lo <= rate <= hi:
        return np.nan, 0.0
    return rate, conf


def estimate_respiration_rate(wave, epoch_window=30.0, config=DEFAULT_DSP, strict=False):
    """Fused peak/spectral respiration rate over the central ``epoch_window``.

    Returns a :class:`RateEstimate`; an undetectable breath gives a NaN rate
    unless ``strict`` is set, in which case ``NoBreathDetected`` is raised.
    """
    if isinstance(wave, RespWaveform):
        x, fs = np.asarray(wave.samples, dtype=np.float64), wave.sample_rate
    else:
        x, fs = np.asarray(wave, dtype=np.float64), INTERNAL_RATE
    n = int(round(epoch_window * fs))
    if epoch_window < 30.0 or x.size < n:
        raise SignalTooShort("rate estimation needs a window of at least 30 s")
    start = (x.size - n) // 2
    seg = x[start:start + n]
    peak = _peak_rate(seg, fs, config)
    spec = _spectral_rates(seg[None, :], fs, config)[0]
    rate, conf = _fuse(peak, spec, config)
    if strict and not np.isfinite(rate):
        raise NoBreathDetected("no periodic breathing found in window")
    return RateEstimate(rate, conf, peak, spec)


def respiration_rate_series(wave: RespWaveform, n_epochs, config=DEFAULT_DSP) -> RateSeries:
    """Rate samples every ``rate_hop`` seconds, each from a ``rate_window``
    window centred on the sample time and shifted inside the recording."""
    x, fs = np.asarray(wave.samples), wave.sample_rate
    n = int(round(config.rate_window * fs))
    if x.size < n:
        raise SignalTooShort("recording shorter than one rate window")
    k = max(1, int(round(EPOCH_SECONDS / config.rate_hop)))
    centres = (np.arange(n_epochs)[:, None] * EPOCH_SECONDS
               + (np.arange(k)[None, :] + 0.5) * (EPOCH_SECONDS / k)).ravel()
    starts = np.clip(np.round(centres * fs).astype(np.int64) - n // 2, 0, x.size - n)
    windows = x[starts[:, None] + np.arange(n)[None, :]]
    spec = _spectral_rates(windows, fs, config)
    rate = np.empty(starts.size)
    conf = np.empty(starts.size)
    for r in range(starts.size):
        peak = _peak_rate(windows[r], fs, config)
        rate[r], conf[r] = _fuse(peak, spec[r], config)
    return RateSeries(rate.reshape(n_epochs, k), conf.reshape(n_epochs, k))


# -- motion ------------------------------------------------------------------

def compute_motion_series(frames, frame_rate, config=DEFAULT_DSP) -> MotionSeries:
    """Flag frames as moving when either the point count or the amplitude
    reaches its threshold."""
    if not isinstance(frames, FrameSummaries):
        frames = FrameSummaries.from_records(frames)
    idx = np.asarray(frames.frame_index, dtype=np.int64)
    if idx.size > 1 and np.any(np.diff(idx) <= 0):
        raise UnorderedFrames("frame_index must be strictly increasing")
    counts = np.asarray(frames.point_count)
    amp = np.asarray(frames.motion_amplitude, dtype=np.float64)
    moving = (counts >= config.count_threshold) | (amp >= config.amp_threshold)
    return MotionSeries(idx, moving, amp, float(frame_rate))


def epoch_moving_fraction(motion: MotionSeries, n_epochs):
    """Fraction of each epoch's nominal frames flagged as moving.

    Frames absent from the table count as idle.
    """
    per_epoch = motion.frame_rate * EPOCH_SECONDS
    ep = motion.epoch_of_frame()
    keep = (ep >= 0) & (ep < n_epochs)
    counts = np.bincount(ep[keep], weights=motion.moving[keep].astype(float),
                         minlength=n_epochs)
    return counts / per_epoch


def gate_resp_rate(rates: RateSeries, moving_fraction, gate_fraction=DEFAULT_DSP.gate_fraction):
    """Invalidate every rate sample in epochs with too much movement."""
    frac = np.asarray(moving_fraction, dtype=np.float64)
    if frac.shape != (rates.n_epochs,):
        raise LengthMismatch(f"{frac.size} motion fractions for {rates.n_epochs} epochs")
    gated = frac > gate_fraction
    rate = rates.rate.copy()
    conf = rates.confidence.copy()
    rate[gated] = np.nan
    conf[gated] = 0.0
    return RateSeries(rate, conf, rates.epoch_seconds)


@dataclass(frozen=True)
class SessionSignals:
    """Everything the feature stage needs from one session."""

    waveform: RespWaveform
    rates: RateSeries
    motion: MotionSeries
    moving_fraction: np.ndarray
    missing_fraction: np.ndarray
    n_epochs: int


def process_session(phase: PhaseSeries, frames, frame_rate, n_epochs=None,
                    config=DEFAULT_DSP) -> SessionSignals:
    """Full chain from raw (possibly gappy, wrapped) phase to gated rates."""
    filled, missing = fill_gaps(phase.samples)
    wave = bandpass_respiration(PhaseSeries(filled, phase.sample_rate))
    if n_epochs is None:
        n_epochs = int(np.floor(phase.duration / EPOCH_SECONDS + 1e-9))
    per_epoch = int(round(phase.sample_rate * EPOCH_SECONDS))
    miss = np.zeros(n_epochs)
    m = missing[:n_epochs * per_epoch]
    full = m.size // per_epoch
    miss[:full] = m[:full * per_epoch].reshape(full, per_epoch).mean(axis=1)
    miss[full:] = 1.0
    rates = respiration_rate_series(wave, n_epochs, config)
    motion = compute_motion_series(frames, frame_rate, config)
    frac = epoch_moving_fraction(motion, n_epochs)
    rates = gate_resp_rate(rates, frac, config.gate_fraction)
    # samples that sat entirely in a bridged gap carry no breathing information
    missing_rows = miss > 0.5
    if missing_rows.any():
        r, c = rates.rate.copy(), rates.confidence.copy()
        r[missing_rows] = np.nan
        c[missing_rows] = 0.0
        rates = RateSeries(r, c)
    return SessionSignals(wave, rates, motion, frac, miss, n_epochs)
