"""Synthetic radar nights with known hypnograms.

Every magnitude here is a generator parameter chosen for plausibility, not a
measurement. Stages are drawn from a semi-Markov chain whose Deep and REM
transitions are tilted by night progress. Each epoch gets a breathing rate
from its stage profile. The phase signal is a sinusoid following that rate,
with smooth within-epoch jitter, noise and drift, and is finally wrapped to
(-pi, pi]. Frame summaries come from a bursty idle/moving chain whose duty
cycle is the stage's movement probability. Movement bursts also corrupt the
phase, which is what the motion gate exists to catch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dataio.hypnogram import EPOCH_SECONDS, OUTPUT_CODES, Hypnogram, Stage
from .dataio.session import (SessionRecord, SubjectMetadata, write_frame_table, write_hypnogram,
                             write_manifest, write_metadata, write_phase_table)
from .dsp import FrameSummaries, PhaseSeries
from .errors import InvalidTransitionMatrix
from .overrides import apply_overrides
from .seeding import derive_rng

TERMINAL = 4
STATE_NAMES = ("Wake", "Light", "Deep", "REM", "Terminal")
# PSG codes written for each stage; Light alternates between N1 and N2
_PSG = {Stage.WAKE: "W", Stage.DEEP: "N3", Stage.REM: "REM"}


@dataclass(frozen=True)
class StageProfile:
    resp_rate_mean: float
    resp_rate_sd: float
    resp_irregularity: float
    movement_prob_per_frame: float
    movement_amp_mean: float

    def __post_init__(self):
        if not 8.0 <= self.resp_rate_mean <= 24.0:
            raise ValueError("resp_rate_mean must lie in [8, 24] breaths/min")
        if not 0.0 <= self.movement_prob_per_frame <= 1.0:
            raise ValueError("movement_prob_per_frame must lie in [0, 1]")
        if self.resp_rate_sd < 0 or self.resp_irregularity < 0 or self.movement_amp_mean <= 0:
            raise ValueError("profile spreads must be >= 0 and amplitude > 0")


DEFAULT_PROFILES = (
    StageProfile(16.0, 3.0, 0.8, 0.15, 3.0),
    StageProfile(14.0, 1.5, 0.4, 0.03, 1.5),
    StageProfile(12.0, 0.6, 0.15, 0.005, 1.0),
    StageProfile(15.0, 2.5, 0.9, 0.01, 1.0),
)

# rows: from Wake, Light, Deep, REM, Terminal; columns add Terminal last
DEFAULT_TRANSITIONS = (
    (0.0, 0.75, 0.0, 0.10, 0.15),
    (0.35, 0.0, 0.35, 0.30, 0.0),
    (0.10, 0.80, 0.0, 0.10, 0.0),
    (0.35, 0.60, 0.0, 0.0, 0.05),
    (0.0, 0.0, 0.0, 0.0, 1.0),
)


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings; lengths in minutes unless noted.

    ``night_duration`` is the mean time in bed, drawn per night with
    ``night_duration_sd``. ``target_tst`` and ``target_se`` record the
    aggregate ranges the defaults were calibrated against.
    """

    seed: int = 0
    night_duration: float = 535.0
    night_duration_sd: float = 60.0
    transitions: tuple = DEFAULT_TRANSITIONS
    dwell_means: tuple = (5.0, 12.0, 13.0, 14.0)
    initial_wake_mean: float = 45.0
    terminal_after: float = 0.8
    profiles: tuple = DEFAULT_PROFILES
    target_tst: tuple = (347.3, 471.3)
    target_se: tuple = (0.627, 0.904)
    sample_rate: float = 10.0
    frame_rate: float = 10.0
    phase_amplitude: float = 0.5
    noise_sd: float = 0.03
    drift_sd: float = 0.002
    jitter_timescale: float = 4.0
    subject_rate_sd: float = 0.5
    burst_frames: float = 20.0
    corruption_sd: float = 0.6
    dropout_per_hour: float = 0.5
    dropout_seconds: tuple = (1.0, 8.0)

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        if P.shape != (5, 5) or np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
            raise InvalidTransitionMatrix("transitions must be a 5x5 row-stochastic matrix")
        if np.any(np.diag(P)[:4] != 0):
            raise InvalidTransitionMatrix("self-transitions are expressed by dwell times")
        if len(self.dwell_means) != 4 or min(self.dwell_means) <= 0 or self.initial_wake_mean <= 0:
            raise ValueError("dwell times must be > 0")
        if len(self.profiles) != 4:
            raise ValueError("need one StageProfile per stage")
        if self.night_duration <= 0 or self.sample_rate <= 0 or self.frame_rate <= 0:
            raise ValueError("durations and rates must be > 0")

    def with_overrides(self, overrides):
        """Apply ``key=value`` string overrides for scalar fields."""
        return apply_overrides(self, overrides, locked=("transitions", "profiles"))


# -- hypnogram ---------------------------------------------------------------

def _dwell(rng, mean_minutes):
    return int(rng.geometric(min(1.0, EPOCH_SECONDS / 60.0 / mean_minutes)))


def generate_hypnogram(config: SynthConfig = SynthConfig(), seed=None, n_epochs=None,
                       start_clock=0.0) -> Hypnogram:
    """Semi-Markov hypnogram that opens with sleep-onset wake.

    At night progress ``p`` the Deep column is scaled by ``2(1 - p)`` and the
    REM column by ``2p`` before renormalising. The terminal state, which
    holds Wake to the end of the record, is only reachable once ``p`` passes
    ``terminal_after``.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    if n_epochs is None:
        minutes = max(60.0, rng.normal(config.night_duration, config.night_duration_sd))
        n_epochs = int(round(minutes * 60.0 / EPOCH_SECONDS))
    P = np.asarray(config.transitions, dtype=np.float64)
    out = np.empty(n_epochs, dtype=np.int64)
    state, t = int(Stage.WAKE), 0
    length = _dwell(rng, config.initial_wake_mean)
    while t < n_epochs:
        out[t:t + length] = state
        t += length
        if t >= n_epochs:
            break
        p = t / n_epochs
        row = P[state].copy()
        row[Stage.DEEP] *= 2.0 * (1.0 - p)
        row[Stage.REM] *= 2.0 * p
        if p < config.terminal_after:
            row[TERMINAL] = 0.0
        if row.sum() <= 0:
            row = P[state].copy()
            row[TERMINAL] = 0.0
        nxt = int(rng.choice(5, p=row / row.sum()))
        if nxt == TERMINAL:
            out[t:] = Stage.WAKE
            break
        state = nxt
        length = _dwell(rng, config.dwell_means[state])
    return Hypnogram(out, start_clock)


# -- signals -----------------------------------------------------------------

def _smooth_noise(rng, n, fs, timescale):
    """Unit-variance noise with roughly ``timescale`` seconds of memory."""
    a = np.exp(-1.0 / (timescale * fs))
    z = rng.normal(size=n) * np.sqrt(1 - a * a)
    y, _ = lfilter([1.0], [1.0, -a], z, zi=[a * rng.normal()])
    return y


def _motion_chain(rng, stages, per_epoch_frames, probs, burst):
    """Idle/moving run lengths with stage-dependent idle-run means."""
    n = stages.size * per_epoch_frames
    moving = np.zeros(n, dtype=bool)
    frame_stage = np.repeat(stages, per_epoch_frames)
    t = 0
    while t < n:
        pm = probs[frame_stage[t]]
        if pm <= 0:
            # skip to the next frame whose stage allows movement
            nxt = np.flatnonzero(probs[frame_stage[t:]] > 0)
            if nxt.size == 0:
                break
            t += int(nxt[0])
            continue
        idle_mean = burst * (1.0 - pm) / pm
        t += int(rng.geometric(1.0 / (1.0 + idle_mean))) - 1
        if t >= n:
            break
        k = int(rng.geometric(1.0 / burst))
        moving[t:t + k] = True
        t += k
    return moving, frame_stage


def synth_session(hypnogram: Hypnogram, config: SynthConfig = SynthConfig(), seed=None,
                  metadata: SubjectMetadata | None = None, session_id="synthetic"):
    """Signals for a given hypnogram; returns a :class:`SessionRecord`."""
    base = config.seed if seed is None else seed
    rng = derive_rng(base, "signals")
    stages = np.asarray(hypnogram.stages)
    stages = np.where(stages == Stage.UNSCORED, Stage.WAKE, stages)
    n_ep = stages.size
    fs, fr = config.sample_rate, config.frame_rate
    per = int(round(fs * EPOCH_SECONDS))
    n = n_ep * per
    prof = config.profiles

    mean = np.array([p.resp_rate_mean for p in prof])
    sd = np.array([p.resp_rate_sd for p in prof])
    irr = np.array([p.resp_irregularity for p in prof])
    offset = rng.normal(0.0, config.subject_rate_sd)
    ep_rate = mean[stages] + offset + sd[stages] * rng.normal(size=n_ep)
    # step between epochs, softened over a few seconds so frequency stays smooth
    inst = np.repeat(ep_rate, per)
    k = int(fs * 3)
    inst = np.convolve(np.pad(inst, (k, k), mode="edge"), np.ones(2 * k + 1) / (2 * k + 1), "valid")
    jitter = np.repeat(sd[stages] * irr[stages], per) * _smooth_noise(rng, n, fs, config.jitter_timescale)
    rate = np.clip(inst + jitter, 7.5, 33.0)
    phi = 2.0 * np.pi * np.cumsum(rate / 60.0) / fs + rng.uniform(0, 2 * np.pi)
    amp = config.phase_amplitude * (1.0 + 0.1 * _smooth_noise(rng, n, fs, 20.0))
    x = amp * np.sin(phi)
    x += config.noise_sd * rng.normal(size=n)
    x += np.cumsum(config.drift_sd * rng.normal(size=n))

    # frames
    mrng = derive_rng(base, "motion")
    fper = int(round(fr * EPOCH_SECONDS))
    probs = np.array([p.movement_prob_per_frame for p in prof])
    moving, fstage = _motion_chain(mrng, stages, fper, probs, config.burst_frames)
    nf = moving.size
    amp_mean = np.array([p.movement_amp_mean for p in prof])[fstage]
    counts = np.where(moving, 5 + mrng.poisson(15.0, nf), mrng.poisson(0.5, nf))
    counts = np.where(~moving, np.minimum(counts, 4), counts)
    amplitude = np.where(moving, mrng.gamma(2.0, amp_mean / 2.0),
                         np.minimum(mrng.gamma(2.0, 0.025, nf), 0.45))
    frames = FrameSummaries(np.arange(nf, dtype=np.int64), counts.astype(np.int64),
                            np.round(amplitude, 4))

    # movement displaces the chest-range phase
    mv_samples = np.repeat(moving, int(round(fs / fr))) if fs >= fr else moving[::int(round(fr / fs))]
    mv_samples = mv_samples[:n]
    if mv_samples.any():
        kick = np.where(mv_samples, config.corruption_sd * mrng.normal(size=n), 0.0)
        x += np.cumsum(kick)

    # short dropouts
    drng = derive_rng(base, "dropout")
    hours = n / fs / 3600.0
    for _ in range(int(drng.poisson(config.dropout_per_hour * hours))):
        dur = int(drng.uniform(*config.dropout_seconds) * fs)
        s0 = int(drng.integers(0, max(1, n - dur)))
        x[s0:s0 + dur] = np.nan

    wrapped = np.angle(np.exp(1j * x))
    wrapped[np.isnan(x)] = np.nan
    phase = PhaseSeries(wrapped, fs, hypnogram.start_clock)
    if metadata is None:
        metadata = synth_subject(derive_rng(base, "subject"), session_id)
        metadata = replace(metadata, lights_off_clock=hypnogram.start_clock)
    return SessionRecord(session_id, metadata, phase, frames, fr, hypnogram)


# -- cohorts -----------------------------------------------------------------

def synth_subject(rng, subject_id) -> SubjectMetadata:
    """Demographics drawn to resemble a sleep-clinic population."""
    gender = "M" if rng.uniform() < 670.0 / 1022.0 else "F"
    age = float(np.clip(rng.normal(44.0, 15.9), 18.0, 90.0))
    bmi = float(np.clip(rng.normal(26.8, 5.4), 15.0, 50.0))
    ahi = float(rng.lognormal(2.024, 1.109))
    lights_off = float(rng.uniform(22.0, 24.0) * 3600.0)
    return SubjectMetadata(subject_id, gender, round(age, 1), round(bmi, 1), round(ahi, 2),
                           round(lights_off, 1))


def psg_codes(hypnogram: Hypnogram, rng):
    """Raw PSG labels consistent with the merged stages."""
    out = []
    for s in hypnogram.stages:
        s = Stage(int(s))
        if s == Stage.LIGHT:
            out.append("N1" if rng.uniform() < 0.15 else "N2")
        elif s == Stage.UNSCORED:
            out.append(OUTPUT_CODES[Stage.UNSCORED])
        else:
            out.append(_PSG[s])
    return out


def synth_night(index, config: SynthConfig = SynthConfig()):
    """Subject, hypnogram and session for night ``index`` of a cohort."""
    sid = f"S{index:04d}"
    meta = synth_subject(derive_rng(config.seed, "subject", index), sid)
    hyp = generate_hypnogram(config, derive_rng(config.seed, "hypnogram", index).integers(2**63),
                             start_clock=meta.lights_off_clock)
    sess = synth_session(hyp, config, int(derive_rng(config.seed, "session", index).integers(2**63)),
                         metadata=meta, session_id=sid)
    return sess


def synth_cohort(n_nights, config: SynthConfig = SynthConfig()):
    return [synth_night(i, config) for i in range(n_nights)]


def write_session(session: SessionRecord, out_dir, seed=0):
    """Write one session in the dataio formats; returns its manifest entry."""
    out_dir = Path(out_dir)
    sid = session.session_id
    d = out_dir / sid
    d.mkdir(parents=True, exist_ok=True)
    write_phase_table(d / "phase.csv", session.phase)
    write_frame_table(d / "frames.csv", session.frames)
    codes = psg_codes(session.hypnogram, derive_rng(seed, "psg", sid))
    write_hypnogram(d / "hypnogram.csv", session.hypnogram, psg_codes=codes)
    write_metadata(d / "metadata.json", session.metadata)
    return {"session_id": sid, "metadata": f"{sid}/metadata.json", "phase": f"{sid}/phase.csv",
            "frames": f"{sid}/frames.csv", "hypnogram": f"{sid}/hypnogram.csv",
            "frame_rate": session.frame_rate}


def write_cohort(sessions, out_dir, seed=0, manifest_name="manifest.jsonl"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = [write_session(s, out_dir, seed) for s in sessions]
    write_manifest(out_dir / manifest_name, entries)
    return out_dir / manifest_name


__all__ = [
    "StageProfile", "SynthConfig", "DEFAULT_PROFILES", "DEFAULT_TRANSITIONS", "TERMINAL",
    "generate_hypnogram", "synth_session", "synth_subject", "synth_night", "synth_cohort",
    "psg_codes", "write_session", "write_cohort",
]
