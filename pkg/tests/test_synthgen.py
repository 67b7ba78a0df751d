import filecmp

import numpy as np
import pytest

from radar_somnia.dataio.hypnogram import Hypnogram, Stage
from radar_somnia.dsp import DEFAULT_DSP, process_session
from radar_somnia.errors import InvalidTransitionMatrix
from radar_somnia.pipeline import session_features
from radar_somnia.synthgen import (
    DEFAULT_PROFILES, DEFAULT_TRANSITIONS, StageProfile, SynthConfig,
    generate_hypnogram, psg_codes, synth_cohort, synth_night, synth_session,
    synth_subject, write_cohort,
)

CFG = SynthConfig()


def _pooled_effect(a, b):
    a, b = np.asarray(a), np.asarray(b)
    pooled = np.sqrt(((a.size - 1) * a.var(ddof=1) + (b.size - 1) * b.var(ddof=1)) / (a.size + b.size - 2))
    return abs(a.mean() - b.mean()) / pooled


@pytest.fixture(scope="module")
def nights200():
    return [generate_hypnogram(CFG, seed=s) for s in range(200)]


class TestConfig:
    def test_defaults_valid(self):
        P = np.array(DEFAULT_TRANSITIONS)
        np.testing.assert_allclose(P.sum(axis=1), 1.0)
        for p in DEFAULT_PROFILES:
            assert 8 <= p.resp_rate_mean <= 24

    def test_ordinal_profiles(self):
        w, lt, d, r = DEFAULT_PROFILES
        assert d.resp_rate_mean < lt.resp_rate_mean < w.resp_rate_mean
        assert d.resp_rate_sd < r.resp_rate_sd
        assert w.movement_prob_per_frame > lt.movement_prob_per_frame > d.movement_prob_per_frame

    def test_row_sums(self):
        bad = [list(r) for r in DEFAULT_TRANSITIONS]
        bad[0][1] = 0.5
        with pytest.raises(InvalidTransitionMatrix):
            SynthConfig(transitions=tuple(map(tuple, bad)))

    def test_self_transition(self):
        bad = [list(r) for r in DEFAULT_TRANSITIONS]
        bad[1] = [0.0, 0.35, 0.35, 0.30, 0.0]
        with pytest.raises(InvalidTransitionMatrix):
            SynthConfig(transitions=tuple(map(tuple, bad)))

    def test_dwell_positive(self):
        with pytest.raises(ValueError):
            SynthConfig(dwell_means=(5.0, 0.0, 13.0, 14.0))

    def test_profile_invariants(self):
        with pytest.raises(ValueError):
            StageProfile(30.0, 1.0, 0.1, 0.1, 1.0)
        with pytest.raises(ValueError):
            StageProfile(12.0, 1.0, 0.1, 1.5, 1.0)

    def test_overrides(self):
        assert CFG.with_overrides({"night_duration": "480"}).night_duration == 480.0
        with pytest.raises(KeyError):
            CFG.with_overrides({"profiles": "x"})


class TestHypnogram:
    def test_deterministic(self):
        a = generate_hypnogram(CFG, seed=3)
        b = generate_hypnogram(CFG, seed=3)
        assert np.array_equal(a.stages, b.stages)

    def test_starts_awake(self, nights200):
        assert all(h.stages[0] == Stage.WAKE for h in nights200)

    def test_fixed_length(self):
        assert len(generate_hypnogram(CFG, seed=1, n_epochs=123)) == 123

    def test_deep_in_first_half(self, nights200):
        first, second = [], []
        for h in nights200:
            half = len(h) // 2
            first.append((h.stages[:half] == Stage.DEEP).sum() * 0.5)
            second.append((h.stages[half:] == Stage.DEEP).sum() * 0.5)
        assert np.mean(first) > np.mean(second)

    def test_tst_band(self, nights200):
        tst = np.mean([h.tst for h in nights200])
        assert 409.3 - 62 <= tst <= 409.3 + 62

    def test_all_stages_present(self, nights200):
        seen = set(np.concatenate([h.stages for h in nights200]).tolist())
        assert seen == {0, 1, 2, 3}


class TestSession:
    def test_shapes(self, short_night):
        s = short_night
        assert s.phase.samples.size == s.n_epochs * 300
        assert len(s.frames) == s.n_epochs * 300
        assert np.all(np.diff(s.frames.frame_index) > 0)
        assert np.all(s.frames.motion_amplitude >= 0)

    def test_phase_wrapped(self, short_night):
        x = short_night.phase.samples
        x = x[np.isfinite(x)]
        assert np.all(np.abs(x) <= np.pi)

    def test_deterministic(self):
        hyp = generate_hypnogram(CFG, seed=2, n_epochs=40)
        a = synth_session(hyp, CFG, seed=9)
        b = synth_session(hyp, CFG, seed=9)
        assert a.phase.samples.tobytes() == b.phase.samples.tobytes()
        assert a.frames.motion_amplitude.tobytes() == b.frames.motion_amplitude.tobytes()

    def test_deep_rates_steadier_than_rem(self):
        sds = {}
        for stage in (Stage.DEEP, Stage.REM):
            vals = []
            for i in range(50):
                s = synth_session(Hypnogram(np.full(40, int(stage))), CFG, seed=1000 * int(stage) + i)
                r = process_session(s.phase, s.frames, s.frame_rate, n_epochs=40).rates.rate
                vals.append(np.nanstd(r))
            sds[stage] = np.mean(vals)
        assert sds[Stage.DEEP] < sds[Stage.REM]

    def test_no_movement_no_gating(self):
        still = tuple(StageProfile(p.resp_rate_mean, p.resp_rate_sd, p.resp_irregularity, 0.0,
                                   p.movement_amp_mean) for p in DEFAULT_PROFILES)
        cfg = SynthConfig(profiles=still, dropout_per_hour=0.0)
        hyp = generate_hypnogram(cfg, seed=5, n_epochs=200)
        s = synth_session(hyp, cfg, seed=6)
        sig = process_session(s.phase, s.frames, s.frame_rate, n_epochs=s.n_epochs)
        assert not np.any(sig.moving_fraction > DEFAULT_DSP.gate_fraction)
        assert not np.any(sig.moving_fraction > 0)

    def test_wake_deep_separable(self):
        rate_sd = {0: [], 2: []}
        moves = {0: [], 2: []}
        for i in range(6):
            s = synth_night(i, CFG)
            fm = session_features(s)
            for st in rate_sd:
                m = s.hypnogram.stages == st
                rate_sd[st] += list(fm.column("rr90_std")[m])
                moves[st] += list(fm.column("mv_total_frames")[m])
        assert _pooled_effect(rate_sd[0], rate_sd[2]) >= 1.0
        assert _pooled_effect(moves[0], moves[2]) >= 1.0


class TestCohort:
    def test_subject(self):
        m = synth_subject(np.random.default_rng(0), "S0001")
        assert m.subject_id == "S0001" and m.ahi >= 0 and m.age > 0
        assert 22 * 3600 <= m.lights_off_clock <= 24 * 3600

    def test_psg_codes(self):
        h = Hypnogram([0, 1, 1, 2, 3])
        codes = psg_codes(h, np.random.default_rng(0))
        assert codes[0] == "W" and codes[3] == "N3" and codes[4] == "REM"
        assert set(codes[1:3]) <= {"N1", "N2"}

    def test_night_ids(self):
        a, b = synth_cohort(2, SynthConfig(seed=4, night_duration=60, night_duration_sd=1))
        assert (a.session_id, b.session_id) == ("S0000", "S0001")

    def test_files_identical(self, tmp_path):
        cfg = SynthConfig(seed=7, night_duration=45, night_duration_sd=1)
        for d in ("a", "b"):
            write_cohort(synth_cohort(2, cfg), tmp_path / d, seed=7)
        cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
        assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
        for sub in cmp.common_dirs:
            assert not cmp.subdirs[sub].diff_files

    def test_written_files_load(self, tmp_path):
        from radar_somnia.dataio import load_session, read_manifest

        cfg = SynthConfig(seed=8, night_duration=45, night_duration_sd=1)
        (s,) = synth_cohort(1, cfg)
        manifest = write_cohort([s], tmp_path, seed=8)
        back = load_session(read_manifest(manifest)[0])
        assert np.array_equal(back.hypnogram.stages, s.hypnogram.stages)
        assert back.start_clock == s.start_clock
        np.testing.assert_allclose(back.phase.samples, s.phase.samples, atol=1e-5, equal_nan=True)
