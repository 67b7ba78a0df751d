import numpy as np
import pytest
from hypothesis import given, strategies as st

from radar_somnia.dataio.hypnogram import Hypnogram, Stage
from radar_somnia.errors import EmptyMatrix, LengthMismatch, NoSleepDetected, TooFewSessions
from radar_somnia.evaluation import (
    SE_GROUPS, Boundaries, ConfusionMatrix, SessionEval, bland_altman,
    boundary_error_stats, classification_metrics, cohen_kappa, confusion_matrix,
    duration_bland_altman, evaluate_cohort, loa_width, se_group, sleep_boundaries,
    sleep_wake_counts, sleep_wake_session_metrics, stage_duration_bland_altman,
    stage_durations, stratified_report,
)

from _oracles import count_metrics

W, L, D, R, U = (int(s) for s in Stage)


def _pair(rng, n, agree=0.6):
    t = rng.integers(0, 4, size=n)
    p = np.where(rng.random(n) < agree, t, rng.integers(0, 4, size=n))
    return t, p


class TestConfusion:
    def test_identical_diagonal(self):
        h = Hypnogram([0, 1, 2, 3, 1, 1])
        c = confusion_matrix(h, h).counts
        assert np.count_nonzero(c - np.diag(np.diag(c))) == 0
        assert np.diag(c).tolist() == [1, 3, 1, 1]

    def test_hand_counts(self):
        c = confusion_matrix([W, W, L], [W, L, L]).counts
        assert c[W, W] == 1 and c[W, L] == 1 and c[L, L] == 1 and c.sum() == 3

    def test_row_normalized(self, rng):
        t, p = _pair(rng, 200)
        rn = confusion_matrix(t, p).row_normalized()
        np.testing.assert_allclose(rn.sum(axis=1), 1.0)

    def test_unscored_and_excluded_dropped(self):
        cm = confusion_matrix([W, U, L, L], [W, W, D, L], excluded=[False, False, True, False])
        assert cm.total == 2

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion_matrix([0, 1], [0])

    def test_addition(self):
        a = confusion_matrix([0, 1], [0, 1])
        assert (a + a).total == 4


class TestMetrics:
    def test_perfect(self):
        r = classification_metrics(confusion_matrix([0, 1, 2, 3, 3], [0, 1, 2, 3, 3]))
        assert (r.accuracy, r.macro_f1, r.kappa) == (1.0, 1.0, 1.0)

    def test_hand_case(self):
        r = classification_metrics(ConfusionMatrix(np.array([[45, 5], [10, 40]]), ("A", "B")))
        assert r.accuracy == 0.85
        assert r.kappa == 0.7
        assert r.f1[0] == pytest.approx(0.857, abs=5e-4)
        assert r.f1[1] == pytest.approx(0.842, abs=5e-4)
        # exact value (6/7 + 16/19) / 2; 0.849 is its three-decimal truncation
        assert r.macro_f1 == pytest.approx((6 / 7 + 16 / 19) / 2, abs=1e-15)
        assert int(r.macro_f1 * 1000) == 849

    def test_degenerate_kappa(self):
        assert cohen_kappa(np.array([[5, 0], [0, 0]])) == 0.0

    def test_empty(self):
        with pytest.raises(EmptyMatrix):
            classification_metrics(ConfusionMatrix(np.zeros((4, 4), dtype=int)))

    def test_absent_class_excluded_from_macro(self):
        r = classification_metrics(confusion_matrix([0, 0, 1], [0, 0, 1]))
        assert r.macro_f1 == 1.0

    @pytest.mark.parametrize("trial", range(20))
    def test_brute_force(self, trial):
        rng = np.random.default_rng(trial)
        t, p = _pair(rng, int(rng.integers(1, 1001)), agree=rng.random())
        r = classification_metrics(confusion_matrix(t, p))
        ref = count_metrics(t.tolist(), p.tolist(), 4)
        assert r.accuracy == ref["accuracy"]
        assert list(r.precision) == ref["precision"]
        assert list(r.recall) == ref["recall"]
        assert list(r.f1) == pytest.approx(ref["f1"], abs=1e-15)
        assert r.macro_f1 == pytest.approx(ref["macro_f1"], abs=1e-12)
        assert r.kappa == pytest.approx(ref["kappa"], abs=1e-12)

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=200))
    def test_ranges(self, pairs):
        t, p = zip(*pairs)
        r = classification_metrics(confusion_matrix(list(t), list(p)))
        assert 0 <= r.accuracy <= 1 and 0 <= r.macro_f1 <= 1
        assert -1 <= r.kappa <= 1
        assert all(0 <= f <= 1 for f in r.f1)

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=100))
    def test_kappa_one_iff_diagonal(self, pairs):
        t, p = zip(*pairs)
        c = confusion_matrix(list(t), list(p)).counts
        diagonal = np.count_nonzero(c - np.diag(np.diag(c))) == 0
        multi = np.count_nonzero(np.diag(c)) > 1
        k = cohen_kappa(c)
        if diagonal and multi:
            assert k == 1.0
        if k == 1.0:
            assert diagonal

    def test_kappa_matches_permutation_estimate(self, rng):
        for _ in range(3):
            t, p = _pair(rng, 1000, agree=rng.uniform(0.3, 0.9))
            po = np.mean(t == p)
            pe = np.mean([np.mean(t == rng.permutation(p)) for _ in range(300)])
            k_perm = (po - pe) / (1 - pe)
            k = classification_metrics(confusion_matrix(t, p)).kappa
            assert abs(k - k_perm) < 0.02


class TestSleepWake:
    def test_identical(self):
        assert sleep_wake_counts([0, 1, 2, 0], [0, 1, 2, 0]) == (1.0, 1.0)

    def test_sensitivity(self):
        t = [1] * 10 + [0] * 5
        p = [1] * 9 + [0] + [0] * 5
        sens, spec = sleep_wake_counts(t, p)
        assert sens == 0.9 and spec == 1.0

    def test_all_sleep_specificity_excluded(self):
        rep = sleep_wake_session_metrics([([1, 2, 3], [1, 2, 3]), ([0, 1], [0, 1])])
        assert np.isnan(rep.specificity[0])
        assert rep.specificity_summary.n == 1
        assert rep.sensitivity_summary.n == 2

    def test_summary_sd(self):
        rep = sleep_wake_session_metrics([([1, 1], [1, 1]), ([1, 1], [1, 0])])
        assert rep.sensitivity_summary.mean == 0.75
        assert rep.sensitivity_summary.sd == pytest.approx(np.std([1.0, 0.5], ddof=1))


class TestBoundaries:
    def test_example(self):
        b = sleep_boundaries([W, W, L, L, W, D, R, W])
        assert (b.onset, b.offset) == (1.0, 3.5)

    def test_all_wake(self):
        with pytest.raises(NoSleepDetected):
            sleep_boundaries([W, W, W])

    def test_from_zero(self):
        assert sleep_boundaries([L, W]).onset == 0.0

    def test_identical(self):
        b = [Boundaries(10.0, 400.0), Boundaries(3.0, 200.0)]
        rep = boundary_error_stats(b, b)
        assert rep.onset.bias == 0 and rep.onset.mae == 0
        assert rep.offset.bias == 0 and rep.offset.mae == 0

    def test_diffs(self):
        t = [Boundaries(5.0, 10.0), Boundaries(5.0, 10.0)]
        p = [Boundaries(4.0, 10.0), Boundaries(6.0, 10.0)]
        rep = boundary_error_stats(t, p)
        assert rep.onset.bias == 0.0 and rep.onset.mae == 1.0

    def test_too_few(self):
        with pytest.raises(TooFewSessions):
            boundary_error_stats([Boundaries(0, 1)], [Boundaries(0, 1)])

    @pytest.mark.parametrize("k", [1, 2, 3, -2])
    def test_shift_recovered(self, k, rng):
        trues, preds = [], []
        for _ in range(6):
            s = np.zeros(200, dtype=int)
            a, b = int(rng.integers(10, 40)), int(rng.integers(150, 190))
            s[a:b] = rng.integers(1, 4, size=b - a)
            trues.append(sleep_boundaries(s))
            preds.append(sleep_boundaries(np.roll(s, k)))
        rep = boundary_error_stats(trues, preds)
        assert rep.onset.bias == 0.5 * k and rep.offset.bias == 0.5 * k
        assert rep.onset.mae == abs(0.5 * k)

    @given(st.lists(st.floats(-60, 60), min_size=2, max_size=40))
    def test_report_invariants(self, diffs):
        t = [Boundaries(100.0, 400.0)] * len(diffs)
        p = [Boundaries(100.0 + d, 400.0) for d in diffs]
        on = boundary_error_stats(t, p).onset
        assert on.mae >= abs(on.bias) - 1e-9
        assert on.ci_low <= on.bias <= on.ci_high


class TestBlandAltman:
    def test_identical(self):
        h = [Hypnogram([0, 1, 1, 2, 3]), Hypnogram([0, 0, 1, 3, 3])]
        res = stage_duration_bland_altman(h, h)
        for v in res.per_stage.values():
            assert (v.bias, v.loa_low, v.loa_high, v.loa_coverage) == (0.0, 0.0, 0.0, 1.0)

    def test_loa_formula(self, rng):
        t = rng.normal(100, 20, size=50)
        s = bland_altman(t, t + rng.normal(3, 10, size=50))
        assert s.loa_low == s.bias - 1.96 * s.sd_diff
        assert s.loa_high == s.bias + 1.96 * s.sd_diff
        assert 0 <= s.loa_coverage <= 1

    def test_width(self):
        assert loa_width(24.5) == pytest.approx(96.04, abs=1e-9)

    def test_normal_coverage(self, rng):
        t = rng.normal(90, 40, size=1000)
        s = bland_altman(t, t + rng.normal(5, 25, size=1000))
        assert s.loa_coverage >= 0.9

    def test_durations_sum(self):
        h = Hypnogram([0, 1, 4, 2, 3, 1])
        d = stage_durations(h)
        assert d.sum() == 0.5 * 5
        assert d.tolist() == [0.5, 1.0, 0.5, 0.5]

    def test_pred_counted_on_scored_epochs(self):
        true = [Hypnogram([0, 1, 4]), Hypnogram([1, 1, 1])]
        pred = [Hypnogram([0, 1, 1]), Hypnogram([1, 2, 1])]
        res = stage_duration_bland_altman(true, pred)
        assert res.pred_durations.sum(axis=1).tolist() == res.true_durations.sum(axis=1).tolist()

    def test_table_triples(self, rng):
        t = rng.uniform(50, 150, size=(10, 4))
        p = t + rng.normal(size=(10, 4))
        rows = duration_bland_altman(t, p).table()
        assert [r[0] for r in rows] == ["Wake", "Light", "Deep", "REM"]
        assert rows[0][1] == pytest.approx(t[:, 0].mean())
        assert rows[0][5] == pytest.approx((p - t)[:, 0].mean())

    def test_too_few(self):
        with pytest.raises(TooFewSessions):
            stage_duration_bland_altman([Hypnogram([0])], [Hypnogram([0])])


class TestStratification:
    def test_ahi_edges(self):
        from radar_somnia.dataio.split import ahi_group

        assert ahi_group(5.0) == "Normal"
        assert ahi_group(15.0) == "Mild"
        assert ahi_group(30.0) == "Moderate"
        assert ahi_group(30.01) == "Severe"

    def test_se_edges(self):
        assert se_group(0.80) == SE_GROUPS[0]
        assert se_group(0.7999) == SE_GROUPS[1]
        assert se_group(0.60) == SE_GROUPS[1]
        assert se_group(0.5999) == SE_GROUPS[2]

    def test_single_group(self, rng):
        reps = []
        for _ in range(5):
            t, p = _pair(rng, 100)
            reps.append((2.0, classification_metrics(confusion_matrix(t, p))))
        out = stratified_report(reps, "ahi")
        assert out["Normal"].n == 5
        assert out["Normal"].accuracy[0] == pytest.approx(np.mean([r.accuracy for _, r in reps]))
        assert out["Severe"].n == 0


class TestCohort:
    def _sessions(self, rng, n=4, perfect=False):
        out = []
        for i in range(n):
            s = np.zeros(120, dtype=int)
            s[10:110] = rng.integers(1, 4, size=100)
            t = Hypnogram(s)
            p = t if perfect else Hypnogram(np.where(rng.random(120) < 0.8, s, rng.integers(0, 4, 120)))
            out.append(SessionEval(f"S{i}", t, p, ahi=float(rng.uniform(0, 40))))
        return out

    def test_perfect(self, rng):
        rep = evaluate_cohort(self._sessions(rng, perfect=True))
        assert rep.pooled.accuracy == 1.0 and rep.pooled.kappa == 1.0
        assert rep.boundaries.onset.bias == 0.0

    def test_sections_and_files(self, rng, tmp_path):
        import json

        rep = evaluate_cohort(self._sessions(rng))
        names = [s["section"] for s in rep.sections()]
        assert names == ["epoch_pooled", "subject_level", "sleep_wake", "boundaries",
                         "stage_durations", "by_ahi", "by_se"]
        rep.write(tmp_path)
        lines = (tmp_path / "report.jsonl").read_text().splitlines()
        assert [json.loads(x)["section"] for x in lines] == names
        csv_lines = (tmp_path / "sessions.csv").read_text().splitlines()
        assert csv_lines[0].startswith("session_id,accuracy,macro_f1,kappa,onset_diff,offset_diff")
        assert len(csv_lines) == 5
        assert "epoch-pooled" in (tmp_path / "report.txt").read_text()

    def test_empty(self):
        with pytest.raises(TooFewSessions):
            evaluate_cohort([])
