"""Agreement statistics between reference and predicted hypnograms.

Epoch-level metrics work on a confusion matrix (rows true, columns
predicted). Session-level summaries aggregate per night first and then
across nights. Durations and boundaries are in minutes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataio.hypnogram import EPOCH_MINUTES, STAGE_NAMES, Hypnogram, Stage
from .dataio.split import AHI_GROUPS, ahi_group
from .errors import EmptyMatrix, LengthMismatch, NoSleepDetected, TooFewSessions

SE_GROUPS = ("SE >= 80%", "60% <= SE < 80%", "SE < 60%")
LOA_Z = 1.96


def _stages(h):
    return np.asarray(h.stages if isinstance(h, Hypnogram) else h, dtype=np.int64)


def scored_mask(true, excluded=None):
    t = _stages(true)
    keep = t != Stage.UNSCORED
    if excluded is not None:
        keep &= ~np.asarray(excluded, dtype=bool)
    return keep


# -- epoch metrics -----------------------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple = STAGE_NAMES

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or np.any(c < 0):
            raise ValueError("counts must be a square non-negative matrix")
        if len(self.class_names) != c.shape[0]:
            raise ValueError("one class name per row required")
        object.__setattr__(self, "counts", c)

    @property
    def total(self):
        return int(self.counts.sum())

    def row_normalized(self):
        rows = self.counts.sum(axis=1, keepdims=True).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(rows > 0, self.counts / rows, 0.0)
        return out

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts, self.class_names)


def confusion_matrix(true, pred, num_classes=4, excluded=None, class_names=None) -> ConfusionMatrix:
    """Count (true, predicted) pairs over scored epochs.

    Epochs whose reference label is Unscored, or flagged in ``excluded``,
    are left out.
    """
    t, p = _stages(true), _stages(pred)
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.size} reference epochs vs {p.size} predicted")
    keep = scored_mask(t, excluded)
    t, p = t[keep], p[keep]
    if np.any((p < 0) | (p >= num_classes)) or np.any(t >= num_classes):
        raise ValueError("labels outside the class range")
    counts = np.bincount(t * num_classes + p, minlength=num_classes ** 2).reshape(num_classes, num_classes)
    names = class_names or (STAGE_NAMES if num_classes == 4 else ("Wake", "Sleep"))
    return ConfusionMatrix(counts, tuple(names))


@dataclass(frozen=True)
class AgreementReport:
    accuracy: float
    macro_f1: float
    kappa: float
    precision: tuple
    recall: tuple
    f1: tuple
    support: tuple
    n_epochs: int
    class_names: tuple = STAGE_NAMES

    def to_dict(self):
        return asdict(self)


def cohen_kappa(counts):
    """Chance-corrected agreement in exact integer arithmetic; 0 when p_e = 1."""
    c = np.asarray(counts, dtype=np.int64)
    n = int(c.sum())
    if n == 0:
        raise EmptyMatrix("no epochs")
    agree = int(np.trace(c))
    chance = int((c.sum(axis=1) * c.sum(axis=0)).sum())
    den = n * n - chance
    if den == 0:
        return 0.0
    return (n * agree - chance) / den


def classification_metrics(cm: ConfusionMatrix) -> AgreementReport:
    """Accuracy, per-class precision/recall/F1, macro-F1 and kappa.

    Macro-F1 averages only classes that occur in the reference or the
    prediction. Precision or recall with an empty denominator is 0.
    """
    c = cm.counts
    n = cm.total
    if n == 0:
        raise EmptyMatrix("confusion matrix is empty")
    tp = np.diag(c).astype(np.float64)
    true_n = c.sum(axis=1).astype(np.float64)
    pred_n = c.sum(axis=0).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_n > 0, tp / pred_n, 0.0)
        recall = np.where(true_n > 0, tp / true_n, 0.0)
        f1 = np.where(true_n + pred_n > 0, 2 * tp / (true_n + pred_n), 0.0)
    present = (true_n + pred_n) > 0
    return AgreementReport(
        accuracy=float(tp.sum() / n),
        macro_f1=float(f1[present].mean()),
        kappa=float(cohen_kappa(c)),
        precision=tuple(float(v) for v in precision),
        recall=tuple(float(v) for v in recall),
        f1=tuple(float(v) for v in f1),
        support=tuple(int(v) for v in true_n),
        n_epochs=n,
        class_names=cm.class_names,
    )


def to_binary(h):
    """0 for Wake, 1 for any sleep stage; Unscored is kept as Unscored."""
    s = _stages(h)
    return np.where(s == Stage.UNSCORED, Stage.UNSCORED, (s != Stage.WAKE).astype(np.int64))


# -- sleep / wake per session --------------------------------------------------

@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    median: float
    sd: float

    @classmethod
    def of(cls, values):
        v = np.asarray([x for x in values if np.isfinite(x)], dtype=np.float64)
        if v.size == 0:
            return cls(0, float("nan"), float("nan"), float("nan"))
        sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
        return cls(int(v.size), float(v.mean()), float(np.median(v)), sd)


@dataclass(frozen=True)
class SleepWakeReport:
    sensitivity: tuple
    specificity: tuple
    sensitivity_summary: Summary
    specificity_summary: Summary


def sleep_wake_counts(true, pred, excluded=None):
    """(sensitivity, specificity) for one night; NaN marks an empty class."""
    t, p = to_binary(true), to_binary(pred)
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.size} reference epochs vs {p.size} predicted")
    keep = scored_mask(t, excluded)
    t, p = t[keep], p[keep]
    sleep, wake = t == 1, t == 0
    sens = float((p[sleep] == 1).mean()) if sleep.any() else float("nan")
    spec = float((p[wake] == 0).mean()) if wake.any() else float("nan")
    return sens, spec


def sleep_wake_session_metrics(pairs) -> SleepWakeReport:
    """``pairs`` holds ``(true, pred[, excluded])`` per night.

    Nights with no true sleep (or no true wake) drop out of the
    sensitivity (or specificity) summary.
    """
    sens, spec = [], []
    for item in pairs:
        s, p = sleep_wake_counts(*item)
        sens.append(s)
        spec.append(p)
    return SleepWakeReport(tuple(sens), tuple(spec), Summary.of(sens), Summary.of(spec))


# -- boundaries ----------------------------------------------------------------

@dataclass(frozen=True)
class Boundaries:
    onset: float
    offset: float


def sleep_boundaries(h) -> Boundaries:
    """Start of the first and end of the last sleep epoch, in minutes."""
    s = _stages(h)
    if s.size == 0:
        raise ValueError("empty hypnogram")
    idx = np.flatnonzero((s != Stage.WAKE) & (s != Stage.UNSCORED))
    if idx.size == 0:
        raise NoSleepDetected("no sleep epoch in hypnogram")
    return Boundaries(idx[0] * EPOCH_MINUTES, (idx[-1] + 1) * EPOCH_MINUTES)


@dataclass(frozen=True)
class BoundaryStats:
    diffs: tuple
    bias: float
    mae: float
    sd: float
    ci_low: float
    ci_high: float

    @classmethod
    def of(cls, diffs):
        d = np.asarray(diffs, dtype=np.float64)
        bias = float(d.mean())
        sd = float(d.std(ddof=1))
        half = LOA_Z * sd / np.sqrt(d.size)
        return cls(tuple(float(v) for v in d), bias, float(np.abs(d).mean()), sd,
                   bias - half, bias + half)


@dataclass(frozen=True)
class BoundaryErrorReport:
    onset: BoundaryStats
    offset: BoundaryStats
    session_ids: tuple = ()


def boundary_error_stats(true_bounds, pred_bounds, session_ids=()) -> BoundaryErrorReport:
    """Prediction minus reference per night, with a normal 95% CI of the mean."""
    if len(true_bounds) != len(pred_bounds):
        raise LengthMismatch("one predicted boundary pair per reference pair required")
    if len(true_bounds) < 2:
        raise TooFewSessions("at least two sessions are needed for a CI")
    on = [p.onset - t.onset for t, p in zip(true_bounds, pred_bounds)]
    off = [p.offset - t.offset for t, p in zip(true_bounds, pred_bounds)]
    return BoundaryErrorReport(BoundaryStats.of(on), BoundaryStats.of(off), tuple(session_ids))


# -- durations -----------------------------------------------------------------

@dataclass(frozen=True)
class BlandAltmanStats:
    bias: float
    sd_diff: float
    loa_low: float
    loa_high: float
    loa_coverage: float
    true_mean: float
    true_sd: float
    pred_mean: float
    pred_sd: float

    @property
    def loa_width(self):
        return self.loa_high - self.loa_low


def loa_width(sd_diff):
    return 2.0 * LOA_Z * sd_diff


def bland_altman(true, pred) -> BlandAltmanStats:
    """Paired agreement of two measurement series (sample SDs)."""
    t, p = np.asarray(true, dtype=np.float64), np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape:
        raise LengthMismatch("paired measurements must have equal length")
    if t.size < 2:
        raise TooFewSessions("at least two pairs are needed")
    d = p - t
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    lo, hi = bias - LOA_Z * sd, bias + LOA_Z * sd
    cover = float(((d >= lo) & (d <= hi)).mean())
    return BlandAltmanStats(bias, sd, lo, hi, cover, float(t.mean()), float(t.std(ddof=1)),
                            float(p.mean()), float(p.std(ddof=1)))


def stage_durations(h, excluded=None, num_classes=4):
    """Minutes per stage over scored epochs."""
    s = _stages(h)
    s = s[scored_mask(s, excluded)]
    return np.bincount(s, minlength=num_classes)[:num_classes] * EPOCH_MINUTES


@dataclass(frozen=True)
class BlandAltmanResult:
    per_stage: dict
    true_durations: np.ndarray = field(repr=False, default=None)
    pred_durations: np.ndarray = field(repr=False, default=None)

    def table(self):
        """Rows of (stage, true mean, true sd, pred mean, pred sd, diff mean, diff sd)."""
        return [(k, v.true_mean, v.true_sd, v.pred_mean, v.pred_sd, v.bias, v.sd_diff)
                for k, v in self.per_stage.items()]


def duration_bland_altman(true_durations, pred_durations, stage_names=STAGE_NAMES) -> BlandAltmanResult:
    """Per-stage agreement from ``(sessions, stages)`` duration arrays."""
    t = np.asarray(true_durations, dtype=np.float64)
    p = np.asarray(pred_durations, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 2:
        raise LengthMismatch("duration arrays must share a (sessions, stages) shape")
    per = {name: bland_altman(t[:, j], p[:, j]) for j, name in enumerate(stage_names)}
    return BlandAltmanResult(per, t, p)


def stage_duration_bland_altman(true_hyps, pred_hyps, excluded=None) -> BlandAltmanResult:
    if len(true_hyps) != len(pred_hyps):
        raise LengthMismatch("one prediction per reference hypnogram required")
    if len(true_hyps) < 2:
        raise TooFewSessions("at least two sessions are needed")
    excluded = excluded or [None] * len(true_hyps)
    # predictions are counted over the same scored epochs as the reference
    t = np.array([stage_durations(h, x) for h, x in zip(true_hyps, excluded)])
    p = np.array([stage_durations(np.where(scored_mask(h, x), _stages(q), Stage.UNSCORED))
                  for h, q, x in zip(true_hyps, pred_hyps, excluded)])
    return duration_bland_altman(t, p)


# -- stratification ------------------------------------------------------------

def se_group(se):
    """Sleep-efficiency bin for a fraction in [0, 1]."""
    if se >= 0.8:
        return SE_GROUPS[0]
    if se >= 0.6:
        return SE_GROUPS[1]
    return SE_GROUPS[2]


@dataclass(frozen=True)
class GroupSummary:
    n: int
    accuracy: tuple = (float("nan"), float("nan"))
    macro_f1: tuple = (float("nan"), float("nan"))
    kappa: tuple = (float("nan"), float("nan"))


def _mean_sd(values):
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def stratified_report(rows, by="ahi"):
    """Mean and SD of per-session metrics inside each group.

    ``rows`` yields ``(key_value, AgreementReport)`` with AHI (events/h) or
    SE (fraction) as the key. Empty groups report ``n = 0``.
    """
    groups, assign = (AHI_GROUPS, ahi_group) if by == "ahi" else (SE_GROUPS, se_group)
    bucket = {g: [] for g in groups}
    for value, rep in rows:
        bucket[assign(value)].append(rep)
    out = {}
    for g in groups:
        reps = bucket[g]
        if not reps:
            out[g] = GroupSummary(0)
            continue
        out[g] = GroupSummary(len(reps), _mean_sd([r.accuracy for r in reps]),
                              _mean_sd([r.macro_f1 for r in reps]), _mean_sd([r.kappa for r in reps]))
    return out


# -- cohort evaluation -----------------------------------------------------------

@dataclass
class SessionEval:
    session_id: str
    true: Hypnogram
    pred: Hypnogram
    ahi: float = float("nan")
    excluded: np.ndarray | None = None


@dataclass
class CohortReport:
    pooled: AgreementReport
    confusion: ConfusionMatrix
    per_session: dict
    sleep_wake: SleepWakeReport
    boundaries: BoundaryErrorReport | None
    durations: BlandAltmanResult | None
    by_ahi: dict
    by_se: dict
    session_rows: list

    def sections(self):
        """One JSON-ready dict per report section."""
        pooled = self.pooled.to_dict()
        pooled["confusion"] = self.confusion.counts.tolist()
        pooled["confusion_row_normalized"] = self.confusion.row_normalized().tolist()
        yield {"section": "epoch_pooled", **pooled}
        subj = {k: asdict(Summary.of([getattr(r, k) for r in self.per_session.values()]))
                for k in ("accuracy", "macro_f1", "kappa")}
        yield {"section": "subject_level", **subj}
        yield {"section": "sleep_wake", "sensitivity": asdict(self.sleep_wake.sensitivity_summary),
               "specificity": asdict(self.sleep_wake.specificity_summary)}
        if self.boundaries is not None:
            b = self.boundaries
            yield {"section": "boundaries",
                   **{k: {f: getattr(getattr(b, k), f) for f in ("bias", "mae", "sd", "ci_low", "ci_high")}
                      for k in ("onset", "offset")}}
        if self.durations is not None:
            yield {"section": "stage_durations",
                   "stages": {k: {**asdict(v), "loa_width": v.loa_width}
                              for k, v in self.durations.per_stage.items()}}
        for name, groups in (("by_ahi", self.by_ahi), ("by_se", self.by_se)):
            yield {"section": name, "groups": {g: asdict(v) for g, v in groups.items()}}

    def to_json_lines(self):
        return "".join(json.dumps(s, sort_keys=True, allow_nan=True) + "\n" for s in self.sections())

    def session_csv(self):
        buf = io.StringIO()
        cols = ["session_id", "accuracy", "macro_f1", "kappa", "onset_diff", "offset_diff"]
        cols += [f"true_{n.lower()}_min" for n in STAGE_NAMES] + [f"pred_{n.lower()}_min" for n in STAGE_NAMES]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.session_rows:
            w.writerow([r[c] if isinstance(r[c], str) else repr(float(r[c])) for c in cols])
        return buf.getvalue()

    def to_text(self):
        out = []
        p = self.pooled
        out.append("== epoch-pooled agreement ==")
        out.append(f"epochs: {p.n_epochs}")
        out.append(f"accuracy: {p.accuracy:.4f}")
        out.append(f"macro_f1: {p.macro_f1:.4f}")
        out.append(f"kappa: {p.kappa:.4f}")
        out.append(f"{'stage':<8}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}")
        for i, name in enumerate(p.class_names):
            out.append(f"{name:<8}{p.precision[i]:>10.4f}{p.recall[i]:>10.4f}{p.f1[i]:>10.4f}{p.support[i]:>10d}")
        out.append("confusion (rows true, columns predicted, row-normalized %):")
        rn = self.confusion.row_normalized() * 100
        out.append(" " * 8 + "".join(f"{n:>8}" for n in p.class_names))
        for i, name in enumerate(p.class_names):
            out.append(f"{name:<8}" + "".join(f"{v:>8.1f}" for v in rn[i]))
        out.append("")
        out.append("== subject-level (mean +- sd) ==")
        for k in ("accuracy", "macro_f1", "kappa"):
            s = Summary.of([getattr(r, k) for r in self.per_session.values()])
            out.append(f"{k}: {s.mean:.4f} +- {s.sd:.4f} (n={s.n})")
        sw = self.sleep_wake
        out.append(f"sleep sensitivity: {sw.sensitivity_summary.mean:.4f} +- {sw.sensitivity_summary.sd:.4f} "
                   f"(median {sw.sensitivity_summary.median:.4f}, n={sw.sensitivity_summary.n})")
        out.append(f"sleep specificity: {sw.specificity_summary.mean:.4f} +- {sw.specificity_summary.sd:.4f} "
                   f"(median {sw.specificity_summary.median:.4f}, n={sw.specificity_summary.n})")
        if self.boundaries is not None:
            out.append("")
            out.append("== sleep boundaries (pred - true, min) ==")
            for k in ("onset", "offset"):
                b = getattr(self.boundaries, k)
                out.append(f"{k}: bias {b.bias:.2f}, MAE {b.mae:.2f}, SD {b.sd:.2f}, "
                           f"95% CI [{b.ci_low:.2f}, {b.ci_high:.2f}]")
        if self.durations is not None:
            out.append("")
            out.append("== stage durations (min) ==")
            out.append(f"{'stage':<8}{'true':>16}{'pred':>16}{'diff':>16}{'LoA':>20}")
            for name, v in self.durations.per_stage.items():
                out.append(f"{name:<8}{v.true_mean:>8.1f} +-{v.true_sd:>5.1f}{v.pred_mean:>8.1f} +-{v.pred_sd:>5.1f}"
                           f"{v.bias:>+8.1f} +-{v.sd_diff:>5.1f}   [{v.loa_low:.1f}, {v.loa_high:.1f}]")
        for title, groups in (("AHI group", self.by_ahi), ("SE group", self.by_se)):
            out.append("")
            out.append(f"== by {title} (mean +- sd) ==")
            for g, v in groups.items():
                if v.n == 0:
                    out.append(f"{g}: N=0")
                else:
                    out.append(f"{g}: N={v.n} accuracy {v.accuracy[0]:.4f} +- {v.accuracy[1]:.4f}, "
                               f"macro_f1 {v.macro_f1[0]:.4f} +- {v.macro_f1[1]:.4f}, "
                               f"kappa {v.kappa[0]:.4f} +- {v.kappa[1]:.4f}")
        return "\n".join(out) + "\n"

    def write(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(self.to_text(), encoding="utf-8")
        (out_dir / "report.jsonl").write_text(self.to_json_lines(), encoding="utf-8")
        (out_dir / "sessions.csv").write_text(self.session_csv(), encoding="utf-8")
        return out_dir


def evaluate_cohort(sessions) -> CohortReport:
    """Every agreement section for a list of :class:`SessionEval`."""
    if not sessions:
        raise TooFewSessions("nothing to evaluate")
    total = None
    per_session = {}
    rows = []
    t_bounds, p_bounds, bound_ids = [], [], []
    ahi_rows, se_rows = [], []
    for s in sessions:
        cm = confusion_matrix(s.true, s.pred, excluded=s.excluded)
        total = cm if total is None else total + cm
        rep = classification_metrics(cm)
        per_session[s.session_id] = rep
        td = stage_durations(s.true, s.excluded)
        pd = stage_durations(np.where(scored_mask(s.true, s.excluded), _stages(s.pred), Stage.UNSCORED))
        row = {"session_id": s.session_id, "accuracy": rep.accuracy, "macro_f1": rep.macro_f1,
               "kappa": rep.kappa, "onset_diff": float("nan"), "offset_diff": float("nan")}
        try:
            tb, pb = sleep_boundaries(s.true), sleep_boundaries(s.pred)
            t_bounds.append(tb)
            p_bounds.append(pb)
            bound_ids.append(s.session_id)
            row["onset_diff"], row["offset_diff"] = pb.onset - tb.onset, pb.offset - tb.offset
        except NoSleepDetected:
            pass
        for i, n in enumerate(STAGE_NAMES):
            row[f"true_{n.lower()}_min"] = td[i]
            row[f"pred_{n.lower()}_min"] = pd[i]
        rows.append(row)
        if np.isfinite(s.ahi):
            ahi_rows.append((s.ahi, rep))
        se_rows.append((s.true.sleep_efficiency, rep))
    sw = sleep_wake_session_metrics([(s.true, s.pred, s.excluded) for s in sessions])
    bounds = boundary_error_stats(t_bounds, p_bounds, bound_ids) if len(t_bounds) >= 2 else None
    durations = (stage_duration_bland_altman([s.true for s in sessions], [s.pred for s in sessions],
                                             [s.excluded for s in sessions])
                 if len(sessions) >= 2 else None)
    return CohortReport(classification_metrics(total), total, per_session, sw, bounds, durations,
                        stratified_report(ahi_rows, "ahi"), stratified_report(se_rows, "se"), rows)
