"""Glue between sessions, features and the model, with an ordered worker pool."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor

from .dataio.qc import qc_filter
from .dataio.session import SessionRecord, load_session, read_manifest
from .dsp import DEFAULT_DSP, process_session
from .errors import SessionRejected
from .features import DEFAULT_WINDOWS, FeatureMatrix, assemble_feature_matrix
from .model.train import LabeledSession, stage_targets

log = logging.getLogger(__name__)


def default_jobs():
    return os.cpu_count() or 1


def ordered_map(fn, items, jobs=1):
    """``[fn(x) for x in items]`` across ``jobs`` processes, input order kept."""
    items = list(items)
    if jobs is None:
        jobs = default_jobs()
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def session_features(session: SessionRecord, dsp_config=DEFAULT_DSP,
                     windows=DEFAULT_WINDOWS) -> FeatureMatrix:
    signals = process_session(session.phase, session.frames, session.frame_rate,
                              n_epochs=session.n_epochs, config=dsp_config)
    return assemble_feature_matrix(signals, session.start_clock, session.session_id, windows)


def labeled_session(session: SessionRecord, features: FeatureMatrix, num_classes=4) -> LabeledSession:
    y = stage_targets(session.hypnogram, num_classes, session.excluded)
    return LabeledSession(features.values, y, session.session_id)


def _load_checked(entry):
    try:
        return qc_filter(load_session(entry)), None
    except SessionRejected as exc:
        return None, (entry["session_id"], exc.reason, str(exc))


def load_cohort(manifest, jobs=1):
    """Load and QC every session of a manifest.

    Returns ``(sessions, rejected)`` where ``rejected`` lists
    ``(session_id, reason, message)`` for sessions that failed QC.
    """
    results = ordered_map(_load_checked, read_manifest(manifest), jobs)
    sessions = [s for s, _ in results if s is not None]
    rejected = [r for _, r in results if r is not None]
    for sid, reason, _ in rejected:
        log.warning("session %s rejected (%s)", sid, reason)
    return sessions, rejected


class _FeatureJob:
    def __init__(self, dsp_config, windows):
        self.dsp_config, self.windows = dsp_config, windows

    def __call__(self, session):
        return session_features(session, self.dsp_config, self.windows)


def cohort_features(sessions, jobs=1, dsp_config=DEFAULT_DSP, windows=DEFAULT_WINDOWS):
    return ordered_map(_FeatureJob(dsp_config, windows), sessions, jobs)
