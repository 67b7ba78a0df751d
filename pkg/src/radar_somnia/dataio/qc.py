"""Epoch- and session-level quality control."""

import numpy as np

from ..errors import SessionRejected
from .hypnogram import Stage
from .session import SessionRecord

MAX_EPOCH_MISSING = 0.5
MAX_SESSION_EXCLUDED = 0.3


def qc_filter(session: SessionRecord, max_epoch_missing=MAX_EPOCH_MISSING,
              max_session_excluded=MAX_SESSION_EXCLUDED) -> SessionRecord:
    """Mark unusable epochs and reject sessions that cannot be scored.

    An epoch is excluded when more than ``max_epoch_missing`` of its phase
    samples are missing or its label is Unscored. The session is rejected
    (``SessionRejected``) when more than ``max_session_excluded`` of its
    epochs are excluded (reason ``TooManyExcluded``) or the reference
    hypnogram holds no sleep (reason ``NoSleep``).
    """
    stages = session.hypnogram.stages
    excluded = (session.epoch_missing_fraction() > max_epoch_missing) | (stages == Stage.UNSCORED)
    excluded = excluded | session.excluded
    if session.hypnogram.tst == 0:
        raise SessionRejected("NoSleep", f"{session.session_id} has no scored sleep")
    frac = float(excluded.mean())
    if frac > max_session_excluded:
        raise SessionRejected("TooManyExcluded",
                              f"{session.session_id}: {frac:.1%} of epochs excluded")
    return session.with_(excluded=np.asarray(excluded, dtype=bool))
