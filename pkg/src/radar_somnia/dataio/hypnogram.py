"""Stage codes, the Hypnogram container and derived sleep statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

EPOCH_SECONDS = 30.0
EPOCH_MINUTES = EPOCH_SECONDS / 60.0


class Stage(IntEnum):
    WAKE = 0
    LIGHT = 1
    DEEP = 2
    REM = 3
    UNSCORED = 4


SCORED_STAGES = (Stage.WAKE, Stage.LIGHT, Stage.DEEP, Stage.REM)
STAGE_NAMES = ("Wake", "Light", "Deep", "REM")

# PSG (AASM) input codes -> four-class stage
PSG_CODE_MAP = {
    "W": Stage.WAKE,
    "N1": Stage.LIGHT,
    "N2": Stage.LIGHT,
    "N3": Stage.DEEP,
    "REM": Stage.REM,
}

# output codes, one letter per stage
OUTPUT_CODES = {Stage.WAKE: "W", Stage.LIGHT: "L", Stage.DEEP: "D",
                Stage.REM: "R", Stage.UNSCORED: "U"}
OUTPUT_CODE_MAP = {v: k for k, v in OUTPUT_CODES.items()}


def map_psg_code(code) -> Stage:
    """Map one PSG label to a stage; anything unrecognised is UNSCORED."""
    key = str(code).strip().upper()
    if key == "R":
        key = "REM"
    return PSG_CODE_MAP.get(key, Stage.UNSCORED)


@dataclass(frozen=True)
class Hypnogram:
    """Per-epoch stage sequence anchored at ``start_clock``.

    ``stages`` is an int array of :class:`Stage` values; epochs are always
    30 s long.
    """

    stages: np.ndarray
    start_clock: float = 0.0
    epoch_seconds: float = field(default=EPOCH_SECONDS)

    def __post_init__(self):
        s = np.asarray(self.stages, dtype=np.int64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("hypnogram must be a non-empty 1-D sequence")
        if self.epoch_seconds != EPOCH_SECONDS:
            raise ValueError("epoch length is fixed at 30 s")
        if s.min() < 0 or s.max() > int(Stage.UNSCORED):
            raise ValueError("stage values must be Stage codes 0..4")
        s.setflags(write=False)
        object.__setattr__(self, "stages", s)

    def __len__(self):
        return int(self.stages.size)

    @classmethod
    def from_codes(cls, codes, start_clock=0.0, output_codes=False):
        if output_codes:
            st = [OUTPUT_CODE_MAP.get(str(c).strip().upper(), Stage.UNSCORED) for c in codes]
        else:
            st = [map_psg_code(c) for c in codes]
        return cls(np.array(st, dtype=np.int64), start_clock)

    def codes(self):
        return [OUTPUT_CODES[Stage(s)] for s in self.stages]

    @property
    def scored(self):
        return self.stages != Stage.UNSCORED

    @property
    def asleep(self):
        return (self.stages != Stage.WAKE) & self.scored

    # derived statistics (minutes)
    @property
    def tib(self):
        return len(self) * EPOCH_MINUTES

    @property
    def tst(self):
        return float(self.asleep.sum()) * EPOCH_MINUTES

    @property
    def sleep_efficiency(self):
        return self.tst / self.tib

    def _sleep_span(self):
        idx = np.flatnonzero(self.asleep)
        if idx.size == 0:
            return None
        return int(idx[0]), int(idx[-1])

    @property
    def sol(self):
        span = self._sleep_span()
        return None if span is None else span[0] * EPOCH_MINUTES

    @property
    def waso(self):
        """Wake between sleep onset and the final awakening."""
        span = self._sleep_span()
        if span is None:
            return 0.0
        seg = self.stages[span[0]:span[1] + 1]
        return float((seg == Stage.WAKE).sum()) * EPOCH_MINUTES

    def stage_minutes(self):
        return {name: float((self.stages == st).sum()) * EPOCH_MINUTES
                for name, st in zip(STAGE_NAMES, SCORED_STAGES)}


def epoch_and_label(raw_labels, start_clock=0.0, signal_seconds=None) -> Hypnogram:
    """Map PSG labels (W, N1, N2, N3, REM) onto the four-class hypnogram.

    When ``signal_seconds`` is given, epochs without a full 30 s of signal
    are dropped.
    """
    labels = list(raw_labels)
    if signal_seconds is not None:
        n_full = int(np.floor(signal_seconds / EPOCH_SECONDS + 1e-9))
        labels = labels[:n_full]
    return Hypnogram.from_codes(labels, start_clock)
