"""Session records and their on-disk text formats.

Formats (UTF-8, comma separated, '.' decimal, one header line):

* phase table: ``time_seconds,phase_radians``; empty or ``nan`` cells mark
  missing samples;
* frame table: ``frame_index,point_count,motion_amplitude``;
* hypnogram: ``epoch_index,stage_code`` with PSG codes (W, N1, N2, N3, REM)
  on input and W/L/D/R/U on output;
* metadata: one JSON object with the :class:`SubjectMetadata` fields;
* manifest: newline-delimited JSON, one session per line with keys
  ``session_id``, ``metadata``, ``phase``, ``frames``, ``hypnogram`` and
  ``frame_rate`` (paths relative to the manifest).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ..dsp import FrameSummaries, PhaseSeries
from ..errors import MissingMetadataField, NonMonotoneTime, ParseError
from .hypnogram import EPOCH_SECONDS, Hypnogram, Stage, OUTPUT_CODES, map_psg_code

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubjectMetadata:
    subject_id: str
    gender: str
    age: float
    bmi: float
    ahi: float
    lights_off_clock: float

    def __post_init__(self):
        if self.ahi < 0:
            raise ValueError("ahi must be >= 0")
        if not self.age > 0:
            raise ValueError("age must be > 0")

    @classmethod
    def from_dict(cls, d, source=None):
        missing = [f.name for f in fields(cls) if f.name not in d]
        if missing:
            raise MissingMetadataField(f"{source or 'metadata'}: missing {', '.join(missing)}")
        return cls(str(d["subject_id"]), str(d["gender"]), float(d["age"]), float(d["bmi"]),
                   float(d["ahi"]), float(d["lights_off_clock"]))

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    metadata: SubjectMetadata
    phase: PhaseSeries
    frames: FrameSummaries
    frame_rate: float
    hypnogram: Hypnogram
    excluded: np.ndarray = None
    truncated: bool = False
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.excluded is None:
            object.__setattr__(self, "excluded", np.zeros(len(self.hypnogram), dtype=bool))
        if len(self.excluded) != len(self.hypnogram):
            raise ValueError("excluded mask must match the epoch grid")

    @property
    def n_epochs(self):
        return len(self.hypnogram)

    @property
    def start_clock(self):
        return self.hypnogram.start_clock

    def epoch_missing_fraction(self):
        per = int(round(self.phase.sample_rate * EPOCH_SECONDS))
        miss = ~np.isfinite(self.phase.samples)
        out = np.ones(self.n_epochs)
        k = min(self.n_epochs, miss.size // per)
        out[:k] = miss[:k * per].reshape(k, per).mean(axis=1)
        return out

    def with_(self, **kw):
        return replace(self, **kw)


# -- readers -----------------------------------------------------------------

def _read_table(path, ncols, header):
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 ({exc})", path) from None
    if not lines:
        raise ParseError("empty file (header line required)", path, 1)
    head = [h.strip() for h in lines[0].split(",")]
    if head != list(header):
        raise ParseError(f"expected header {','.join(header)}, got {lines[0]!r}", path, 1)
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != ncols:
            raise ParseError(f"expected {ncols} columns, got {len(cells)}", path, ln)
        rows.append((ln, [c.strip() for c in cells]))
    return path, rows


def _num(cell, path, ln, allow_missing=False):
    if allow_missing and cell.lower() in ("", "nan"):
        return np.nan
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r}", path, ln) from None
    if not np.isfinite(v) and not allow_missing:
        raise ParseError(f"non-finite value {cell!r}", path, ln)
    return v


def read_phase_table(path) -> PhaseSeries:
    """Load a phase table onto a uniform grid; absent rows become NaN."""
    path, rows = _read_table(path, 2, ("time_seconds", "phase_radians"))
    if len(rows) < 2:
        raise ParseError("need at least two samples", path)
    t = np.array([_num(r[0], path, ln) for ln, r in rows])
    x = np.array([_num(r[1], path, ln, allow_missing=True) for ln, r in rows])
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.flatnonzero(dt <= 0)[0]) + 1
        raise NonMonotoneTime(f"{path}:{rows[bad][0]}: time does not increase")
    step = float(np.median(dt))
    fs = 1.0 / step
    idx = np.round((t - t[0]) / step).astype(np.int64)
    grid = np.full(idx[-1] + 1, np.nan)
    grid[idx] = x
    return PhaseSeries(grid, round(fs, 9), float(t[0]))


def read_frame_table(path) -> FrameSummaries:
    path, rows = _read_table(path, 3, ("frame_index", "point_count", "motion_amplitude"))
    fi = np.array([_num(r[0], path, ln) for ln, r in rows], dtype=np.float64)
    pc = np.array([_num(r[1], path, ln) for ln, r in rows], dtype=np.float64)
    am = np.array([_num(r[2], path, ln) for ln, r in rows], dtype=np.float64)
    if fi.size > 1 and np.any(np.diff(fi) <= 0):
        bad = int(np.flatnonzero(np.diff(fi) <= 0)[0]) + 1
        raise NonMonotoneTime(f"{path}:{rows[bad][0]}: frame_index does not increase")
    if np.any(pc < 0) or np.any(am < 0):
        raise ParseError("negative point count or amplitude", path)
    return FrameSummaries(fi.astype(np.int64), pc.astype(np.int64), am)


def read_hypnogram(path, start_clock=0.0, output_codes=False) -> Hypnogram:
    path, rows = _read_table(path, 2, ("epoch_index", "stage_code"))
    codes = []
    for k, (ln, r) in enumerate(rows):
        try:
            ei = int(r[0])
        except ValueError:
            raise ParseError(f"bad epoch index {r[0]!r}", path, ln) from None
        if ei != k:
            raise ParseError(f"epoch index {ei} out of sequence (expected {k})", path, ln)
        codes.append(r[1])
    if not codes:
        raise ParseError("hypnogram has no epochs", path)
    return Hypnogram.from_codes(codes, start_clock, output_codes=output_codes)


def read_metadata(path) -> SubjectMetadata:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), path, exc.lineno) from None
    return SubjectMetadata.from_dict(d, path)


def read_manifest(path):
    """Entries of a manifest with paths resolved against its directory."""
    path = Path(path)
    base = path.parent
    out = []
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), path, ln) from None
        for key in ("session_id", "metadata", "phase", "frames", "hypnogram"):
            if key not in d:
                raise ParseError(f"manifest entry missing {key!r}", path, ln)
        e = dict(d)
        for key in ("metadata", "phase", "frames", "hypnogram"):
            e[key] = base / d[key]
        e.setdefault("frame_rate", 10.0)
        out.append(e)
    return out


# -- writers -----------------------------------------------------------------

def write_phase_table(path, phase: PhaseSeries, decimals=5):
    times = np.arange(phase.samples.size) / phase.sample_rate
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("time_seconds,phase_radians\n")
        body = [f"{ti:.3f},{'nan' if not np.isfinite(v) else format(v, f'.{decimals}f')}"
                for ti, v in zip(times, phase.samples)]
        fh.write("\n".join(body))
        fh.write("\n")


def write_frame_table(path, frames: FrameSummaries):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frame_index,point_count,motion_amplitude\n")
        fh.write("\n".join(f"{i},{c},{a:.4f}" for i, c, a in
                           zip(frames.frame_index, frames.point_count, frames.motion_amplitude)))
        fh.write("\n")


def write_hypnogram(path, hypnogram: Hypnogram, psg_codes=None):
    """Write output letter codes, or the given raw PSG codes when supplied."""
    codes = psg_codes if psg_codes is not None else hypnogram.codes()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch_index,stage_code\n")
        fh.write("\n".join(f"{i},{c}" for i, c in enumerate(codes)))
        fh.write("\n")


def write_metadata(path, meta: SubjectMetadata):
    Path(path).write_text(json.dumps(meta.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def write_manifest(path, entries):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(json.dumps(e, sort_keys=True) + "\n")


# -- loading -----------------------------------------------------------------

def load_session(paths, metadata=None, session_id=None) -> SessionRecord:
    """Read and validate one session.

    ``paths`` is a manifest entry (or any mapping with ``phase``, ``frames``,
    ``hypnogram`` and optionally ``metadata`` / ``frame_rate``). A hypnogram
    running past the signal is cut to the overlap and ``truncated`` is set.
    """
    if metadata is None:
        if "metadata" not in paths:
            raise MissingMetadataField("no metadata supplied")
        metadata = read_metadata(paths["metadata"])
    elif isinstance(metadata, dict):
        metadata = SubjectMetadata.from_dict(metadata)
    phase = read_phase_table(paths["phase"])
    frames = read_frame_table(paths["frames"])
    hyp = read_hypnogram(paths["hypnogram"], metadata.lights_off_clock)
    n_sig = int(np.floor(phase.duration / EPOCH_SECONDS + 1e-9))
    truncated = False
    if len(hyp) > n_sig:
        log.warning("hypnogram (%d epochs) longer than signal (%d); truncating", len(hyp), n_sig)
        hyp = Hypnogram(hyp.stages[:n_sig], hyp.start_clock)
        truncated = True
    elif len(hyp) < n_sig:
        # trailing signal without labels is not part of the epoch grid
        n_sig = len(hyp)
    per = int(round(phase.sample_rate * EPOCH_SECONDS))
    phase = PhaseSeries(phase.samples[:n_sig * per], phase.sample_rate, metadata.lights_off_clock)
    sid = session_id or paths.get("session_id") or metadata.subject_id
    return SessionRecord(sid, metadata, phase, frames, float(paths.get("frame_rate", 10.0)),
                         hyp, truncated=truncated,
                         paths={k: str(v) for k, v in paths.items() if isinstance(v, (str, Path))})


__all__ = [
    "SubjectMetadata", "SessionRecord", "load_session", "read_phase_table", "read_frame_table",
    "read_hypnogram", "read_metadata", "read_manifest", "write_phase_table", "write_frame_table",
    "write_hypnogram", "write_metadata", "write_manifest", "Stage", "OUTPUT_CODES", "map_psg_code",
]
