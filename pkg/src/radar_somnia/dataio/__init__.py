"""Session ingestion, epoch labelling, quality control, splitting and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .hypnogram import (EPOCH_MINUTES, EPOCH_SECONDS, OUTPUT_CODES, SCORED_STAGES, STAGE_NAMES,
                        Hypnogram, Stage, epoch_and_label, map_psg_code)
from .qc import qc_filter
from .session import (SessionRecord, SubjectMetadata, load_session, read_frame_table,
                      read_hypnogram, read_manifest, read_metadata, read_phase_table,
                      write_frame_table, write_hypnogram, write_manifest, write_metadata,
                      write_phase_table)
from .split import AHI_GROUPS, SplitAssignment, ahi_group, stratified_split

__all__ = [
    "EPOCH_MINUTES", "EPOCH_SECONDS", "OUTPUT_CODES", "SCORED_STAGES", "STAGE_NAMES",
    "Hypnogram", "Stage", "epoch_and_label", "map_psg_code", "qc_filter",
    "SessionRecord", "SubjectMetadata", "load_session", "read_frame_table", "read_hypnogram",
    "read_manifest", "read_metadata", "read_phase_table", "write_frame_table",
    "write_hypnogram", "write_manifest", "write_metadata", "write_phase_table",
    "AHI_GROUPS", "SplitAssignment", "ahi_group", "stratified_split",
    "load_checkpoint", "save_checkpoint",
]
