"""Command-line front end: ``radar-somnia <subcommand> [options]``.

Subcommands
-----------
synth     write a synthetic cohort (phase, frames, hypnograms, metadata,
          manifests and a stratified split)
features  compute per-epoch feature tables for every session of a manifest
train     fit the staging model; writes ``model.ckpt`` and ``loss.csv``
eval      score predictions (from a checkpoint or a directory of predicted
          hypnograms) against the reference labels
report    render a human-readable summary of an ``eval`` output directory
selftest  run the built-in oracle checks

Randomness comes from ``--seed`` only. Each component draws
``derive_seed(seed, name)`` with name ``synth``, ``model`` or ``train``;
an explicit ``--config synth.seed=...`` (etc.) wins over the derived value.

Exit codes: 0 success, 1 internal error, 2 usage error, 3 data error
(including unreadable input files).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from functools import partial
from pathlib import Path

from . import __version__
from .dataio.checkpoint import load_checkpoint, save_checkpoint
from .dataio.hypnogram import Hypnogram
from .dataio.session import read_hypnogram, read_metadata, write_hypnogram, write_manifest
from .dataio.split import stratified_split
from .dsp import DSPConfig
from .errors import DataError
from .evaluation import SessionEval, evaluate_cohort
from .features import FeatureMatrix
from .model.config import ModelConfig, TrainConfig
from .model.train import predict_session, train
from .pipeline import cohort_features, default_jobs, labeled_session, load_cohort, ordered_map
from .seeding import derive_seed
from .synthgen import SynthConfig, synth_night, write_session

log = logging.getLogger("radar_somnia")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
CONFIG_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "synth": SynthConfig, "dsp": DSPConfig}


class UsageError(Exception):
    pass


# -- configuration -------------------------------------------------------------

def parse_overrides(items):
    """``["model.hidden_dim=32", ...]`` -> ``{"model": {"hidden_dim": "32"}}``."""
    out = {k: {} for k in CONFIG_SECTIONS}
    for item in items or ():
        key, sep, value = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or section not in CONFIG_SECTIONS:
            raise UsageError(f"bad --config {item!r}; expected <{'|'.join(CONFIG_SECTIONS)}>.<key>=<value>")
        out[section][name] = value
    return out


def build_config(section, overrides, seed=None):
    """Instantiate one config section, deriving its seed from ``seed``."""
    cls = CONFIG_SECTIONS[section]
    base = cls()
    items = dict(overrides.get(section, {}))
    if seed is not None and "seed" in cls.__dataclass_fields__ and "seed" not in items:
        items["seed"] = derive_seed(seed, section)
    try:
        return base.with_overrides(items)
    except KeyError as exc:
        raise UsageError(f"unknown {section} config key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {section} config: {exc}") from None


def _check_sections(overrides, allowed):
    for sec, items in overrides.items():
        if items and sec not in allowed:
            raise UsageError(f"--config {sec}.* is not used by this subcommand")


# -- helpers -------------------------------------------------------------------

def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise UsageError(f"output directory {p} is not writable")
    return p


def _features_for(sessions, args, dsp):
    """Load cached feature tables from ``--features`` or compute them."""
    if getattr(args, "features", None):
        out = []
        for s in sessions:
            path = Path(args.features) / f"{s.session_id}.features.csv"
            if not path.exists():
                raise DataError(f"missing feature table {path}")
            out.append(FeatureMatrix.from_csv(path, s.session_id))
        return out
    return cohort_features(sessions, args.jobs, dsp)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _synth_one(index, config, out_dir, seed):
    return write_session(synth_night(index, config), out_dir, seed)


# -- subcommands -----------------------------------------------------------------

def cmd_synth(args, overrides):
    _check_sections(overrides, {"synth"})
    cfg = build_config("synth", overrides, args.seed)
    if args.nights < 1:
        raise UsageError("--nights must be >= 1")
    out = _out_dir(args.out)
    entries = ordered_map(partial(_synth_one, config=cfg, out_dir=out, seed=args.seed),
                          range(args.nights), args.jobs)
    write_manifest(out / "manifest.jsonl", entries)
    metas = [read_metadata(out / e["metadata"]) for e in entries]
    split = stratified_split(metas, args.train_fraction, derive_seed(args.seed, "split"))
    by_subject = {m.subject_id: e for m, e in zip(metas, entries)}
    write_manifest(out / "train.jsonl", [by_subject[s] for s in split.train])
    write_manifest(out / "validation.jsonl", [by_subject[s] for s in split.validation])
    _write_json(out / "split.json", {**split.to_dict(),
                                     "report": {k: list(v) for k, v in split.report().items()}})
    print(f"wrote {args.nights} nights to {out} ({len(split.train)} train / {len(split.validation)} validation)")
    if not split.train or not split.validation:
        # small strata round entirely to one side
        print("warning: one side of the split is empty; use more nights or another --train-fraction",
              file=sys.stderr)
    return 0


def cmd_features(args, overrides):
    _check_sections(overrides, {"dsp"})
    dsp = build_config("dsp", overrides)
    out = _out_dir(args.out)
    sessions, rejected = load_cohort(args.manifest, args.jobs)
    mats = cohort_features(sessions, args.jobs, dsp)
    for s, fm in zip(sessions, mats):
        fm.to_csv(out / f"{s.session_id}.features.csv")
    _write_json(out / "rejected.json", [list(r) for r in rejected])
    print(f"wrote {len(mats)} feature tables to {out} ({len(rejected)} sessions rejected)")
    return 0


def cmd_train(args, overrides):
    _check_sections(overrides, {"model", "train", "dsp"})
    mcfg = build_config("model", overrides, args.seed)
    tcfg = build_config("train", overrides, args.seed)
    dsp = build_config("dsp", overrides)
    out = _out_dir(args.out)
    sessions, rejected = load_cohort(args.manifest, args.jobs)
    if not sessions:
        raise DataError("no usable training sessions")
    mats = _features_for(sessions, args, dsp)
    data = [labeled_session(s, fm, mcfg.num_classes) for s, fm in zip(sessions, mats)]
    val = None
    if args.validation_manifest:
        vs, _ = load_cohort(args.validation_manifest, args.jobs)
        val = [labeled_session(s, fm, mcfg.num_classes)
               for s, fm in zip(vs, cohort_features(vs, args.jobs, dsp))]
    result = train(data, mcfg, tcfg, validation=val,
                   progress=lambda e, tr, mo: log.info("epoch %d: train %.4f monitor %.4f", e, tr, mo))
    save_checkpoint(result.weights, out / "model.ckpt")
    with open(out / "loss.csv", "w", newline="\n", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "monitor_loss"])
        for i, (a, b) in enumerate(zip(result.train_loss, result.val_loss)):
            w.writerow([i, repr(a), repr(b)])
    _write_json(out / "train_run.json", {
        "model": mcfg.to_dict(), "train": tcfg.to_dict(), "dsp": asdict(dsp),
        "sessions": [s.session_id for s in sessions], "rejected": [list(r) for r in rejected],
        "best_epoch": result.best_epoch, "class_weights": list(map(float, result.class_weights)),
        "version": __version__})
    print(f"trained on {len(data)} sessions; best epoch {result.best_epoch}; checkpoint {out / 'model.ckpt'}")
    return 0


def cmd_eval(args, overrides):
    _check_sections(overrides, {"dsp"})
    if bool(args.checkpoint) == bool(args.predictions):
        raise UsageError("eval needs exactly one of --checkpoint or --predictions")
    dsp = build_config("dsp", overrides)
    out = _out_dir(args.out)
    sessions, rejected = load_cohort(args.manifest, args.jobs)
    if not sessions:
        raise DataError("no usable sessions to evaluate")
    preds = []
    if args.checkpoint:
        weights = load_checkpoint(args.checkpoint)
        mats = _features_for(sessions, args, dsp)
        pdir = _out_dir(out / "predictions")
        for s, fm in zip(sessions, mats):
            hyp, _ = predict_session(fm.values, weights, smooth=args.smooth, start_clock=s.start_clock)
            write_hypnogram(pdir / f"{s.session_id}.csv", hyp)
            preds.append(hyp)
    else:
        for s in sessions:
            path = Path(args.predictions) / f"{s.session_id}.csv"
            hyp = read_hypnogram(path, s.start_clock, output_codes=True)
            if len(hyp) < s.n_epochs:
                raise DataError(f"{path}: {len(hyp)} epochs, reference has {s.n_epochs}")
            preds.append(Hypnogram(hyp.stages[:s.n_epochs], s.start_clock))
    evals = [SessionEval(s.session_id, s.hypnogram, p, s.metadata.ahi, s.excluded)
             for s, p in zip(sessions, preds)]
    report = evaluate_cohort(evals)
    report.write(out)
    _write_json(out / "rejected.json", [list(r) for r in rejected])
    p = report.pooled
    print(f"evaluated {len(evals)} sessions: accuracy {p.accuracy:.4f}, macro-F1 {p.macro_f1:.4f}, "
          f"kappa {p.kappa:.4f}")
    return 0


def _render_value(v, indent=0):
    pad = "  " * indent
    lines = []
    for k, x in v.items():
        if isinstance(x, dict):
            lines.append(f"{pad}{k}:")
            lines.append(_render_value(x, indent + 1))
        else:
            lines.append(f"{pad}{k}: {_fmt(x)}")
    return "\n".join(lines)


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.4f}"
    if isinstance(x, list):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    return str(x)


def render_sections(lines):
    """Human-readable text from ``report.jsonl`` content."""
    out = []
    for line in lines:
        if not line.strip():
            continue
        sec = json.loads(line)
        out.append(f"== {sec.pop('section')} ==")
        out.append(_render_value(sec))
        out.append("")
    return "\n".join(out)


def cmd_report(args, overrides):
    _check_sections(overrides, set())
    src = Path(args.input) / "report.jsonl"
    if not src.exists():
        raise DataError(f"{src} not found; run eval first")
    text = render_sections(src.read_text(encoding="utf-8").splitlines())
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_selftest(args, overrides):
    _check_sections(overrides, set())
    from .selftest import run_selftest

    return 0 if run_selftest(args.seed) else 1


# -- parser --------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    common.add_argument("--jobs", type=int, default=default_jobs(),
                        help="worker processes for per-session stages (default: CPU count)")
    common.add_argument("--config", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config field; repeatable (sections: model, train, synth, dsp)")

    parser = argparse.ArgumentParser(prog="radar-somnia", description="Radar-based sleep staging pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cohort")
    p.add_argument("--nights", type=int, default=10, help="number of nights (default 10)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train-fraction", type=float, default=0.8,
                   help="fraction of subjects in train.jsonl (default 0.8)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", parents=[common], help="compute feature tables")
    p.add_argument("--manifest", required=True, help="session manifest (.jsonl)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[common], help="train the staging model")
    p.add_argument("--manifest", required=True, help="training manifest (.jsonl)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--features", help="directory of precomputed feature tables")
    p.add_argument("--validation-manifest", help="manifest monitored for checkpoint selection")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate predictions against reference labels")
    p.add_argument("--manifest", required=True, help="evaluation manifest (.jsonl)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--checkpoint", help="model checkpoint to predict with")
    p.add_argument("--predictions", help="directory of <session_id>.csv predicted hypnograms")
    p.add_argument("--features", help="directory of precomputed feature tables")
    p.add_argument("--smooth", action="store_true", help="3-epoch median filter on predictions")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="summarise an eval directory")
    p.add_argument("--input", required=True, help="eval output directory")
    p.add_argument("--out", help="also write the summary to this file")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", parents=[common], help="run built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def _setup_logging():
    name = os.environ.get("RADAR_SOMNIA_LOG", "warn").lower()
    level = LOG_LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = parse_overrides(args.config)
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        return args.func(args, overrides)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, OSError) as exc:
        print(f"radar-somnia: data error: {exc}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # anything else is a bug; report it and exit 1
        log.debug("internal error", exc_info=True)
        print(f"radar-somnia: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
