"""``intop`` command line: synth, train, eval, bench, check.

Exit codes: 0 success, 1 check or benchmark failure, 2 usage or input error.
The default seed comes from ``INTOP_SEED`` when ``--seed`` is not given.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .checks import run_checks
from .data import (
    PRESETS, DataError, dataset_fingerprint_bytes, generate_synthetic, load_csv, make_split, preset, save_csv, synth_spec_from_dict,
)
from .harness import FORMATS, EXTENSIONS, confusion_matrix, emit_report, metrics, run_benchmark
from .operator import IntegralOperatorModel, load_checkpoint, minmax_rows, save_checkpoint
from .training import train

SEED_ENV = "INTOP_SEED"
log = logging.getLogger("intop")


class UsageError(Exception):
    """Bad input from the user; maps to exit code 2."""


def _default_seed():
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _resolve_config(args) -> cfgmod.Config:
    try:
        cfg = cfgmod.load_config(args.config) if args.config else cfgmod.Config()
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    except cfgmod.ConfigError as e:
        raise UsageError(str(e)) from None
    seed = args.seed if args.seed is not None else _default_seed()
    if seed is not None:
        cfg.seed = seed
    return cfg


def _load_dataset(source):
    """A CSV path, or a preset name when no such file exists."""
    path = Path(source)
    if path.exists():
        try:
            return load_csv(path)
        except DataError as e:
            raise UsageError(str(e)) from None
    if source in PRESETS:
        return generate_synthetic(preset(source))
    raise UsageError(f"dataset not found: {source} (not a file and not one of {', '.join(sorted(PRESETS))})")


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------


def cmd_synth(args):
    if bool(args.preset) == bool(args.spec):
        raise UsageError("give exactly one of --preset or --spec")
    try:
        if args.preset:
            spec = preset(args.preset)
        else:
            spec = synth_spec_from_dict(json.loads(Path(args.spec).read_text()))
        if args.seed is not None or _default_seed() is not None:
            spec.seed = args.seed if args.seed is not None else _default_seed()
        ds = generate_synthetic(spec)
    except FileNotFoundError:
        raise UsageError(f"spec file not found: {args.spec}") from None
    except (DataError, TypeError, KeyError, json.JSONDecodeError) as e:
        raise UsageError(str(e)) from None
    out = Path(args.out or f"{ds.name}.csv")
    save_csv(ds, out)
    print(f"wrote {len(ds)} spectra x {ds.X.shape[1]} points ({ds.n_classes} classes) to {out}")
    return 0


def cmd_train(args):
    cfg = _resolve_config(args)
    raw = _load_dataset(args.dataset)
    ds = raw.normalized()
    split = make_split(len(ds), cfg.seed)
    model = IntegralOperatorModel(ds.X.shape[1], ds.n_classes, cfg.operator, cfg.mc, seed=cfg.seed)
    tc = replace(cfg.train, seed=cfg.seed)
    t0 = time.perf_counter()
    model, trace = train(model, ds.X[split.train], ds.y[split.train], tc, ds.X[split.val], ds.y[split.val])
    elapsed = time.perf_counter() - t0
    out = _out_dir(args)
    fp = cfgmod.fingerprint(cfgmod.to_dict(cfg), dataset_fingerprint_bytes(raw))
    result = {"fingerprint": fp, "seed": cfg.seed, "best_epoch": trace.best_epoch, "epochs": len(trace)}
    for part in ("val", "test"):
        idx = getattr(split, part)
        pred = model.predict(ds.X[idx])
        result[f"{part}_accuracy"] = float(np.mean(pred == ds.y[idx]))
    save_checkpoint(out / "checkpoint.json", model, {**raw.normalization_metadata(),
                                                     "class_names": raw.class_names},
                    {"fingerprint": fp, "config": cfgmod.to_dict(cfg)})
    trace.write_csv(out / "trace.csv")
    (out / "train_summary.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    print(f"trained {len(trace)} epochs in {elapsed:.1f}s; best epoch {trace.best_epoch}; "
          f"val acc {result['val_accuracy']:.4f}; test acc {result['test_accuracy']:.4f}")
    print(f"fingerprint {fp}")
    return 0


def cmd_eval(args):
    try:
        model, blob = load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        raise UsageError(f"checkpoint not found: {args.checkpoint}") from None
    except (ValueError, KeyError) as e:
        raise UsageError(f"{args.checkpoint}: {e}") from None
    ds = _load_dataset(args.dataset)
    if ds.X.shape[1] != model.n_features:
        raise UsageError(f"dataset has {ds.X.shape[1]} points per spectrum, checkpoint expects {model.n_features}")
    names = blob["normalization"].get("class_names", ds.class_names)
    X, _ = minmax_rows(ds.X)
    pred = model.predict(X)
    lines = ["index,true,predicted"]
    lines += [f"{i},{ds.class_names[t]},{names[p] if p < len(names) else p}" for i, (t, p) in enumerate(zip(ds.y, pred))]
    result = {"fingerprint": blob["extra"].get("fingerprint"), "n": len(ds)}
    if names[: ds.n_classes] == ds.class_names and ds.n_classes <= model.n_classes:
        cm = confusion_matrix(ds.y, pred, model.n_classes)
        result.update(metrics(cm), confusion=cm.tolist())
    if args.out:
        out = _out_dir(args)
        (out / "predictions.csv").write_text("\n".join(lines) + "\n")
        (out / "eval.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_bench(args):
    cfg = _resolve_config(args)
    raw = _load_dataset(args.dataset)
    roster = args.roster.split(",") if args.roster else cfg.bench.roster
    bad = [m for m in roster if m not in cfgmod.ROSTER]
    if bad:
        raise UsageError(f"unknown models {bad}; choose from {', '.join(cfgmod.ROSTER)}")
    runs = args.runs if args.runs is not None else cfg.bench.runs
    jobs = args.jobs if args.jobs is not None else cfg.bench.jobs
    if runs < 1 or jobs < 1:
        raise UsageError("--runs and --jobs must be positive")
    formats = args.format.split(",") if args.format else list(FORMATS)
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise UsageError(f"unknown report formats {bad}; choose from {', '.join(FORMATS)}")
    t0 = time.perf_counter()
    report = run_benchmark(raw.normalized(), roster, runs, cfg.seed, cfg, jobs)
    log.info("benchmark finished in %.1fs", time.perf_counter() - t0)
    out = _out_dir(args)
    for fmt in formats:
        emit_report(report, fmt, out / f"report{EXTENSIONS[fmt]}")
    print(emit_report(report, "markdown"), end="")
    for row in report.rows:
        if row.error:
            print(f"model {row.key} failed: {row.error}", file=sys.stderr)
    return 1 if report.failed else 0


def cmd_check(args):
    return 0 if run_checks() else 1


# ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help=f"base seed (default: ${SEED_ENV} or the config)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="intop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset CSV")
    s.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))}")
    s.add_argument("--spec", help="JSON file with SynthSpec fields")
    s.add_argument("--out", help="output CSV path (default: <name>.csv)")
    s.set_defaults(func=cmd_synth)

    for name, func, helptext in (("train", cmd_train, "train the integral operator on one split"),
                                 ("bench", cmd_bench, "repeated-split benchmark of the model roster")):
        t = sub.add_parser(name, parents=[common], help=helptext)
        t.add_argument("dataset", help="CSV path or preset name")
        t.add_argument("--config", help="strict JSON config file")
        t.add_argument("--out", default=f"{name}-out", help="output directory")
        t.set_defaults(func=func)
        if name == "bench":
            t.add_argument("--roster", help=f"comma-separated subset of {','.join(cfgmod.ROSTER)}")
            t.add_argument("--runs", type=int)
            t.add_argument("--jobs", type=int)
            t.add_argument("--format", help="comma-separated subset of markdown,csv,json (default: all)")

    e = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset")
    e.add_argument("checkpoint")
    e.add_argument("dataset", help="CSV path or preset name")
    e.add_argument("--out", help="directory for predictions.csv and eval.json")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", parents=[common], help="run the embedded verification suite")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"intop {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
