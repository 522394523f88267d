"""Command-line frontend.

Subcommands: train, compare, sweep-m1, sweep-nd, noise-study, gen-data,
eval.  Exit status 0 on success, 1 on configuration errors, 2 on numerical
failures.  Config files are flat `key = value` text under a [train]
section; command-line flags and --set overrides win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import fields, replace

import numpy as np

from .network import CheckpointError
from .reporting import (
    M1_SWEEP_VALUES,
    ND_SWEEP_VALUES,
    SNR_STUDY_VALUES,
    compare_methods,
    run_sweep,
    summarize_report,
)
from .sampling import SamplingError, save_bundle, build_bundle, default_counts, default_grid
from .training import (
    ConfigError,
    PhaseAbort,
    TrainConfig,
    desk_preset,
    evaluate_run,
    train,
)
from .optim import OptimizationError

_CONFIG_FIELDS = {f.name for f in fields(TrainConfig)}
_INT_FIELDS = {"seed", "seed_init", "seed_sample", "seed_noise", "n_r", "n_i",
               "n_b", "n_d", "m1", "m2", "weight_cadence"}
_FLOAT_FIELDS = {"adam_lr", "lbfgs_step_scale", "snr_db"}
_TUPLE_FIELDS = {"widths", "grid_counts"}


def config_from_file(path) -> TrainConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    if parser.sections() != ["train"]:
        raise ConfigError(f"config file must contain exactly a [train] section, got {parser.sections()}")
    cfg = TrainConfig()
    for key, value in parser.items("train"):
        _apply_override(cfg, key, value)
    return cfg


def _apply_override(cfg: TrainConfig, key: str, value: str) -> None:
    if key not in _CONFIG_FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    if value == "" or value.lower() == "none":
        setattr(cfg, key, None)
        return
    if key in _INT_FIELDS:
        setattr(cfg, key, int(value))
    elif key in _FLOAT_FIELDS:
        setattr(cfg, key, float(value))
    elif key in _TUPLE_FIELDS:
        setattr(cfg, key, tuple(int(v) for v in value.split(",")))
    else:
        setattr(cfg, key, value)


def _add_train_flags(p):
    p.add_argument("--config", help="config file (flat key = value under [train])")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--problem", choices=["heat", "wave", "beam", "navier_stokes_2d"])
    p.add_argument("--mode", choices=["dg_pinn", "pinn_baseline"])
    p.add_argument("--m1", type=int, help="pre-training / first-stage iterations")
    p.add_argument("--m2", type=int, help="quasi-Newton iterations")
    p.add_argument("--nd", type=int, dest="n_d")
    p.add_argument("--nr", type=int, dest="n_r")
    p.add_argument("--ni", type=int, dest="n_i")
    p.add_argument("--nb", type=int, dest="n_b")
    p.add_argument("--snr-db", type=float, dest="snr_db")
    p.add_argument("--seed", type=int)
    p.add_argument("--desk", action="store_true", help="reduced laptop-scale budgets")
    p.add_argument("--data-file", dest="data_file", help="ingest external flow data columns")
    p.add_argument("--out", dest="out_dir", help="output directory")


def _build_config(args) -> TrainConfig:
    cfg = config_from_file(args.config) if args.config else TrainConfig()
    for kv in args.set:
        if "=" not in kv:
            raise ConfigError(f"--set expects KEY=VALUE, got {kv!r}")
        key, value = kv.split("=", 1)
        _apply_override(cfg, key.strip(), value.strip())
    for key in ("problem", "mode", "m1", "m2", "n_d", "n_r", "n_i", "n_b",
                "snr_db", "seed", "data_file", "out_dir"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "desk", False):
        desk_preset(cfg)
    return cfg


def cmd_train(args) -> int:
    if args.rerun:
        return _rerun(args.rerun)
    cfg = _build_config(args)
    cfg.validate()
    report = train(cfg)
    if report.get("aborted_phase"):
        print(f"aborted in phase {report['aborted_phase']}: {report.get('abort_message')}")
        return 2
    _print_summary(report)
    if cfg.out_dir:
        print(f"artifacts written to {cfg.out_dir}")
    return 0


def _print_summary(report: dict) -> None:
    parts = [f"problem={report['problem']}", f"mode={report['mode']}"]
    for ch, v in report.get("r_t", {}).items():
        parts.append(f"R_t[{ch}]={v:.3e}")
    if "pressure_r_t" in report:
        parts.append(f"R_t[p,centered]={report['pressure_r_t']:.3e}")
    for name, v in report.get("ape_percent", {}).items():
        parts.append(f"APE[{name}]={v:.4f}%")
    parts.append(f"wallclock={report['timings']['total_s']:.1f}s")
    print("  ".join(parts))


def _rerun(run_dir: str) -> int:
    """Replay a run from its config echo and diff the reports."""
    import tempfile

    cfg = config_from_file(os.path.join(run_dir, "config.cfg"))
    with open(os.path.join(run_dir, "report.json")) as f:
        old = json.load(f)
    with tempfile.TemporaryDirectory() as tmp:
        cfg.out_dir = tmp
        new = train(cfg)
    old.pop("timings", None)
    new.pop("timings", None)
    if old == new:
        print("rerun reproduces the report exactly (timings excluded)")
        return 0
    keys = sorted(set(old) | set(new))
    for k in keys:
        if old.get(k) != new.get(k):
            print(f"MISMATCH {k}: {old.get(k)!r} != {new.get(k)!r}")
    return 2


def cmd_compare(args) -> int:
    cfg = _build_config(args)
    cfg.validate()
    summary = compare_methods(cfg, args.trials, out_dir=cfg.out_dir)
    print(json.dumps(summary, indent=2, sort_keys=True))
    base = summary["methods"].get("pinn_baseline", {})
    dg = summary["methods"].get("dg_pinn", {})
    if base.get("wallclock_mean_s") and dg.get("wallclock_mean_s"):
        speedup = base["wallclock_mean_s"] / dg["wallclock_mean_s"]
        print(f"speedup (baseline / two-phase): {speedup:.2f}x")
    return 0


def _parse_values(arg, fallback, cast):
    if not arg:
        return list(fallback)
    return [cast(v) for v in arg.split(",")]


def cmd_sweep(args, axis: str) -> int:
    cfg = _build_config(args)
    cfg.validate()
    if axis == "m1":
        values = _parse_values(args.values, M1_SWEEP_VALUES, int)
    elif axis == "n_d":
        values = _parse_values(args.values, ND_SWEEP_VALUES, int)
    else:
        values = _parse_values(args.values, SNR_STUDY_VALUES, float)
    if axis == "snr_db":
        values = sorted(values)
    result = _sweep_parallel(axis, values, cfg, args.jobs) if args.jobs and args.jobs > 1 \
        else run_sweep(axis, values, cfg, out_dir=cfg.out_dir)
    for v, s in zip(result.values, result.summaries):
        print(f"{axis}={v}: " + " ".join(f"{k}={val}" for k, val in sorted(s.items())))
    return 0


def _sweep_point(packed):
    axis, value, cfg = packed
    from .reporting import run_sweep as _rs

    res = _rs(axis, [value], cfg, out_dir=cfg.out_dir)
    return res.summaries[0]


def _sweep_parallel(axis, values, cfg, jobs):
    from concurrent.futures import ProcessPoolExecutor

    from .reporting import SweepResult, write_sweep_csv

    tasks = [(axis, v, replace(cfg, out_dir=None)) for v in values]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        summaries = list(ex.map(_sweep_point, tasks))
    result = SweepResult(axis, list(values), summaries)
    if cfg.out_dir:
        write_sweep_csv(os.path.join(cfg.out_dir, f"sweep_{axis}.csv"), result)
    return result


def cmd_gen_data(args) -> int:
    from .problems import get_problem

    cfg = _build_config(args)
    problem = get_problem(cfg.problem)
    counts = cfg.counts(problem)
    grid = default_grid(problem)
    bundle = build_bundle(problem, grid, counts, cfg.resolved().seed_sample,
                          snr_db=cfg.snr_db, noise_seed=cfg.resolved().seed_noise)
    out = cfg.out_dir or "."
    save_bundle(bundle, problem, out)
    print(f"dataset written to {out} (test set: {bundle.n_test} points)")
    return 0


def cmd_eval(args) -> int:
    run_dir = args.run_dir
    metrics = evaluate_run(run_dir)
    with open(os.path.join(run_dir, "report.json")) as f:
        report = json.load(f)
    tol = 1e-12
    bad = []
    for ch, v in metrics["r_t"].items():
        ref = report.get("r_t", {}).get(ch)
        print(f"R_t[{ch}] = {v!r} (report: {ref!r})")
        if ref is None or abs(v - ref) > tol * max(1.0, abs(ref)):
            bad.append(f"r_t[{ch}]")
    for name, v in metrics["ape_percent"].items():
        ref = report.get("ape_percent", {}).get(name)
        print(f"APE[{name}] = {v!r}% (report: {ref!r}%)")
        if ref is None or abs(v - ref) > tol * max(1.0, abs(ref)):
            bad.append(f"ape[{name}]")
    if "pressure_r_t" in metrics:
        ref = report.get("pressure_r_t")
        print(f"R_t[p,centered] = {metrics['pressure_r_t']!r} (report: {ref!r})")
        if ref is None or abs(metrics["pressure_r_t"] - ref) > tol:
            bad.append("pressure_r_t")
    if bad:
        print("MISMATCH vs persisted report: " + ", ".join(bad))
        return 1
    print("recomputed metrics match the persisted report")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgpinn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training job")
    _add_train_flags(t)
    t.add_argument("--rerun", metavar="RUN_DIR",
                   help="replay a finished run from its config echo and diff reports")
    t.set_defaults(fn=cmd_train)

    c = sub.add_parser("compare", help="two-phase vs baseline over seeded trials")
    _add_train_flags(c)
    c.add_argument("--trials", type=int, default=10)
    c.set_defaults(fn=cmd_compare)

    for axis, name, hlp in (("m1", "sweep-m1", "pre-training budget sweep"),
                            ("n_d", "sweep-nd", "data-set size sweep"),
                            ("snr_db", "noise-study", "noise robustness study")):
        s = sub.add_parser(name, help=hlp)
        _add_train_flags(s)
        s.add_argument("--values", help="comma-separated axis values")
        s.add_argument("--jobs", type=int, default=1, help="parallel runs")
        s.set_defaults(fn=lambda a, axis=axis: cmd_sweep(a, axis))

    g = sub.add_parser("gen-data", help="persist a sampled dataset as column files")
    _add_train_flags(g)
    g.set_defaults(fn=cmd_gen_data)

    e = sub.add_parser("eval", help="recompute metrics from a run's checkpoint")
    e.add_argument("run_dir")
    e.set_defaults(fn=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (ConfigError, CheckpointError, SamplingError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (PhaseAbort, OptimizationError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
