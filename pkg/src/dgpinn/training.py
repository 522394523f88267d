"""Two-phase training orchestration and the baseline single-phase variant.

The two-phase procedure (mode "dg_pinn") first fits the network to the
observed data alone with Adam, then draws the unknown coefficients,
estimates the loss weights once, and minimizes the full composite loss with
L-BFGS.  The baseline (mode "pinn_baseline") trains on the composite loss
from the start: Adam with weights re-estimated on a fixed cadence, then
L-BFGS with the weights frozen.

Every run is deterministic given its config: network init, coefficient
init, sampling, and noise each use their own seeded stream.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .adaptive import weights_for_state
from .losses import LossWeights, composite, composite_value, data_objective
from .network import (
    TrainableState,
    init_inverse,
    init_network,
    load_checkpoint,
    save_checkpoint,
)
from .optim import AdamState, LbfgsConfig, OptimizationError, adam_step, lbfgs_minimize
from .problems import get_problem
from .reporting import ape, mean_center, relative_l2
from .sampling import (
    GridSpec,
    bundle_from_external,
    build_bundle,
    default_counts,
    default_grid,
)
from . import network as networkmod

MODES = ("dg_pinn", "pinn_baseline")


class ConfigError(ValueError):
    """A TrainConfig violates its invariants."""


class PhaseAbort(RuntimeError):
    """A training phase hit a non-finite loss; carries phase and iteration."""

    def __init__(self, phase, iteration, message):
        super().__init__(message)
        self.phase = phase
        self.iteration = iteration


@dataclass
class TrainConfig:
    problem: str = "heat"
    mode: str = "dg_pinn"
    widths: tuple | None = None  # hidden layers; None -> (100, 100, 100)
    seed: int = 0  # master seed; init/sampling/noise derive from it
    seed_init: int | None = None
    seed_sample: int | None = None
    seed_noise: int | None = None
    n_r: int | None = None
    n_i: int | None = None
    n_b: int | None = None
    n_d: int | None = None
    m1: int = 20000
    m2: int = 10000
    adam_lr: float = 1e-3
    lbfgs_step_scale: float = 0.1
    snr_db: float | None = None
    weight_cadence: int = 1000
    grid_counts: tuple | None = None
    data_file: str | None = None  # external flow-data ingestion
    out_dir: str | None = None

    def resolved(self) -> "TrainConfig":
        c = TrainConfig(**asdict(self))
        if c.seed_init is None:
            c.seed_init = c.seed
        if c.seed_sample is None:
            c.seed_sample = c.seed
        if c.seed_noise is None:
            c.seed_noise = c.seed
        return c

    def validate(self) -> None:
        if self.problem not in ("heat", "wave", "beam", "navier_stokes_2d"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.m1 < 1 or self.m2 < 1:
            raise ConfigError("m1 and m2 must be >= 1")
        for name in ("n_r", "n_i", "n_b", "n_d"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive")
        if self.weight_cadence < 1:
            raise ConfigError("weight cadence must be >= 1")
        if self.adam_lr <= 0 or self.lbfgs_step_scale <= 0:
            raise ConfigError("learning rates must be positive")

    def counts(self, problem) -> dict:
        c = default_counts(problem)
        for key, name in (("n_r", "n_r"), ("n_i", "n_i"), ("n_b", "n_b"), ("n_d", "n_d")):
            v = getattr(self, name)
            if v is not None:
                c[key] = int(v)
        return c


def desk_preset(cfg: TrainConfig) -> TrainConfig:
    """Reduced budgets for laptop-scale runs; beam gets fewer residual points
    to offset its 4th-order derivative cost."""
    cfg.m1 = 5000
    cfg.m2 = 2000
    if cfg.problem == "beam" and cfg.n_r is None:
        cfg.n_r = 1000
    return cfg


def _network_widths(cfg: TrainConfig, problem) -> tuple:
    hidden = cfg.widths if cfg.widths else (100, 100, 100)
    return (problem.input_dim, *hidden, problem.n_channels)


def _make_bundle(cfg: TrainConfig, problem):
    counts = cfg.counts(problem)
    if cfg.data_file:
        return bundle_from_external(problem, cfg.data_file, counts, cfg.seed_sample)
    grid = default_grid(problem)
    if cfg.grid_counts:
        grid = GridSpec(problem.domain, tuple(cfg.grid_counts))
    return build_bundle(problem, grid, counts, cfg.seed_sample,
                        snr_db=cfg.snr_db, noise_seed=cfg.seed_noise)


def pretrain(cfg: TrainConfig, state: TrainableState, bundle, problem,
             trace_rows=None) -> TrainableState:
    """Adam on the data terms alone for m1 iterations.

    Coefficients, if present on the state, are untouched: their gradient is
    exactly zero, so the Adam update leaves them bit-identical.  Uses the
    preallocated fused evaluation path; the fixed batch is re-evaluated
    every iteration.
    """
    from .fastpath import DataObjectiveWorkspace

    flat = state.flatten()
    adam = AdamState(lr=cfg.adam_lr)
    template = state
    workspace = DataObjectiveWorkspace(state, problem, bundle)
    t0 = time.perf_counter()
    for it in range(1, cfg.m1 + 1):
        cur = template.with_flat(flat)
        terms, total, grad = workspace.evaluate(cur)
        if not np.isfinite(total):
            raise PhaseAbort("pretrain", it, f"data loss non-finite at iteration {it}")
        try:
            flat = adam_step(adam, flat, grad)
        except OptimizationError as e:
            raise PhaseAbort("pretrain", it, str(e)) from e
        if trace_rows is not None:
            w = time.perf_counter() - t0
            for tid, val in terms.items():
                trace_rows.append((it, "adam", tid, val, total, w))
    return template.with_flat(flat)


def finetune(cfg: TrainConfig, state: TrainableState, bundle, problem,
             trace_rows=None, weights: LossWeights | None = None):
    """Estimate loss weights once, then L-BFGS on the composite loss.

    Returns (state, weights, trace_report, lbfgs_result).
    """
    if state.inverse is None:
        raise ConfigError("fine-tuning needs the unknown coefficients on the state")
    trace_report = None
    if weights is None:
        weights, trace_report = weights_for_state(state, problem, bundle)

    template = state
    last_bd = {}

    def fg(flat):
        cur = template.with_flat(flat)
        bd, grad = composite(cur, problem, bundle, weights)
        last_bd["bd"] = bd
        return bd.total, grad

    t0 = time.perf_counter()
    rows = trace_rows if trace_rows is not None else None

    def cb(it, f, g):
        if rows is None:
            return
        bd = last_bd.get("bd")
        w = time.perf_counter() - t0
        if bd is not None:
            for tid, val in bd.terms.items():
                rows.append((it, "lbfgs", tid, val, bd.total, w))

    config = LbfgsConfig(step_scale=cfg.lbfgs_step_scale)
    try:
        result = lbfgs_minimize(fg, state.flatten(), config, cfg.m2, callback=cb)
    except OptimizationError as e:
        raise PhaseAbort("finetune", -1, str(e)) from e
    return template.with_flat(result.x), weights, trace_report, result


def _metrics(state: TrainableState, problem, bundle) -> dict:
    pred = networkmod.forward(state.net, bundle.test_points)
    out = {"r_t": {}, "r_t_noisy": {}}
    for ch in problem.data_channels:
        c = problem.channel(ch)
        truth = bundle.test_values_clean[ch]
        out["r_t"][ch] = relative_l2(truth, pred[:, c])
        out["r_t_noisy"][ch] = relative_l2(bundle.test_values_noisy[ch], pred[:, c])
    if "p" in problem.output_names and "p" in bundle.test_values_clean:
        c = problem.channel("p")
        out["pressure_r_t"] = relative_l2(
            mean_center(bundle.test_values_clean["p"]), mean_center(pred[:, c])
        )
    gamma_est = state.inverse.as_dict() if state.inverse is not None else {}
    gamma_true = dict(zip(problem.gamma_names, problem.gamma_true))
    out["gamma_est"] = gamma_est
    out["gamma_true"] = gamma_true
    out["ape_percent"] = {
        name: ape(gamma_est[name], gamma_true[name]) for name in gamma_est
    }
    return out


def _report_skeleton(cfg: TrainConfig, problem, n_params) -> dict:
    return {
        "version": __version__,
        "mode": cfg.mode,
        "problem": cfg.problem,
        "config": config_echo(cfg),
        "n_params": int(n_params),
        "converged": False,
        "aborted_phase": None,
        "timings": {},
    }


def config_echo(cfg: TrainConfig) -> dict:
    d = asdict(cfg.resolved())
    d.pop("out_dir")
    if d.get("widths") is not None:
        d["widths"] = list(d["widths"])
    if d.get("grid_counts") is not None:
        d["grid_counts"] = list(d["grid_counts"])
    return d


def train_dg_pinn(cfg: TrainConfig) -> dict:
    """Full two-phase run; returns the report dict (and writes artifacts)."""
    cfg = cfg.resolved()
    cfg.validate()
    if cfg.mode != "dg_pinn":
        raise ConfigError("train_dg_pinn requires mode dg_pinn")
    problem = get_problem(cfg.problem)
    bundle = _make_bundle(cfg, problem)
    state = TrainableState(init_network(_network_widths(cfg, problem), cfg.seed_init))
    report = _report_skeleton(cfg, problem, state.n_params + len(problem.gamma_names))
    trace_rows: list = []
    t_start = time.perf_counter()
    try:
        t0 = time.perf_counter()
        state = pretrain(cfg, state, bundle, problem, trace_rows)
        t1 = time.perf_counter()
        # Coefficients are drawn at the start of fine-tuning.
        state.inverse = init_inverse(problem.gamma_names, cfg.seed_init)
        t2 = time.perf_counter()
        state, weights, trace_report, result = finetune(cfg, state, bundle, problem, trace_rows)
        t3 = time.perf_counter()
    except PhaseAbort as e:
        report["aborted_phase"] = e.phase
        report["abort_iteration"] = e.iteration
        report["abort_message"] = str(e)
        report["timings"]["total_s"] = time.perf_counter() - t_start
        _persist(cfg, report, None, trace_rows)
        return report

    report["timings"] = {
        "pretrain_s": t1 - t0,
        "weights_and_finetune_s": t3 - t2,
        "total_s": t3 - t_start,
    }
    report["converged"] = True
    report["weights"] = dict(weights.values)
    report["trace_reports"] = [trace_report.as_dict()] if trace_report else []
    report["lbfgs"] = {
        "iterations": result.iterations,
        "n_evals": result.n_evals,
        "converged": result.converged,
        "reason": result.reason,
        "ls_failures": result.ls_failures,
    }
    report["loss_final"] = composite_value(state, problem, bundle, weights).as_dict()
    report.update(_metrics(state, problem, bundle))
    _persist(cfg, report, state, trace_rows)
    return report


def train_pinn_baseline(cfg: TrainConfig) -> dict:
    """Composite-loss training from scratch, for comparison runs."""
    cfg = cfg.resolved()
    cfg.validate()
    if cfg.mode != "pinn_baseline":
        raise ConfigError("train_pinn_baseline requires mode pinn_baseline")
    problem = get_problem(cfg.problem)
    bundle = _make_bundle(cfg, problem)
    state = TrainableState(
        init_network(_network_widths(cfg, problem), cfg.seed_init),
        init_inverse(problem.gamma_names, cfg.seed_init),
    )
    report = _report_skeleton(cfg, problem, state.n_params)
    trace_rows: list = []
    trace_reports = []
    t_start = time.perf_counter()
    try:
        flat = state.flatten()
        adam = AdamState(lr=cfg.adam_lr)
        weights = LossWeights.ones(problem)
        t0 = time.perf_counter()
        for it in range(1, cfg.m1 + 1):
            cur = state.with_flat(flat)
            if (it - 1) % cfg.weight_cadence == 0:
                weights, tr = weights_for_state(cur, problem, bundle)
                trace_reports.append(tr.as_dict())
            bd, grad = composite(cur, problem, bundle, weights)
            if not np.isfinite(bd.total):
                raise PhaseAbort("adam", it, f"composite loss non-finite at iteration {it}")
            try:
                flat = adam_step(adam, flat, grad)
            except OptimizationError as e:
                raise PhaseAbort("adam", it, str(e)) from e
            w = time.perf_counter() - t0
            for tid, val in bd.terms.items():
                trace_rows.append((it, "adam", tid, val, bd.total, w))
        t1 = time.perf_counter()
        state = state.with_flat(flat)
        # Weights stay frozen through the quasi-Newton stage.
        state, weights, _, result = finetune(cfg, state, bundle, problem, trace_rows,
                                             weights=weights)
        t2 = time.perf_counter()
    except PhaseAbort as e:
        report["aborted_phase"] = e.phase
        report["abort_iteration"] = e.iteration
        report["abort_message"] = str(e)
        report["timings"]["total_s"] = time.perf_counter() - t_start
        _persist(cfg, report, None, trace_rows)
        return report

    report["timings"] = {
        "adam_s": t1 - t0,
        "lbfgs_s": t2 - t1,
        "total_s": t2 - t_start,
    }
    report["converged"] = True
    report["weights"] = dict(weights.values)
    report["trace_reports"] = trace_reports
    report["lbfgs"] = {
        "iterations": result.iterations,
        "n_evals": result.n_evals,
        "converged": result.converged,
        "reason": result.reason,
        "ls_failures": result.ls_failures,
    }
    report["loss_final"] = composite_value(state, problem, bundle, weights).as_dict()
    report.update(_metrics(state, problem, bundle))
    _persist(cfg, report, state, trace_rows)
    return report


def train(cfg: TrainConfig) -> dict:
    cfg.validate()
    if cfg.mode == "dg_pinn":
        return train_dg_pinn(cfg)
    return train_pinn_baseline(cfg)


# ---------------------------------------------------------------------------
# persistence


def _persist(cfg: TrainConfig, report: dict, state, trace_rows) -> None:
    if not cfg.out_dir:
        return
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_report(os.path.join(cfg.out_dir, "report.json"), report)
    if state is not None:
        save_checkpoint(os.path.join(cfg.out_dir, "checkpoint.bin"), state, cfg.problem)
    write_trace_csv(os.path.join(cfg.out_dir, "trace.csv"), trace_rows)
    write_config_file(os.path.join(cfg.out_dir, "config.cfg"), cfg)


def write_report(path, report: dict) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def write_trace_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iter", "phase", "term_id", "value", "weighted_total", "wallclock_s"])
        for r in rows:
            w.writerow([r[0], r[1], r[2], repr(r[3]), repr(r[4]), f"{r[5]:.6f}"])


def write_config_file(path, cfg: TrainConfig) -> None:
    echo = config_echo(cfg)
    with open(path, "w") as f:
        f.write("[train]\n")
        for key in sorted(echo):
            val = echo[key]
            if val is None:
                continue
            if isinstance(val, (list, tuple)):
                val = ",".join(str(v) for v in val)
            f.write(f"{key} = {val}\n")


def evaluate_run(run_dir: str) -> dict:
    """Recompute the report's metrics from the persisted checkpoint.

    Rebuilds the dataset from the config echo (seeds included) and returns
    the freshly computed metric dict; used by the `eval` command and by the
    recompute-reproducibility check.
    """
    from .cli import config_from_file  # local import to avoid a cycle

    cfg = config_from_file(os.path.join(run_dir, "config.cfg"))
    state, pid = load_checkpoint(os.path.join(run_dir, "checkpoint.bin"))
    if pid != cfg.problem:
        raise networkmod.CheckpointError(
            f"checkpoint problem {pid!r} does not match config {cfg.problem!r}"
        )
    problem = get_problem(pid)
    expected = _network_widths(cfg, problem)
    if tuple(state.net.widths) != tuple(expected):
        raise networkmod.CheckpointError(
            f"checkpoint widths {state.net.widths} do not match config {expected}"
        )
    bundle = _make_bundle(cfg, problem)
    return _metrics(state, problem, bundle)
