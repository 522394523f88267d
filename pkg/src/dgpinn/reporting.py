"""Metrics, sweeps, and tabular outputs.

Sweeps rerun the two-phase trainer across one axis (pre-training budget,
data-set size, or noise level) with fixed seeds and emit a CSV that parses
back to exactly the in-memory result (floats are written with repr, which
round-trips).  The comparison runner mirrors the result-table layout:
per-method mean test error, coefficient error, and wall-clock, with
non-convergent trials excluded by a median rule.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np


class MetricError(ValueError):
    """Undefined metric (zero-norm truth or zero true coefficient)."""


def relative_l2(truth, prediction) -> float:
    """||truth - prediction||_2 / ||truth||_2."""
    truth = np.asarray(truth, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if truth.shape != prediction.shape or truth.size == 0:
        raise MetricError("relative_l2 needs equal-length non-empty vectors")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise MetricError("relative_l2 is undefined for an identically zero truth")
    return float(np.linalg.norm(truth - prediction) / denom)


def ape(estimate, truth) -> float:
    """Absolute percentage error 100 |estimate - truth| / |truth|."""
    if truth == 0:
        raise MetricError("APE is undefined for a zero true value")
    return 100.0 * abs(estimate - truth) / abs(truth)


def mean_center(values) -> np.ndarray:
    """Subtract the mean; pressure fields are compared only up to a constant."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise MetricError("mean_center needs a non-empty field")
    return values - values.mean()


@dataclass
class SweepResult:
    axis: str  # "m1" | "n_d" | "snr_db"
    values: list
    summaries: list  # one dict per axis value

    def as_rows(self):
        rows = []
        for v, s in zip(self.values, self.summaries):
            rows.append({"axis_value": v, **s})
        return rows


SWEEP_AXES = ("m1", "n_d", "snr_db")

# Full-budget axes from the sensitivity studies; desk runs usually override.
M1_SWEEP_VALUES = [2000, 3000, 4000, 5000, 6000, 7000, 8000, 9000, 10000,
                   15000, 20000, 25000, 30000, 40000, 50000]
ND_SWEEP_VALUES = [500, 600, 700, 800, 900, 1000, 2000, 3000, 4000, 5000,
                   6000, 7000, 8000, 9000, 10000]
SNR_STUDY_VALUES = [40.0, 35.0, 30.0, 25.0]


def summarize_report(report: dict) -> dict:
    """Flatten one run report into sweep-table columns."""
    out = {"converged": report.get("converged", False)}
    for ch, v in report.get("r_t", {}).items():
        out[f"r_t_{ch}"] = v
    if "pressure_r_t" in report:
        out["r_t_p_centered"] = report["pressure_r_t"]
    for name, v in report.get("ape_percent", {}).items():
        out[f"ape_{name}"] = v
    out["wallclock_s"] = report.get("timings", {}).get("total_s")
    if report.get("aborted_phase"):
        out["error"] = report["aborted_phase"]
    return out


def run_sweep(axis: str, values, base_cfg, out_dir=None) -> SweepResult:
    """Train the two-phase model once per axis value with otherwise-fixed config.

    Per-run failures are recorded in the summary and the sweep continues.
    """
    from .training import train_dg_pinn

    if axis not in SWEEP_AXES:
        raise ValueError(f"axis must be one of {SWEEP_AXES}")
    vals = list(values)
    if any(b > a for a, b in zip(vals[1:], vals)):
        raise ValueError("axis values must be strictly increasing")
    summaries = []
    for v in vals:
        cfg = replace(base_cfg)
        if axis == "m1":
            cfg.m1 = int(v)
        elif axis == "n_d":
            cfg.n_d = int(v)
        else:
            cfg.snr_db = float(v)
        if out_dir:
            cfg.out_dir = os.path.join(out_dir, f"{axis}_{v}")
        try:
            report = train_dg_pinn(cfg)
            summaries.append(summarize_report(report))
        except Exception as e:  # recorded, sweep continues
            summaries.append({"converged": False, "error": f"{type(e).__name__}: {e}"})
    result = SweepResult(axis, vals, summaries)
    if out_dir:
        write_sweep_csv(os.path.join(out_dir, f"sweep_{axis}.csv"), result)
    return result


def write_sweep_csv(path, result: SweepResult) -> None:
    rows = result.as_rows()
    cols = ["axis_value"]
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([result.axis] + cols[1:])
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return v


def read_sweep_csv(path) -> SweepResult:
    """Parse a sweep CSV back into a SweepResult (exact round trip)."""
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        axis = header[0]
        cols = header[1:]
        values, summaries = [], []
        for row in r:
            values.append(_parse_cell(row[0]))
            summaries.append(
                {c: _parse_cell(x) for c, x in zip(cols, row[1:]) if x != ""}
            )
    return SweepResult(axis, values, summaries)


def _parse_cell(x):
    if x == "True":
        return True
    if x == "False":
        return False
    try:
        iv = int(x)
        return iv
    except ValueError:
        pass
    try:
        return float(x)
    except ValueError:
        return x


OUTLIER_FACTOR = 1e3  # final loss above this multiple of the cohort median


def compare_methods(base_cfg, trials: int, out_dir=None) -> dict:
    """Run both methods over seeds 0..trials-1 and tabulate the means.

    A trial whose final composite loss exceeds OUTLIER_FACTOR times its
    cohort median is excluded from the averages and counted.
    """
    from .training import train, TrainConfig

    summary = {"problem": base_cfg.problem, "trials": trials, "methods": {}}
    for mode in ("pinn_baseline", "dg_pinn"):
        reports = []
        for s in range(trials):
            cfg = replace(base_cfg)
            cfg.mode = mode
            cfg.seed = s
            cfg.seed_init = cfg.seed_sample = cfg.seed_noise = None
            if out_dir:
                cfg.out_dir = os.path.join(out_dir, f"{mode}_seed{s}")
            reports.append(train(cfg))
        finals = [r.get("loss_final", {}).get("total", np.inf) for r in reports]
        median = float(np.median([f for f in finals if np.isfinite(f)] or [np.inf]))
        kept, excluded = [], 0
        for r, fl in zip(reports, finals):
            ok = r.get("converged", False) and np.isfinite(fl) and fl <= OUTLIER_FACTOR * median
            if ok:
                kept.append(r)
            else:
                excluded += 1
        summary["methods"][mode] = _method_row(kept, excluded)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "comparison.json"), "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
    return summary


def _method_row(reports: list, excluded: int) -> dict:
    row = {"n_kept": len(reports), "n_excluded": excluded}
    if not reports:
        return row
    channels = sorted(reports[0].get("r_t", {}))
    row["r_t_mean"] = {
        ch: float(np.mean([r["r_t"][ch] for r in reports])) for ch in channels
    }
    names = sorted(reports[0].get("ape_percent", {}))
    row["ape_mean_percent"] = {
        n: float(np.mean([r["ape_percent"][n] for r in reports])) for n in names
    }
    if all("pressure_r_t" in r for r in reports):
        row["pressure_r_t_mean"] = float(np.mean([r["pressure_r_t"] for r in reports]))
    row["wallclock_mean_s"] = float(
        np.mean([r["timings"]["total_s"] for r in reports])
    )
    return row
