"""Observation grids, training subsets, held-out test set, and noise.

Observed data live on an evenly spaced grid.  Noise, when requested, is
applied to the full-grid field per channel before any subset is drawn, so
the data loss and test metrics see the same corrupted field.  All draws are
without replacement, uniform over the grid nodes of the relevant manifold,
and deterministic per seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .problems import ProblemSpec, analytic_solution


class SamplingError(ValueError):
    """Requested counts exceed the candidate population, or bad noise setup."""


@dataclass(frozen=True)
class GridSpec:
    """Per-dimension ranges and node counts; spacing = range / (count - 1)."""

    ranges: tuple  # ((lo, hi), ...)
    counts: tuple

    def __post_init__(self):
        if len(self.ranges) != len(self.counts):
            raise ValueError("ranges and counts must align")
        if any(c < 2 for c in self.counts):
            raise ValueError("need at least 2 nodes per dimension")

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.counts))

    def axes(self):
        return [np.linspace(lo, hi, c) for (lo, hi), c in zip(self.ranges, self.counts)]

    def nodes(self) -> np.ndarray:
        """All grid nodes, shape (n_nodes, ndim), last dimension fastest."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def interior_mask(self) -> np.ndarray:
        idx = np.unravel_index(np.arange(self.n_nodes), self.counts)
        mask = np.ones(self.n_nodes, dtype=bool)
        for dim, c in enumerate(self.counts):
            mask &= (idx[dim] > 0) & (idx[dim] < c - 1)
        return mask


def default_grid(problem: ProblemSpec) -> GridSpec:
    return GridSpec(problem.domain, problem.grid_counts)


@dataclass
class DatasetBundle:
    """Sampled training subsets plus the held-out test set for one problem.

    Field values are stored per channel name.  When noise is active,
    `data_values` carry the corrupted field and `test_values_clean` /
    `test_values_noisy` are both populated; otherwise noisy equals clean.
    """

    problem_id: str
    grid: GridSpec
    residual_points: np.ndarray
    initial_points: np.ndarray
    boundary_points: np.ndarray
    data_points: np.ndarray
    data_values: dict  # channel -> (N_d,)
    test_points: np.ndarray
    test_values_clean: dict
    test_values_noisy: dict
    counts: dict
    seed: int
    noise_seed: int | None
    snr_db: float | None
    data_indices: np.ndarray
    test_indices: np.ndarray

    @property
    def n_test(self) -> int:
        return len(self.test_points)


def add_noise(values: np.ndarray, snr_db, seed) -> np.ndarray:
    """Additive white Gaussian noise at the given SNR (dB).

    Noise variance is P_signal / 10^(snr_db/10) with P_signal the mean
    square of the clean values.  snr_db = None or +inf means no noise.
    """
    values = np.asarray(values, dtype=np.float64)
    if snr_db is None or math.isinf(snr_db):
        return values.copy()
    if not math.isfinite(snr_db):
        raise SamplingError("snr_db must be finite or +inf")
    if values.size == 0:
        raise SamplingError("cannot add noise to an empty signal")
    p_signal = float(np.mean(values**2))
    if p_signal == 0.0:
        raise SamplingError("SNR is undefined for an all-zero signal")
    sigma = math.sqrt(p_signal / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 2])
    return values + rng.normal(0.0, sigma, size=values.shape)


def _manifold_indices(problem: ProblemSpec, grid: GridSpec, which: str) -> np.ndarray:
    n = grid.n_nodes
    if which == "grid":
        return np.arange(n)
    if which == "grid_interior":
        return np.flatnonzero(grid.interior_mask())
    idx = np.unravel_index(np.arange(n), grid.counts)
    if which == "initial":
        return np.flatnonzero(idx[problem.time_dim] == 0)
    if which == "boundary":
        d = problem.boundary_dim
        return np.flatnonzero((idx[d] == 0) | (idx[d] == grid.counts[d] - 1))
    raise ValueError(f"unknown manifold {which}")


def build_bundle(problem: ProblemSpec, grid: GridSpec, counts: dict, seed,
                 snr_db=None, noise_seed=None) -> DatasetBundle:
    """Draw the four training subsets and the held-out test set.

    counts: {"n_r": ..., "n_i": ..., "n_b": ..., "n_d": ...}; the initial
    and boundary counts are ignored for problems without those losses.
    The test set is the grid minus the data-set nodes.
    """
    nodes = grid.nodes()
    observed = analytic_solution(problem, nodes)

    if snr_db is not None and noise_seed is None:
        noise_seed = seed
    noisy = {}
    for ch in problem.eval_channels:
        field = observed[ch]
        if ch in problem.data_channels and snr_db is not None:
            noisy[ch] = add_noise(field, snr_db, _channel_seed(noise_seed, ch))
        else:
            noisy[ch] = field.copy()

    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 3])
    # Fixed draw order: residual, initial, boundary, data.
    res_idx = _draw(rng, _manifold_indices(problem, grid, problem.residual_manifold),
                    counts["n_r"], "residual")
    if problem.ic_ops:
        ini_idx = _draw(rng, _manifold_indices(problem, grid, "initial"),
                        counts["n_i"], "initial")
    else:
        ini_idx = np.empty(0, dtype=int)
    if problem.bc_ops:
        bnd_idx = _draw(rng, _manifold_indices(problem, grid, "boundary"),
                        counts["n_b"], "boundary")
    else:
        bnd_idx = np.empty(0, dtype=int)
    data_idx = _draw(rng, _manifold_indices(problem, grid, problem.data_manifold),
                     counts["n_d"], "data")

    test_mask = np.ones(grid.n_nodes, dtype=bool)
    test_mask[data_idx] = False
    test_idx = np.flatnonzero(test_mask)

    return DatasetBundle(
        problem_id=problem.pid,
        grid=grid,
        residual_points=nodes[res_idx],
        initial_points=nodes[ini_idx],
        boundary_points=nodes[bnd_idx],
        data_points=nodes[data_idx],
        data_values={ch: noisy[ch][data_idx] for ch in problem.data_channels},
        test_points=nodes[test_idx],
        test_values_clean={ch: observed[ch][test_idx] for ch in problem.eval_channels},
        test_values_noisy={ch: noisy[ch][test_idx] for ch in problem.eval_channels},
        counts=dict(counts),
        seed=int(seed),
        noise_seed=None if snr_db is None else int(noise_seed),
        snr_db=None if snr_db is None else float(snr_db),
        data_indices=data_idx,
        test_indices=test_idx,
    )


def _channel_seed(seed, channel: str) -> int:
    # Independent noise per corrupted channel.
    return (int(seed) * 1000003 + sum(channel.encode())) & 0xFFFFFFFFFFFFFFFF


def _draw(rng, population: np.ndarray, count: int, label: str) -> np.ndarray:
    if count > len(population):
        raise SamplingError(
            f"{label} count {count} exceeds candidate population {len(population)}"
        )
    return np.sort(population[rng.choice(len(population), size=count, replace=False)])


def default_counts(problem: ProblemSpec) -> dict:
    return {"n_r": 2000, "n_i": 100, "n_b": 200, "n_d": 10000}


# ---------------------------------------------------------------------------
# persistence: whitespace-separated columns plus a JSON manifest


def save_bundle(bundle: DatasetBundle, problem: ProblemSpec, out_dir) -> None:
    """Write each subset as a plain-text column file plus manifest.json.

    Columns are the input coordinates followed by the observed channels
    (data and test sets only), one sample per line, '#' header line first.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    coord_names = list(problem.input_names)

    def write(name, pts, channels=None):
        path = os.path.join(out_dir, f"{name}.txt")
        cols = [pts[:, i] for i in range(pts.shape[1])]
        names = list(coord_names)
        for ch, vals in (channels or {}).items():
            cols.append(vals)
            names.append(ch)
        with open(path, "w") as f:
            f.write("# " + " ".join(names) + "\n")
            for row in zip(*cols) if cols else []:
                f.write(" ".join(repr(float(c)) for c in row) + "\n")

    write("residual", bundle.residual_points)
    write("initial", bundle.initial_points)
    write("boundary", bundle.boundary_points)
    write("data", bundle.data_points, bundle.data_values)
    write("test", bundle.test_points, bundle.test_values_clean)
    manifest = {
        "problem": bundle.problem_id,
        "counts": bundle.counts,
        "seed": bundle.seed,
        "noise_seed": bundle.noise_seed,
        "snr_db": bundle.snr_db,
        "grid_ranges": [list(r) for r in bundle.grid.ranges],
        "grid_counts": list(bundle.grid.counts),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_column_file(path) -> np.ndarray:
    """Whitespace-separated numeric columns; '#' lines are comments."""
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(tok) for tok in line.split()])
    if not rows:
        return np.empty((0, 0))
    return np.asarray(rows, dtype=np.float64)


def bundle_from_external(problem: ProblemSpec, path, counts: dict, seed) -> DatasetBundle:
    """Build a bundle from an ingested `x y t u v p` column file.

    The file's rows are the observation pool: data and residual subsets are
    drawn from it without replacement and the remaining rows form the test
    set.  Pressure, when present, is kept for evaluation only.
    """
    raw = load_column_file(path)
    if raw.ndim != 2 or raw.shape[1] < 5:
        raise SamplingError(f"external data file needs columns x y t u v [p], got {raw.shape}")
    pts = raw[:, :3]
    fields = {"u": raw[:, 3], "v": raw[:, 4]}
    if raw.shape[1] >= 6:
        fields["p"] = raw[:, 5]
    n = len(raw)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 3])
    res_idx = _draw(rng, np.arange(n), counts["n_r"], "residual")
    data_idx = _draw(rng, np.arange(n), counts["n_d"], "data")
    test_mask = np.ones(n, dtype=bool)
    test_mask[data_idx] = False
    test_idx = np.flatnonzero(test_mask)
    eval_channels = [ch for ch in problem.eval_channels if ch in fields]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    grid = GridSpec(tuple((float(a), float(b)) for a, b in zip(lo, hi)), (2, 2, 2))
    return DatasetBundle(
        problem_id=problem.pid,
        grid=grid,
        residual_points=pts[res_idx],
        initial_points=np.empty((0, 3)),
        boundary_points=np.empty((0, 3)),
        data_points=pts[data_idx],
        data_values={ch: fields[ch][data_idx] for ch in problem.data_channels},
        test_points=pts[test_idx],
        test_values_clean={ch: fields[ch][test_idx] for ch in eval_channels},
        test_values_noisy={ch: fields[ch][test_idx] for ch in eval_channels},
        counts=dict(counts),
        seed=int(seed),
        noise_seed=None,
        snr_db=None,
        data_indices=data_idx,
        test_indices=test_idx,
    )
