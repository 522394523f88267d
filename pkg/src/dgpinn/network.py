"""Fully-connected tanh network: parameters, initialization, evaluation.

The network maps an input vector through H hidden tanh layers to an affine
output layer (no output activation).  Parameters live as per-layer weight
matrices W (out, in) and bias vectors b (out,); the optimizers see them
through a flat float64 vector that also carries the unknown PDE
coefficients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"DGPN1"


class ShapeError(ValueError):
    """Input or parameter shapes do not chain."""


@dataclass
class NetworkParams:
    """Per-layer weights and biases; layer h maps width[h] -> width[h+1]."""

    weights: list  # list of (out, in) float64 arrays
    biases: list  # list of (out,) float64 arrays

    @property
    def widths(self) -> tuple:
        return tuple([self.weights[0].shape[1]] + [w.shape[0] for w in self.weights])

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "NetworkParams":
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class InverseParams:
    """Named unknown PDE coefficients, in the problem's declared order."""

    names: tuple
    values: np.ndarray  # 1-d float64, aligned with names

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def copy(self) -> "InverseParams":
        return InverseParams(self.names, self.values.copy())


@dataclass
class TrainableState:
    """The full optimization vector: network parameters plus coefficients."""

    net: NetworkParams
    inverse: InverseParams | None = None

    @property
    def n_params(self) -> int:
        n = self.net.n_params
        if self.inverse is not None:
            n += self.inverse.values.size
        return n

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.net.weights, self.net.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        if self.inverse is not None:
            parts.append(self.inverse.values)
        return np.concatenate(parts)

    def with_flat(self, flat: np.ndarray) -> "TrainableState":
        """Rebuild a state of identical structure from a flat vector."""
        if flat.shape != (self.n_params,):
            raise ShapeError(f"flat vector has length {flat.size}, expected {self.n_params}")
        ws, bs = [], []
        off = 0
        for w, b in zip(self.net.weights, self.net.biases):
            ws.append(flat[off : off + w.size].reshape(w.shape).copy())
            off += w.size
            bs.append(flat[off : off + b.size].copy())
            off += b.size
        inv = None
        if self.inverse is not None:
            inv = InverseParams(self.inverse.names, flat[off:].copy())
        return TrainableState(NetworkParams(ws, bs), inv)

    def copy(self) -> "TrainableState":
        return TrainableState(
            self.net.copy(), self.inverse.copy() if self.inverse is not None else None
        )


def init_network(layer_widths, seed) -> NetworkParams:
    """Draw weights and biases uniformly on [-1/sqrt(fan_in), +1/sqrt(fan_in)].

    fan_in is the input width of each layer; biases use the same rule.
    Deterministic per seed: layers are drawn in order, weights before biases.
    """
    widths = [int(w) for w in layer_widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"invalid layer widths: {layer_widths}")
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 0])
    ws, bs = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        bs.append(rng.uniform(-bound, bound, size=(fan_out,)))
    return NetworkParams(ws, bs)


def init_inverse(gamma_names, seed) -> InverseParams:
    """Draw each unknown coefficient uniformly on [0, 1), deterministic per seed."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 1])
    names = tuple(gamma_names)
    return InverseParams(names, rng.random(len(names)))


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Plain batched evaluation, (n, d_in) -> (n, d_out).

    A single input vector is accepted and returned 1-d.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != params.widths[0]:
        raise ShapeError(
            f"input width {a.shape[1]} does not match network input width {params.widths[0]}"
        )
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.tanh(a @ w.T + b)
    a = a @ params.weights[-1].T + params.biases[-1]
    return a[0] if single else a


def save_checkpoint(path, state: TrainableState, problem_id: str) -> None:
    """Binary checkpoint: magic, JSON header line, little-endian float64 payload.

    Layout: b"DGPN1" + b"\\n" + header JSON + b"\\n" + flat parameter vector
    (network weights/biases in layer order, then coefficients) as raw
    little-endian float64.
    """
    flat = state.flatten()
    header = {
        "problem": problem_id,
        "widths": list(state.net.widths),
        "gamma": list(state.inverse.names) if state.inverse is not None else [],
        "count": int(flat.size),
    }
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(json.dumps(header, sort_keys=True).encode("ascii") + b"\n")
        f.write(flat.astype("<f8").tobytes())


class CheckpointError(ValueError):
    """Malformed or mismatched checkpoint file."""


def load_checkpoint(path):
    """Returns (state, problem_id) or raises CheckpointError."""
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        try:
            header = json.loads(f.readline().decode("ascii"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"unreadable header: {e}") from e
        payload = f.read()
    widths = header.get("widths")
    gamma = header.get("gamma", [])
    count = header.get("count")
    if not widths or count is None:
        raise CheckpointError("header missing widths or count")
    flat = np.frombuffer(payload, dtype="<f8")
    if flat.size != count:
        raise CheckpointError(f"payload has {flat.size} values, header says {count}")
    ws, bs = [], []
    off = 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        need = fan_out * fan_in + fan_out
        if off + need > flat.size:
            raise CheckpointError("payload shorter than the declared architecture")
        ws.append(flat[off : off + fan_out * fan_in].reshape(fan_out, fan_in).copy())
        off += fan_out * fan_in
        bs.append(flat[off : off + fan_out].copy())
        off += fan_out
    inv = None
    if gamma:
        if off + len(gamma) != flat.size:
            raise CheckpointError("payload length does not match coefficients")
        inv = InverseParams(tuple(gamma), flat[off:].copy())
    elif off != flat.size:
        raise CheckpointError("payload longer than the declared architecture")
    return TrainableState(NetworkParams(ws, bs), inv), header["problem"]
