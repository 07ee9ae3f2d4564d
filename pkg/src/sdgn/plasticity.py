"""Sparse synapses and regularized spike-timing-dependent plasticity.

The update for a pre->post pair with timing difference dt = t_post - t_pre is

    dw = eta_t * K(dt) * (1 - w / w_max)^reg_alpha * exp(-reg_beta * |w|)

with the double-exponential kernel K (potentiation for dt > 0, depression for
dt < 0, zero at exactly 0). The soft-bound factor vanishes at w = w_max; a
hard clamp to [-w_max, w_max] backstops the regularizer. Pairing is nearest
neighbor: each spike pairs only against the partner's most recent spike, and
pairs older than pairing_window are skipped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EventFileError, InsufficientDataError, ValidationError

SCHEDULES = ("constant", "inv_sqrt")


@dataclass(frozen=True)
class StdpConfig:
    eta: float = 0.01
    a_plus: float = 1.0
    a_minus: float = 1.05
    tau_plus: float = 0.02
    tau_minus: float = 0.02
    reg_alpha: float = 2.0
    reg_beta: float = 0.1
    schedule: str = "constant"

    def __post_init__(self):
        if self.eta <= 0 or self.tau_plus <= 0 or self.tau_minus <= 0:
            raise ValidationError("eta and time constants must be positive")
        if self.a_plus < 0 or self.a_minus < 0 or self.reg_alpha < 0 or self.reg_beta < 0:
            raise ValidationError("kernel amplitudes and regularizer exponents must be non-negative")
        if self.schedule not in SCHEDULES:
            raise ValidationError(f"schedule must be one of {SCHEDULES}")

    @property
    def pairing_window(self) -> float:
        # Pairs further apart than five kernel time constants are ignored.
        return 5.0 * max(self.tau_plus, self.tau_minus)

    def eta_at(self, step: int) -> float:
        if self.schedule == "inv_sqrt":
            return self.eta / math.sqrt(max(step, 1))
        return self.eta


class SynapseMatrix:
    """Fixed sparse topology with bounded weights, stored as parallel arrays."""

    def __init__(self, pre, post, w, num_neurons: int, w_max: float = 1.0):
        self.pre = np.asarray(pre, dtype=np.int64)
        self.post = np.asarray(post, dtype=np.int64)
        self.w = np.asarray(w, dtype=np.float64).copy()
        self.num_neurons = int(num_neurons)
        self.w_max = float(w_max)
        if not (self.pre.shape == self.post.shape == self.w.shape) or self.pre.ndim != 1:
            raise ValidationError("pre, post, w must be 1-d arrays of equal length")
        if self.w_max <= 0:
            raise ValidationError("w_max must be positive")
        if self.pre.size:
            if self.pre.min() < 0 or self.pre.max() >= num_neurons:
                raise ValidationError("presynaptic index out of range")
            if self.post.min() < 0 or self.post.max() >= num_neurons:
                raise ValidationError("postsynaptic index out of range")
        if np.any(np.abs(self.w) > self.w_max):
            raise ValidationError("initial weights exceed w_max in magnitude")
        keys = set(zip(self.pre.tolist(), self.post.tolist()))
        if len(keys) != self.pre.size:
            raise ValidationError("duplicate synapse")
        self._index = {k: i for i, k in enumerate(zip(self.pre.tolist(), self.post.tolist()))}
        self.out_edges = [np.flatnonzero(self.pre == v) for v in range(self.num_neurons)]
        self.in_edges = [np.flatnonzero(self.post == v) for v in range(self.num_neurons)]

    def __len__(self) -> int:
        return int(self.pre.size)

    def weight(self, pre: int, post: int) -> float:
        return float(self.w[self._index[(pre, post)]])

    def snapshot(self) -> np.ndarray:
        return self.w.copy()

    def randomize(self, rng: np.random.Generator, lo: float = -0.1, hi: float = 0.1) -> None:
        self.w = rng.uniform(lo, hi, size=self.w.size)

    def block_mass(self, groups: list[np.ndarray]) -> np.ndarray:
        """Sum of |w| between neuron groups; entry [a, b] is group b -> group a."""
        g = len(groups)
        label = np.full(self.num_neurons, -1)
        for k, idx in enumerate(groups):
            label[idx] = k
        mass = np.zeros((g, g))
        src, dst = label[self.pre], label[self.post]
        ok = (src >= 0) & (dst >= 0)
        np.add.at(mass, (dst[ok], src[ok]), np.abs(self.w[ok]))
        return mass


def random_topology(
    num_neurons: int, fan_out: int, rng: np.random.Generator, w_max: float = 1.0
) -> SynapseMatrix:
    """Uniform random graph with a fixed fan-out per neuron, no self-loops."""
    if fan_out < 0 or fan_out > num_neurons - 1:
        raise ValidationError("fan_out must lie in [0, num_neurons - 1]")
    pre, post = [], []
    for j in range(num_neurons):
        others = np.delete(np.arange(num_neurons), j)
        targets = rng.choice(others, size=fan_out, replace=False)
        for i in np.sort(targets):
            pre.append(j)
            post.append(int(i))
    return SynapseMatrix(pre, post, np.zeros(len(pre)), num_neurons, w_max=w_max)


def stdp_kernel(dt: float, cfg: StdpConfig) -> float:
    """Double-exponential timing kernel; zero for simultaneous spikes."""
    if dt > 0:
        return cfg.a_plus * math.exp(-dt / cfg.tau_plus)
    if dt < 0:
        return -cfg.a_minus * math.exp(dt / cfg.tau_minus)
    return 0.0


def weight_update(w: float, dt: float, cfg: StdpConfig, w_max: float, step: int = 1) -> float:
    """One pair update with soft bounds, then the hard clamp."""
    soft = (1.0 - w / w_max) ** cfg.reg_alpha * math.exp(-cfg.reg_beta * abs(w))
    new = w + cfg.eta_at(step) * stdp_kernel(dt, cfg) * soft
    return min(max(new, -w_max), w_max)


def apply_on_spike(
    weights: SynapseMatrix,
    cfg: StdpConfig,
    neuron: int,
    t: float,
    last_spike: np.ndarray,
    step: int = 1,
) -> None:
    """Update the spiking neuron's synapses against partners' last spikes.

    Incoming synapses potentiate (partner fired first, dt > 0); outgoing
    synapses depress (this neuron is the presynaptic side, dt < 0). The
    caller records last_spike[neuron] = t afterwards.
    """
    window = cfg.pairing_window
    for k in weights.in_edges[neuron]:
        tp = last_spike[weights.pre[k]]
        if tp >= 0.0 and t - tp <= window:
            weights.w[k] = weight_update(weights.w[k], t - tp, cfg, weights.w_max, step)
    for k in weights.out_edges[neuron]:
        tp = last_spike[weights.post[k]]
        if tp >= 0.0 and t - tp <= window:
            weights.w[k] = weight_update(weights.w[k], tp - t, cfg, weights.w_max, step)


class StdpEngine:
    """Online pairing state: last spike per neuron plus the update-step counter."""

    def __init__(self, weights: SynapseMatrix, cfg: StdpConfig):
        self.weights = weights
        self.cfg = cfg
        self.last_spike = np.full(weights.num_neurons, -1.0)
        self.step = 0

    def on_spike(self, neuron: int, t: float) -> None:
        self.step += 1
        apply_on_spike(self.weights, self.cfg, neuron, t, self.last_spike, self.step)
        self.last_spike[neuron] = t


def convergence_slope(snapshots: list[tuple[float, np.ndarray]]) -> float:
    """Least-squares slope of log ||w_T - w*||^2 against log T.

    The final snapshot is the reference w*, so the fit runs over the earlier
    snapshots. Needs at least five snapshots at increasing T.
    """
    if len(snapshots) < 5:
        raise InsufficientDataError("convergence_slope needs at least 5 snapshots")
    ts = np.array([float(t) for t, _ in snapshots])
    if np.any(ts <= 0) or np.any(np.diff(ts) <= 0):
        raise ValidationError("snapshot times must be positive and strictly increasing")
    ref = np.asarray(snapshots[-1][1], dtype=np.float64)
    d = np.array([float(np.sum((np.asarray(w) - ref) ** 2)) for _, w in snapshots[:-1]])
    keep = d > 0
    if keep.sum() < 2:
        raise InsufficientDataError("not enough nonzero distances for a slope")
    return float(np.polyfit(np.log(ts[:-1][keep]), np.log(d[keep]), 1)[0])


def write_weight_file(weights: SynapseMatrix, path) -> None:
    order = np.lexsort((weights.post, weights.pre))
    lines = [
        json.dumps({"pre": int(weights.pre[k]), "post": int(weights.post[k]), "w": float(weights.w[k])})
        for k in order
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_weight_file(source, num_neurons: int | None = None, w_max: float = 1.0) -> SynapseMatrix:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    pre, post, w = [], [], []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventFileError(f"invalid JSON ({exc.msg})", line_no) from None
        if not isinstance(obj, dict) or set(obj) != {"pre", "post", "w"}:
            raise EventFileError('weight records must have exactly the keys "pre", "post", "w"', line_no)
        pre.append(int(obj["pre"]))
        post.append(int(obj["post"]))
        w.append(float(obj["w"]))
    if num_neurons is None:
        num_neurons = max(max(pre, default=-1), max(post, default=-1)) + 1
    return SynapseMatrix(pre, post, w, num_neurons, w_max=w_max)
