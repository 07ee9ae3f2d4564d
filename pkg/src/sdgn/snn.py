"""Event-driven leaky integrate-and-fire network.

Membrane dynamics per neuron:

    tau_m dv/dt = -leak_alpha (v - v_rest) + I_syn(t)

where I_syn sums exponentially decaying impulses: every delivered spike adds
w * syn_epsilon to the neuron's current, which then decays at rate syn_beta.
All kernel terms share syn_beta, so one scalar per neuron carries the exact
sum. Between deliveries the solver takes adaptive exponential-Euler steps of
size min(tau_min / max_i |v_i|, dt_max), freezing the current over each step;
threshold crossings are resolved at step boundaries, after which the neuron
resets and its spike is delivered to postsynaptic targets one synaptic delay
later through a priority queue. Output spike times are globally
non-decreasing and the clock never passes a pending delivery.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import SimulationError, ValidationError
from .events import SpikeTrain
from .plasticity import StdpEngine, SynapseMatrix, random_topology

# Aggregated synaptic current is treated as zero once its decay exponent
# drops below -30.
EXP_CUTOFF = 30.0


@dataclass(frozen=True)
class LifParams:
    tau_m: float = 0.02
    leak_alpha: float = 1.0
    v_rest: float = 0.0
    v_th: float = 1.0
    v_reset: float = 0.0
    syn_epsilon: float = 1.0
    syn_beta: float = 50.0
    surrogate_sharpness: float = 1.0

    def __post_init__(self):
        if self.tau_m <= 0 or self.leak_alpha <= 0 or self.syn_beta <= 0:
            raise ValidationError("tau_m, leak_alpha, syn_beta must be positive")
        if self.syn_epsilon < 0 or self.surrogate_sharpness <= 0:
            raise ValidationError("syn_epsilon must be >= 0 and surrogate_sharpness > 0")
        if not self.v_reset <= self.v_rest < self.v_th:
            raise ValidationError("potentials must satisfy v_reset <= v_rest < v_th")


@dataclass(frozen=True)
class SimConfig:
    tau_min: float = 1e-3
    dt_max: float = 5e-3
    syn_delay: float = 1e-3

    def __post_init__(self):
        if self.tau_min <= 0 or self.dt_max <= 0 or self.syn_delay <= 0:
            raise ValidationError("tau_min, dt_max, syn_delay must be positive")


@dataclass(frozen=True)
class LifNetwork:
    """Recurrent weights plus the input channel -> neuron fan-in."""

    params: LifParams
    weights: SynapseMatrix
    input_map: tuple[np.ndarray, ...]
    input_weight: float = 3.0

    def __post_init__(self):
        clean = []
        for targets in self.input_map:
            idx = np.asarray(targets, dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= self.weights.num_neurons):
                raise ValidationError("input_map index out of range")
            if np.unique(idx).size != idx.size:
                raise ValidationError("input_map targets must be unique per channel")
            clean.append(idx)
        object.__setattr__(self, "input_map", tuple(clean))

    @property
    def num_neurons(self) -> int:
        return self.weights.num_neurons

    @property
    def num_inputs(self) -> int:
        return len(self.input_map)


def identity_network(
    weights: SynapseMatrix, params: LifParams = LifParams(), input_weight: float = 3.0
) -> LifNetwork:
    """One input channel per neuron, channel k driving neuron k."""
    fan_in = tuple(np.array([k]) for k in range(weights.num_neurons))
    return LifNetwork(params=params, weights=weights, input_map=fan_in, input_weight=input_weight)


def block_network(
    num_types: int,
    neurons_per_type: int,
    fan_out: int,
    rng: np.random.Generator,
    params: LifParams = LifParams(),
    w_max: float = 1.0,
    input_weight: float = 3.0,
) -> LifNetwork:
    """Each input channel drives its own block of neurons; recurrent topology random."""
    n = num_types * neurons_per_type
    weights = random_topology(n, fan_out, rng, w_max=w_max)
    weights.randomize(rng)
    blocks = tuple(
        np.arange(u * neurons_per_type, (u + 1) * neurons_per_type) for u in range(num_types)
    )
    return LifNetwork(params=params, weights=weights, input_map=blocks, input_weight=input_weight)


class LifNetworkState:
    """Potentials, aggregated synaptic currents, clock, and pending deliveries."""

    def __init__(self, network: LifNetwork, v0: np.ndarray | None = None):
        n = network.num_neurons
        p = network.params
        self.v = np.full(n, p.v_rest, dtype=np.float64) if v0 is None else np.array(v0, dtype=np.float64)
        if self.v.shape != (n,):
            raise ValidationError("v0 must have one entry per neuron")
        self.syn = np.zeros(n)
        self.clock = 0.0
        self.last_update = np.zeros(n)
        self.pending: list = []
        self.spikes: list[tuple[float, int]] = []
        self._counter = 0
        self._params = network.params

    def push_delivery(self, t: float, targets: np.ndarray, amps) -> None:
        heapq.heappush(self.pending, (t, self._counter, targets, amps))
        self._counter += 1

    def next_delivery_time(self) -> float:
        return self.pending[0][0] if self.pending else math.inf

    def apply_due(self) -> None:
        while self.pending and self.pending[0][0] <= self.clock:
            _, _, targets, amps = heapq.heappop(self.pending)
            self.syn[targets] += amps


def adaptive_dt(state: LifNetworkState, sim: SimConfig) -> float:
    """min(tau_min / max|v|, dt_max); falls back to dt_max at rest."""
    max_v = float(np.max(np.abs(state.v))) if state.v.size else 0.0
    if not math.isfinite(max_v):
        raise SimulationError(f"membrane potential diverged at t={state.clock:.6g}")
    if max_v == 0.0:
        return sim.dt_max
    return min(sim.tau_min / max_v, sim.dt_max)


def synaptic_current(state: LifNetworkState, weights: SynapseMatrix, neuron: int, t: float) -> float:
    """Aggregated kernel current of one neuron at time t >= state.clock.

    Weighted impulses are already summed in the state; only the shared decay
    remains. Exponents below -30 truncate to zero.
    """
    if not 0 <= neuron < weights.num_neurons:
        raise ValidationError(f"neuron {neuron} out of range")
    if t < state.clock:
        raise ValidationError("cannot evaluate the current in the past")
    expo = -state._params.syn_beta * (t - state.clock)
    if expo <= -EXP_CUTOFF:
        return 0.0
    return float(state.syn[neuron] * math.exp(expo))


def surrogate_grad(v, params: LifParams):
    """Logistic-derivative surrogate with a linear clip window around threshold."""
    x = np.asarray(v, dtype=np.float64) - params.v_th
    s = 1.0 / (1.0 + np.exp(-x))
    gate = np.clip(params.surrogate_sharpness * np.abs(x), 0.0, 1.0)
    out = s * (1.0 - s) * gate
    return float(out) if np.isscalar(v) else out


def min_detectable_dt(params: LifParams, max_v: float, epsilon: float) -> float:
    """Smallest spike-pair separation whose potential difference reaches epsilon."""
    if max_v <= 0 or epsilon <= 0:
        raise ValidationError("max_v and epsilon must be positive")
    return params.tau_m * epsilon / (params.leak_alpha * max_v)


@dataclass
class SimOutput:
    spike_trains: list[SpikeTrain]
    spikes: list[tuple[float, int]]
    trace_times: np.ndarray
    traces: np.ndarray | None
    state: LifNetworkState


class _Recorder:
    def __init__(self, times: np.ndarray, n: int):
        self.times = times
        self.values = np.empty((times.size, n)) if times.size else None
        self.i = 0

    def next_time(self) -> float:
        return self.times[self.i] if self.i < self.times.size else math.inf

    def record_if_due(self, clock: float, v: np.ndarray) -> None:
        while self.i < self.times.size and self.times[self.i] <= clock:
            self.values[self.i] = v
            self.i += 1


def _step_to(network: LifNetwork, state: LifNetworkState, t_new: float,
             stdp: StdpEngine | None, sim: SimConfig, horizon: float) -> None:
    p = network.params
    h = t_new - state.clock
    decay_m = math.exp(-p.leak_alpha * h / p.tau_m)
    v_inf = p.v_rest + state.syn / p.leak_alpha
    state.v = v_inf + (state.v - v_inf) * decay_m
    syn_decay = -p.syn_beta * h
    state.syn *= math.exp(syn_decay) if syn_decay > -EXP_CUTOFF else 0.0
    state.clock = t_new
    state.last_update.fill(t_new)
    if np.any(state.v >= p.v_th):
        fired = np.flatnonzero(state.v >= p.v_th)
        w = network.weights
        for neuron in fired.tolist():
            state.spikes.append((t_new, neuron))
            state.v[neuron] = p.v_reset
            out = w.out_edges[neuron]
            if out.size and t_new + sim.syn_delay <= horizon:
                state.push_delivery(t_new + sim.syn_delay, w.post[out], w.w[out] * p.syn_epsilon)
            if stdp is not None:
                stdp.on_spike(neuron, t_new)


def _advance(network: LifNetwork, state: LifNetworkState, until: float,
             sim: SimConfig, stdp: StdpEngine | None, rec: _Recorder | None,
             horizon: float) -> None:
    state.apply_due()
    if rec is not None:
        rec.record_if_due(state.clock, state.v)
    while state.clock < until:
        stop = min(until, state.next_delivery_time())
        t_new = min(state.clock + adaptive_dt(state, sim), stop)
        if rec is not None:
            t_new = min(t_new, rec.next_time())
        _step_to(network, state, t_new, stdp, sim, horizon)
        state.apply_due()
        if rec is not None:
            rec.record_if_due(state.clock, state.v)


def integrate_to(network: LifNetwork, state: LifNetworkState, t: float,
                 sim: SimConfig = SimConfig(), stdp: StdpEngine | None = None) -> None:
    """Advance the state to time t, emitting spikes and applying due deliveries."""
    if t < state.clock:
        raise ValidationError("cannot integrate backwards")
    _advance(network, state, t, sim, stdp, None, horizon=math.inf)


def run_event_driven(
    network: LifNetwork,
    input_trains: list[SpikeTrain],
    horizon: float,
    sim: SimConfig = SimConfig(),
    stdp: StdpEngine | None = None,
    record_grid: float | None = None,
    sample_times: np.ndarray | None = None,
    v0: np.ndarray | None = None,
) -> SimOutput:
    """Simulate [0, horizon] driven by input spike trains.

    Input channel k excites network.input_map[k] with fixed weight
    input_weight, one synaptic delay after each input spike. Membrane traces
    are sampled on the record grid and/or at explicit sample times.
    """
    if not (np.isfinite(horizon) and horizon > 0):
        raise ValidationError("horizon must be positive and finite")
    if len(input_trains) != network.num_inputs:
        raise ValidationError(
            f"expected {network.num_inputs} input trains, got {len(input_trains)}"
        )
    state = LifNetworkState(network, v0=v0)
    amp = network.input_weight * network.params.syn_epsilon
    for k, train in enumerate(input_trains):
        targets = network.input_map[k]
        if targets.size == 0:
            continue
        for t in train.times:
            td = float(t) + sim.syn_delay
            if td <= horizon:
                state.push_delivery(td, targets, amp)

    if record_grid is not None and record_grid <= 0:
        raise ValidationError("record_grid must be positive")
    grid = np.arange(0.0, horizon + 1e-12, record_grid) if record_grid else np.empty(0)
    extra = np.asarray(sample_times, dtype=np.float64) if sample_times is not None else np.empty(0)
    if extra.size and (extra.min() < 0 or extra.max() > horizon):
        raise ValidationError("sample_times must lie in [0, horizon]")
    rec_times = np.unique(np.concatenate([grid, extra]))
    rec = _Recorder(rec_times, network.num_neurons) if rec_times.size else None

    _advance(network, state, horizon, sim, stdp, rec, horizon)

    per_neuron: list[list[float]] = [[] for _ in range(network.num_neurons)]
    for t, neuron in state.spikes:
        per_neuron[neuron].append(t)
    trains = [SpikeTrain(neuron_id=i, times=np.array(ts)) for i, ts in enumerate(per_neuron)]
    return SimOutput(
        spike_trains=trains,
        spikes=list(state.spikes),
        trace_times=rec_times,
        traces=rec.values if rec is not None else None,
        state=state,
    )


def write_trace_file(trace_times: np.ndarray, traces: np.ndarray, path) -> None:
    """Line-delimited membrane samples: {"neuron": i, "t": ..., "v": ...}."""
    import json
    from pathlib import Path

    lines = []
    for ti, t in enumerate(trace_times.tolist()):
        for i in range(traces.shape[1]):
            lines.append(json.dumps({"neuron": i, "t": t, "v": float(traces[ti, i])}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
