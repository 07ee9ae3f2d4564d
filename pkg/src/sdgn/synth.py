"""Synthetic event streams on a drifting dependency graph.

A timeline of Erdos-Renyi snapshots tiles [0, duration]; each node carries a
baseline rate and every undirected edge a symmetric excitation (alpha, beta).
Node intensities follow an exponential-kernel mutual excitation model in one
of two modes:

* ``full_history``: lambda_i(t) = mu_i + sum_{j in N(i,t)} alpha_ij *
  sum_{t_j^k < t} exp(-beta_ij (t - t_j^k))
* ``last_spike``: the inner sum keeps only j's most recent spike, which keeps
  the intensity bounded by mu_i + sum_j alpha_ij at any graph density.

Sampling uses Ogata thinning with a piecewise-constant bound refreshed at
every event and at epoch boundaries. A dense Bernoulli-per-bin oracle with
the same timeline and parameters backs the statistical tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EventFileError, SimulationError, ValidationError
from .events import EventSequence

KERNEL_MODES = ("full_history", "last_spike")

# Kernel terms with exponent below -30 are dropped when seeding edge state.
EXP_CUTOFF = 30.0

# Total-intensity ceiling per node; supercritical excitation trips this and
# names the hottest node instead of looping forever.
NODE_INTENSITY_CAP = 1e4
MAX_EVENTS = 2_000_000


@dataclass(frozen=True)
class SynthConfig:
    num_nodes: int = 20
    sparsity: float = 0.3
    duration: float = 1000.0
    num_steps: int = 10
    carryover_fraction: float = 0.5
    mu_range: tuple[float, float] = (0.5, 1.5)
    alpha_range: tuple[float, float] = (0.1, 0.5)
    beta_range: tuple[float, float] = (1.0, 5.0)
    kernel: str = "full_history"
    seed: int = 0

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValidationError("num_nodes must be >= 1")
        if not 0.0 <= self.sparsity <= 1.0:
            raise ValidationError("sparsity must lie in [0, 1]")
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ValidationError("duration must be positive and finite")
        if self.num_steps < 1:
            raise ValidationError("num_steps must be >= 1")
        if not 0.0 <= self.carryover_fraction <= 1.0:
            raise ValidationError("carryover_fraction must lie in [0, 1]")
        for name in ("mu_range", "alpha_range", "beta_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 <= lo <= hi):
                raise ValidationError(f"{name} must satisfy 0 <= lo <= hi")
        if self.beta_range[0] <= 0:
            raise ValidationError("beta_range must be positive")
        if self.kernel not in KERNEL_MODES:
            raise ValidationError(f"kernel must be one of {KERNEL_MODES}")


@dataclass(frozen=True)
class GraphTimeline:
    """Piecewise-constant undirected graph: (epoch_start, edge set) snapshots."""

    snapshots: tuple[tuple[float, frozenset[tuple[int, int]]], ...]
    num_nodes: int
    duration: float

    def __post_init__(self):
        if not self.snapshots:
            raise ValidationError("timeline needs at least one snapshot")
        starts = [s for s, _ in self.snapshots]
        if starts[0] != 0.0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValidationError("epoch starts must begin at 0 and strictly increase")
        if starts[-1] >= self.duration:
            raise ValidationError("last epoch must start before the duration")
        norm = []
        for start, edges in self.snapshots:
            clean = set()
            for i, j in edges:
                if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes) or i == j:
                    raise ValidationError(f"invalid edge ({i}, {j})")
                clean.add((min(i, j), max(i, j)))
            norm.append((float(start), frozenset(clean)))
        object.__setattr__(self, "snapshots", tuple(norm))

    @property
    def epoch_starts(self) -> np.ndarray:
        return np.array([s for s, _ in self.snapshots])

    def epoch_index(self, t: float) -> int:
        if not 0.0 <= t <= self.duration:
            raise ValidationError(f"time {t!r} outside [0, {self.duration}]")
        return max(0, int(np.searchsorted(self.epoch_starts, t, side="right")) - 1)

    def edges_at(self, t: float) -> frozenset[tuple[int, int]]:
        return self.snapshots[self.epoch_index(t)][1]

    def neighbors(self, node: int, t: float) -> list[int]:
        out = [j if i == node else i for i, j in self.edges_at(t) if node in (i, j)]
        return sorted(out)

    def adjacency(self, k: int) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes))
        for i, j in self.snapshots[k][1]:
            a[i, j] = a[j, i] = 1.0
        return a

    def epoch_bounds(self, k: int) -> tuple[float, float]:
        start = self.snapshots[k][0]
        end = self.snapshots[k + 1][0] if k + 1 < len(self.snapshots) else self.duration
        return start, end


@dataclass(frozen=True)
class HawkesParams:
    """Node baselines and symmetric per-edge excitation parameters."""

    mu: np.ndarray
    edge_params: dict[tuple[int, int], tuple[float, float]]
    kernel: str = "full_history"

    def alpha_beta(self, i: int, j: int) -> tuple[float, float]:
        return self.edge_params[(min(i, j), max(i, j))]


@dataclass(frozen=True)
class SynthResult:
    seq: EventSequence
    timeline: GraphTimeline
    params: HawkesParams


def _all_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def sample_graph_timeline(
    cfg: SynthConfig, rng: np.random.Generator | None = None
) -> tuple[GraphTimeline, HawkesParams]:
    """Draw the snapshot timeline and the (mu, alpha, beta) parameters.

    Snapshot 0 is a uniform draw of round(sparsity * N(N-1)/2) edges; each
    later snapshot keeps a carryover_fraction subset and redraws the rest
    among currently absent pairs, so every snapshot has the same edge count.
    Edge parameters are drawn once per undirected pair at first appearance.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(4)[0])
    n = cfg.num_nodes
    pairs = _all_pairs(n)
    total = len(pairs)
    m = int(round(cfg.sparsity * total))
    # fresh edges come from currently-absent pairs, so at high density the
    # kept subset cannot shrink below 2m - total (nothing left to redraw)
    kept = max(int(round(cfg.carryover_fraction * m)), 2 * m - total)

    epoch_len = cfg.duration / cfg.num_steps
    snapshots = []
    current: set[int] = set()
    for k in range(cfg.num_steps):
        if k == 0 or m == 0:
            current = set(rng.choice(total, size=m, replace=False).tolist()) if m else set()
        else:
            keep = set(rng.choice(sorted(current), size=kept, replace=False).tolist()) if kept else set()
            absent = sorted(set(range(total)) - current)
            fresh = set(rng.choice(absent, size=m - kept, replace=False).tolist()) if m - kept else set()
            current = keep | fresh
        edges = frozenset(pairs[idx] for idx in current)
        snapshots.append((k * epoch_len, edges))

    mu = rng.uniform(cfg.mu_range[0], cfg.mu_range[1], size=n)
    edge_params: dict[tuple[int, int], tuple[float, float]] = {}
    for _, edges in snapshots:
        for e in sorted(edges):
            if e not in edge_params:
                alpha = float(rng.uniform(*cfg.alpha_range))
                beta = float(rng.uniform(*cfg.beta_range))
                edge_params[e] = (alpha, beta)

    timeline = GraphTimeline(tuple(snapshots), num_nodes=n, duration=cfg.duration)
    return timeline, HawkesParams(mu=mu, edge_params=edge_params, kernel=cfg.kernel)


def hawkes_intensity(
    node: int,
    t: float,
    seq: EventSequence,
    timeline: GraphTimeline,
    params: HawkesParams,
) -> float:
    """Conditional intensity of one node given the strictly-prior history."""
    if not 0 <= node < timeline.num_nodes:
        raise ValidationError(f"node {node} outside [0, {timeline.num_nodes})")
    if not 0.0 <= t <= timeline.duration:
        raise ValidationError(f"time {t!r} outside [0, {timeline.duration}]")
    lam = float(params.mu[node])
    for j in timeline.neighbors(node, t):
        alpha, beta = params.alpha_beta(node, j)
        tj = seq.times[(seq.types == j) & (seq.times < t)]
        if tj.size == 0:
            continue
        if params.kernel == "last_spike":
            lam += alpha * float(np.exp(-beta * (t - tj[-1])))
        else:
            expo = -beta * (t - tj)
            lam += alpha * float(np.exp(expo[expo > -EXP_CUTOFF]).sum())
    return lam


class _EdgeState:
    """Directed-edge excitation state for one epoch, vectorized over edges."""

    def __init__(self, timeline: GraphTimeline, params: HawkesParams, epoch: int, n: int):
        edges = sorted(timeline.snapshots[epoch][1])
        src, dst, alpha, beta = [], [], [], []
        for i, j in edges:
            a, b = params.edge_params[(i, j)]
            src += [j, i]
            dst += [i, j]
            alpha += [a, a]
            beta += [b, b]
        self.src = np.array(src, dtype=np.int64)
        self.dst = np.array(dst, dtype=np.int64)
        self.alpha = np.array(alpha)
        self.beta = np.array(beta)
        self.s = np.zeros(len(src))
        self.by_src: list[np.ndarray] = [np.flatnonzero(self.src == v) for v in range(n)]
        self.n = n

    def seed_full_history(self, t: float, history: list[list[float]]) -> None:
        for k in range(self.src.size):
            h = history[self.src[k]]
            if not h:
                continue
            times = np.asarray(h)
            lo = np.searchsorted(times, t - EXP_CUTOFF / self.beta[k])
            window = times[lo:]
            window = window[window <= t]
            self.s[k] = float(np.exp(-self.beta[k] * (t - window)).sum())

    def seed_last_spike(self, t: float, last: np.ndarray) -> None:
        have = last[self.src] >= 0
        self.s = np.where(have, np.exp(-self.beta * np.maximum(t - last[self.src], 0.0)), 0.0)

    def decay(self, dt: float) -> None:
        if dt > 0:
            self.s *= np.exp(-self.beta * dt)

    def on_spike(self, node: int, kernel: str) -> None:
        idx = self.by_src[node]
        if kernel == "last_spike":
            self.s[idx] = 1.0
        else:
            self.s[idx] += 1.0

    def intensities(self, mu: np.ndarray) -> np.ndarray:
        lam = mu.copy()
        if self.src.size:
            lam += np.bincount(self.dst, weights=self.alpha * self.s, minlength=self.n)
        return lam


def simulate(cfg: SynthConfig) -> SynthResult:
    """Sample one event stream by thinning; returns events, timeline, params."""
    children = np.random.SeedSequence(cfg.seed).spawn(4)
    graph_rng = np.random.default_rng(children[0])
    # parameter draws ride on the graph stream inside sample_graph_timeline
    timeline, params = sample_graph_timeline(cfg, rng=graph_rng)
    sim_rng = np.random.default_rng(children[2])

    n = cfg.num_nodes
    history: list[list[float]] = [[] for _ in range(n)]
    last = np.full(n, -1.0)
    times: list[float] = []
    types: list[int] = []

    epoch = 0
    state = _EdgeState(timeline, params, epoch, n)
    _, epoch_end = timeline.epoch_bounds(epoch)
    t = 0.0
    while True:
        lam = state.intensities(params.mu)
        bound = float(lam.sum())
        if not np.isfinite(bound) or np.any(lam > NODE_INTENSITY_CAP):
            hot = int(np.argmax(lam))
            raise SimulationError(
                f"intensity overflow at t={t:.6g}: node {hot} reached {lam[hot]:.3g} "
                "(excitation is supercritical for this graph density)"
            )
        if len(times) > MAX_EVENTS:
            hot = int(np.argmax(lam))
            raise SimulationError(
                f"event budget exceeded at t={t:.6g}; hottest node {hot} at {lam[hot]:.3g}"
            )
        if bound <= 0.0:
            s = epoch_end
        else:
            s = t + sim_rng.exponential(1.0 / bound)
        if s >= epoch_end:
            state.decay(epoch_end - t)
            t = epoch_end
            epoch += 1
            if epoch >= len(timeline.snapshots):
                break
            state = _EdgeState(timeline, params, epoch, n)
            if cfg.kernel == "last_spike":
                state.seed_last_spike(t, last)
            else:
                state.seed_full_history(t, history)
            _, epoch_end = timeline.epoch_bounds(epoch)
            continue
        state.decay(s - t)
        t = s
        lam_s = state.intensities(params.mu)
        total = float(lam_s.sum())
        u = sim_rng.uniform(0.0, bound)
        if u < total:
            node = int(np.searchsorted(np.cumsum(lam_s), u, side="right"))
            node = min(node, n - 1)
            times.append(t)
            types.append(node)
            history[node].append(t)
            last[node] = t
            state.on_spike(node, cfg.kernel)

    seq = EventSequence(np.array(times), np.array(types, dtype=np.int64), n, cfg.duration)
    return SynthResult(seq=seq, timeline=timeline, params=params)


def grid_oracle_simulate(cfg: SynthConfig, grid_dt: float) -> SynthResult:
    """Bernoulli-per-bin reference sampler on a fixed grid.

    Shares the timeline and parameters with simulate() for the same seed but
    draws events independently. Rejects configurations where any bin
    probability lambda * grid_dt exceeds 0.1.
    """
    if not (np.isfinite(grid_dt) and grid_dt > 0):
        raise ValidationError("grid_dt must be positive and finite")
    children = np.random.SeedSequence(cfg.seed).spawn(4)
    graph_rng = np.random.default_rng(children[0])
    timeline, params = sample_graph_timeline(cfg, rng=graph_rng)
    rng = np.random.default_rng(children[3])

    n = cfg.num_nodes
    history: list[list[float]] = [[] for _ in range(n)]
    last = np.full(n, -1.0)
    times: list[float] = []
    types: list[int] = []

    epoch = 0
    state = _EdgeState(timeline, params, epoch, n)
    _, epoch_end = timeline.epoch_bounds(epoch)
    num_bins = int(np.ceil(cfg.duration / grid_dt))
    t = 0.0
    for b in range(num_bins):
        t = b * grid_dt
        while t >= epoch_end and epoch + 1 < len(timeline.snapshots):
            epoch += 1
            state = _EdgeState(timeline, params, epoch, n)
            if cfg.kernel == "last_spike":
                state.seed_last_spike(t, last)
            else:
                state.seed_full_history(t, history)
            _, epoch_end = timeline.epoch_bounds(epoch)
        lam = state.intensities(params.mu)
        p = lam * grid_dt
        if np.any(p > 0.1):
            hot = int(np.argmax(p))
            raise ValidationError(
                f"grid too coarse: node {hot} has lambda*dt = {p[hot]:.3g} > 0.1 at t={t:.6g}"
            )
        fired = np.flatnonzero(rng.random(n) < p)
        t_end = min((b + 1) * grid_dt, cfg.duration)
        state.decay(t_end - t)
        for node in fired:
            node = int(node)
            times.append(t_end)
            types.append(node)
            history[node].append(t_end)
            last[node] = t_end
            state.on_spike(node, cfg.kernel)

    seq = EventSequence(np.array(times), np.array(types, dtype=np.int64), n, cfg.duration)
    return SynthResult(seq=seq, timeline=timeline, params=params)


def write_graph_file(timeline: GraphTimeline, path) -> None:
    lines = []
    for start, edges in timeline.snapshots:
        lines.append(json.dumps({"epoch_start": start, "edges": [list(e) for e in sorted(edges)]}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_graph_file(source, num_nodes: int | None = None, duration: float | None = None) -> GraphTimeline:
    """Read a timeline sidecar. num_nodes/duration are inferred when omitted."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    snapshots = []
    max_node = -1
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventFileError(f"invalid JSON ({exc.msg})", line_no) from None
        if not isinstance(obj, dict) or set(obj) != {"epoch_start", "edges"}:
            raise EventFileError('graph records must have exactly the keys "epoch_start" and "edges"', line_no)
        try:
            edges = frozenset((int(i), int(j)) for i, j in obj["edges"])
        except (TypeError, ValueError):
            raise EventFileError("edges must be [i, j] pairs", line_no) from None
        for i, j in edges:
            max_node = max(max_node, i, j)
        snapshots.append((float(obj["epoch_start"]), edges))
    if not snapshots:
        raise EventFileError("empty graph file")
    if num_nodes is None:
        num_nodes = max_node + 1 if max_node >= 0 else 1
    if duration is None:
        # Without a header the tiling is inferred from equal epoch lengths.
        if len(snapshots) > 1:
            duration = snapshots[-1][0] + (snapshots[-1][0] - snapshots[-2][0])
        else:
            duration = snapshots[0][0] + 1.0
    return GraphTimeline(tuple(snapshots), num_nodes=num_nodes, duration=duration)
