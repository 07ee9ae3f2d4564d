"""Dependency-graph estimation from spike statistics.

Two estimators share the windowing and evaluation machinery:

* correlation path: pairwise kernel scores phi(s_i, s_j) = sum_a sum_b
  exp(-|t_a - t_b| / tau) averaged over K equal windows, turned into edge
  probabilities by a per-row softmax over the candidate partners and
  thresholded into an undirected adjacency;
* regression path: smoothed input signals are projected onto a basis of
  membrane traces picked by eigenvector centrality, and each node's
  neighborhood is recovered by a group-lasso regression over candidate
  blocks, solved with ADMM and combined across nodes by an AND or OR rule.

Graph agreement is scored by a structural similarity index over adjacency
matrices (means over |V|^2 entries, variances and covariance with the
|V|^2 - 1 denominator).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ValidationError
from .events import SpikeTrain

# Pair-score terms with |dt| > 30 tau are dropped.
SCORE_CUTOFF = 30.0

SSI_K1 = 0.01
SSI_K2 = 0.03
SSI_L = 1.0

ABLATION_MODES = ("full", "spatial_only", "random")


def _times(train) -> np.ndarray:
    if isinstance(train, SpikeTrain):
        return train.times
    return np.asarray(train, dtype=np.float64)


def pair_score(s_i, s_j, tau: float) -> float:
    """Double sum of exp(-|t_a - t_b|/tau) over spike pairs, truncated at 30 tau."""
    if tau <= 0:
        raise ValidationError("tau must be positive")
    ta, tb = _times(s_i), _times(s_j)
    if ta.size == 0 or tb.size == 0:
        return 0.0
    win = SCORE_CUTOFF * tau
    lo = np.searchsorted(tb, ta - win, side="left")
    hi = np.searchsorted(tb, ta + win, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return 0.0
    starts = np.cumsum(counts) - counts
    idx = np.repeat(lo, counts) + (np.arange(total) - np.repeat(starts, counts))
    d = np.repeat(ta, counts) - tb[idx]
    return float(np.exp(-np.abs(d) / tau).sum())


def _slice_train(times: np.ndarray, lo: float, hi: float) -> np.ndarray:
    a = np.searchsorted(times, lo, side="left")
    b = np.searchsorted(times, hi, side="left")
    return times[a:b]


def window_scores(trains: list, tau: float, num_windows: int, horizon: float) -> np.ndarray:
    """Mean pair score over equal windows; symmetric with a zero diagonal."""
    if num_windows < 1:
        raise ValidationError("num_windows must be >= 1")
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    n = len(trains)
    times = [_times(t) for t in trains]
    edges = np.linspace(0.0, horizon, num_windows + 1)
    scores = np.zeros((n, n))
    for k in range(num_windows):
        sliced = [_slice_train(t, edges[k], edges[k + 1]) for t in times]
        for i in range(n):
            for j in range(i + 1, n):
                scores[i, j] += pair_score(sliced[i], sliced[j], tau)
    scores /= num_windows
    return scores + scores.T


def edge_probabilities(trains: list, tau: float, num_windows: int, horizon: float) -> np.ndarray:
    """Row softmax of windowed mean pair scores over the candidate partners j != i."""
    n = len(trains)
    if n < 2:
        raise ValidationError("need at least two trains to estimate edges")
    scores = window_scores(trains, tau, num_windows, horizon)
    probs = np.zeros((n, n))
    off = ~np.eye(n, dtype=bool)
    for i in range(n):
        row = scores[i][off[i]]
        row = np.exp(row - row.max())
        probs[i][off[i]] = row / row.sum()
    return probs


def threshold_graph(probs: np.ndarray, theta: float) -> np.ndarray:
    """Undirected adjacency: p > theta in either direction, empty diagonal."""
    probs = np.asarray(probs)
    if probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
        raise ValidationError("probability matrix must be square")
    if not 0.0 < theta < 1.0:
        raise ValidationError("theta must lie in (0, 1)")
    adj = ((probs > theta) | (probs.T > theta)).astype(np.float64)
    np.fill_diagonal(adj, 0.0)
    return adj


def default_theta(num_nodes: int, factor: float = 1.5) -> float:
    """Threshold at factor times the uniform row mass 1/(N-1)."""
    if num_nodes < 2:
        raise ValidationError("need at least two nodes")
    return factor / (num_nodes - 1)


def dependency_strength(
    s_i,
    s_j,
    window: tuple[float, float],
    kernel_tau: float,
    num_samples: int = 256,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte-Carlo estimate of E[X_i(t) X_j(t)] over the window.

    X_u(t) is the causal exponential smoothing of train u with kernel_tau.
    Symmetric in (i, j) by construction.
    """
    if kernel_tau <= 0 or num_samples < 1:
        raise ValidationError("kernel_tau and num_samples must be positive")
    lo, hi = window
    if not hi > lo:
        raise ValidationError("window must have positive length")
    if rng is None:
        rng = np.random.default_rng(0)
    ts = rng.uniform(lo, hi, size=num_samples)
    prod = _smoothed_at(_times(s_i), ts, kernel_tau) * _smoothed_at(_times(s_j), ts, kernel_tau)
    return float(prod.mean())


def _smoothed_at(spikes: np.ndarray, ts: np.ndarray, tau: float) -> np.ndarray:
    out = np.zeros(ts.size)
    if spikes.size == 0:
        return out
    for k, t in enumerate(ts):
        win = spikes[np.searchsorted(spikes, t - SCORE_CUTOFF * tau): np.searchsorted(spikes, t, side="right")]
        if win.size:
            out[k] = np.exp(-(t - win) / tau).sum()
    return out


@dataclass(frozen=True)
class GraphWindow:
    t_start: float
    t_end: float
    probs: np.ndarray
    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if not np.array_equal(a, a.T) or np.any(np.diag(a) != 0):
            raise ValidationError("adjacency must be symmetric with an empty diagonal")


@dataclass(frozen=True)
class DynamicGraph:
    """Piecewise-constant estimated graph over consecutive windows."""

    windows: tuple[GraphWindow, ...]
    num_nodes: int

    def __post_init__(self):
        if not self.windows:
            raise ValidationError("dynamic graph needs at least one window")
        for a, b in zip(self.windows, self.windows[1:]):
            if b.t_start < a.t_end:
                raise ValidationError("windows must not overlap")

    def window_at(self, t: float) -> GraphWindow:
        # Times past the last window fall back to the most recent estimate.
        for w in self.windows:
            if w.t_start <= t < w.t_end:
                return w
        return self.windows[-1] if t >= self.windows[-1].t_end else self.windows[0]

    def attention(self, v: int, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Thresholded neighbors of v and their normalized probability weights."""
        w = self.window_at(t)
        idx = np.flatnonzero(w.adjacency[v] > 0)
        if idx.size == 0:
            return idx, np.empty(0)
        raw = w.probs[v, idx]
        total = raw.sum()
        if total <= 0:
            return idx, np.full(idx.size, 1.0 / idx.size)
        return idx, raw / total


def estimate_dynamic_graph(
    trains: list,
    epoch_bounds: list[tuple[float, float]],
    tau: float = 0.25,
    sub_windows: int = 5,
    theta: float | None = None,
) -> DynamicGraph:
    """Per-epoch correlation estimate: softmax scores per window, thresholded."""
    n = len(trains)
    if theta is None:
        theta = default_theta(n)
    times = [_times(t) for t in trains]
    windows = []
    for lo, hi in epoch_bounds:
        if not hi > lo:
            raise ValidationError("epoch bounds must have positive length")
        sliced = [_slice_train(t, lo, hi) - lo for t in times]
        probs = edge_probabilities(sliced, tau, sub_windows, hi - lo)
        windows.append(GraphWindow(lo, hi, probs, threshold_graph(probs, theta)))
    return DynamicGraph(tuple(windows), num_nodes=n)


def random_graph_like(
    reference: DynamicGraph, seed: int, theta: float | None = None
) -> DynamicGraph:
    """Edge-count-matched uniform graphs on the same windows (ablation control)."""
    rng = np.random.default_rng(seed)
    n = reference.num_nodes
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    windows = []
    for w in reference.windows:
        m = int(round(w.adjacency.sum() / 2.0))
        m = min(m, len(pairs))
        adj = np.zeros((n, n))
        if m:
            for k in rng.choice(len(pairs), size=m, replace=False):
                i, j = pairs[int(k)]
                adj[i, j] = adj[j, i] = 1.0
        probs = adj / np.maximum(adj.sum(axis=1, keepdims=True), 1.0)
        windows.append(GraphWindow(w.t_start, w.t_end, probs, adj))
    return DynamicGraph(tuple(windows), num_nodes=n)


def ablation_graph(
    mode: str,
    trains: list,
    epoch_bounds: list[tuple[float, float]],
    tau: float = 0.25,
    sub_windows: int = 5,
    theta: float | None = None,
    seed: int = 0,
) -> DynamicGraph:
    """Graph used by the intensity model under each ablation mode."""
    if mode not in ABLATION_MODES:
        raise ValidationError(f"mode must be one of {ABLATION_MODES}")
    if mode == "full":
        return estimate_dynamic_graph(trains, epoch_bounds, tau, sub_windows, theta)
    if mode == "spatial_only":
        lo = epoch_bounds[0][0]
        hi = epoch_bounds[-1][1]
        return estimate_dynamic_graph(trains, [(lo, hi)], tau, 1, theta)
    full = estimate_dynamic_graph(trains, epoch_bounds, tau, sub_windows, theta)
    return random_graph_like(full, seed=seed)


@dataclass(frozen=True)
class MembraneBasis:
    """Top-central neurons' membrane traces used as projection functions."""

    neurons: np.ndarray
    times: np.ndarray
    values: np.ndarray  # (len(times), len(neurons))
    centrality: np.ndarray


def eigen_centrality(adjacency: np.ndarray, iters: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Power iteration on a non-negative symmetric matrix; uniform on all-zero."""
    a = np.asarray(adjacency, dtype=np.float64)
    n = a.shape[0]
    x = np.full(n, 1.0 / math.sqrt(n))
    if not a.any():
        return x
    for _ in range(iters):
        y = a @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return np.full(n, 1.0 / math.sqrt(n))
        y /= norm
        if np.linalg.norm(y - x) < tol:
            return y
        x = y
    return x


def select_basis(
    trace_times: np.ndarray, traces: np.ndarray, weights, num_basis: int
) -> MembraneBasis:
    """Pick the num_basis most central neurons (|w| graph) as basis functions.

    Ties break toward the lower neuron index so the selection is stable.
    """
    n = traces.shape[1]
    if not 1 <= num_basis <= n:
        raise ValidationError("num_basis must lie in [1, num_neurons]")
    dense = np.zeros((n, n))
    dense[weights.post, weights.pre] = np.abs(weights.w)
    cent = eigen_centrality(dense + dense.T)
    order = np.lexsort((np.arange(n), -cent))
    chosen = np.sort(order[:num_basis])
    return MembraneBasis(
        neurons=chosen, times=np.asarray(trace_times), values=np.asarray(traces)[:, chosen],
        centrality=cent,
    )


def project(signal: np.ndarray, basis: MembraneBasis) -> np.ndarray:
    """Trapezoidal projection coefficients of a grid-sampled signal onto the basis."""
    sig = np.asarray(signal, dtype=np.float64)
    if sig.shape[0] != basis.times.size:
        raise ValidationError("signal must be sampled on the basis grid")
    return np.trapezoid(sig[:, None] * basis.values, basis.times, axis=0)


def smooth_train_on_grid(spikes: np.ndarray, grid: np.ndarray, tau: float) -> np.ndarray:
    """Causal exponential filter of a spike train sampled at grid times."""
    if tau <= 0:
        raise ValidationError("tau must be positive")
    spikes = _times(spikes)
    out = np.zeros(grid.size)
    if spikes.size == 0 or grid.size == 0:
        return out
    # Inject each spike into the first grid point at or after it, pre-decayed.
    idx = np.searchsorted(grid, spikes, side="left")
    ok = idx < grid.size
    inj = np.zeros(grid.size)
    np.add.at(inj, idx[ok], np.exp(-(grid[idx[ok]] - spikes[ok]) / tau))
    # The decaying recursion out[k] = out[k-1] d_k + inj[k] in log domain:
    # grid/tau can reach thousands, so the rescaled cumsum must not leave logs.
    with np.errstate(divide="ignore"):
        shifted = np.log(inj) + grid / tau
    out = np.exp(np.logaddexp.accumulate(shifted) - grid / tau)
    return out


@dataclass
class NeighborhoodEstimate:
    node: int
    candidates: list[int]
    block_norms: np.ndarray
    neighbors: set[int]
    lam: float
    converged: bool
    iterations: int


def _admm_group(
    ginv: np.ndarray,
    c: np.ndarray,
    k_blocks: int,
    m: int,
    lam: float,
    rho: float,
    max_iter: int,
    tol: float,
    p: np.ndarray | None = None,
    u: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, bool, int]:
    """Core ADMM loop on a prefactored system; (p, u) seed a warm start."""
    km = c.shape[0]
    p = np.zeros_like(c) if p is None else p.copy()
    u = np.zeros_like(c) if u is None else u.copy()
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        q = ginv @ (c + rho * (p - u))
        v = (q + u).reshape(k_blocks, m, -1)
        p_old = p
        nrm = np.linalg.norm(v, axis=(1, 2))
        scale = np.where(nrm > 0, np.maximum(0.0, 1.0 - (lam / rho) / np.where(nrm > 0, nrm, 1.0)), 0.0)
        p = (v * scale[:, None, None]).reshape(km, -1)
        u = u + q - p
        r = np.linalg.norm(q - p)
        s = rho * np.linalg.norm(p - p_old)
        if max(r, s) < tol:
            converged = True
            break
    return p, u, converged, it


def group_lasso_blocks(
    y: np.ndarray,
    xs: list[np.ndarray],
    lam: float,
    rho: float = 1.0,
    max_iter: int = 1000,
    tol: float = 1e-6,
) -> tuple[list[np.ndarray], bool, int]:
    """ADMM for min (1/2n) sum_i ||y_i - sum_k B_k x_ki||^2 + lam sum_k ||B_k||_F.

    Returns the per-candidate blocks B_k, a convergence flag (primal and dual
    residuals below tol), and the iteration count.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise ValidationError("y must be (samples, dims)")
    n, m = y.shape
    if lam < 0 or rho <= 0:
        raise ValidationError("lam must be >= 0 and rho > 0")
    big = np.hstack([np.asarray(x, dtype=np.float64) for x in xs])
    if big.shape[0] != n:
        raise ValidationError("every candidate block must have the same sample count")
    km = big.shape[1]
    k_blocks = len(xs)
    if km != k_blocks * m:
        raise ValidationError("candidate blocks must match the target dimension")
    ginv = np.linalg.inv(big.T @ big / n + rho * np.eye(km))
    c = big.T @ y / n
    p, _, converged, it = _admm_group(ginv, c, k_blocks, m, lam, rho, max_iter, tol)
    blocks = [p[k * m:(k + 1) * m].T.copy() for k in range(k_blocks)]
    return blocks, converged, it


def neighborhood_from_blocks(
    blocks: list[np.ndarray], eps_n: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Block Frobenius norms and the boolean support mask."""
    norms = np.array([np.linalg.norm(b) for b in blocks])
    if eps_n is None:
        eps_n = 1e-3 * norms.max() if norms.size and norms.max() > 0 else 0.0
    if norms.size and norms.max() == 0:
        return norms, np.zeros(norms.size, dtype=bool)
    return norms, norms > eps_n


def lambda_max(y: np.ndarray, xs: list[np.ndarray]) -> float:
    """Smallest lam with an all-zero solution path."""
    n = y.shape[0]
    return max(float(np.linalg.norm(x.T @ y / n)) for x in xs)


def select_lambda(
    y: np.ndarray,
    xs: list[np.ndarray],
    grid: np.ndarray | None = None,
    val_fraction: float = 0.2,
) -> float:
    """Held-out grid search; the tail of the sample axis is the validation set.

    The grid is scanned once from the largest penalty down with warm-started
    ADMM on a shared factorization, so the whole path costs little more than
    one cold solve. Descending order also keeps the sparser solution on ties.
    """
    n, m = y.shape
    n_val = max(1, int(round(val_fraction * n)))
    if n - n_val < 2:
        raise InsufficientDataError("too few samples to hold out a validation set")
    y_tr, y_val = y[:-n_val], y[-n_val:]
    xs_tr = [x[:-n_val] for x in xs]
    big_val = np.hstack([x[-n_val:] for x in xs])
    if grid is None:
        grid = lambda_max(y_tr, xs_tr) * np.logspace(-3, 0, 10)
    n_tr = y_tr.shape[0]
    k_blocks = len(xs)
    big = np.hstack(xs_tr)
    km = big.shape[1]
    ginv = np.linalg.inv(big.T @ big / n_tr + np.eye(km))
    c = big.T @ y_tr / n_tr
    best_lam, best_err = None, math.inf
    p = u = None
    for lam in sorted(np.asarray(grid, dtype=float), reverse=True):
        p, u, _, _ = _admm_group(ginv, c, k_blocks, m, float(lam), 1.0, 1000, 1e-6, p, u)
        err = float(np.sum((y_val - big_val @ p) ** 2))
        if err < best_err - 1e-12:
            best_err, best_lam = err, float(lam)
    return best_lam


def projection_coefficients(
    trains: list,
    trace_times: np.ndarray,
    traces: np.ndarray,
    weights,
    num_basis: int,
    chunks: int,
    smooth_tau: float,
) -> np.ndarray:
    """Chunked basis projections of every node's smoothed train, (chunks, nodes, basis)."""
    trace_times = np.asarray(trace_times)
    n_nodes = len(trains)
    basis = select_basis(trace_times, traces, weights, num_basis)
    edges = np.linspace(0, trace_times.size, chunks + 1).astype(int)
    if np.any(np.diff(edges) < 2):
        raise InsufficientDataError("trace grid too short for this many chunks")
    signals = np.stack(
        [smooth_train_on_grid(_times(t), trace_times, smooth_tau) for t in trains], axis=1
    )
    coeff = np.empty((chunks, n_nodes, basis.neurons.size))
    for c in range(chunks):
        lo, hi = edges[c], edges[c + 1]
        coeff[c] = np.trapezoid(
            signals[lo:hi, :, None] * basis.values[lo:hi, None, :], trace_times[lo:hi], axis=0
        )
    return coeff


def lasso_neighborhoods(
    trains: list,
    trace_times: np.ndarray,
    traces: np.ndarray,
    weights,
    num_basis: int = 3,
    chunks: int = 30,
    smooth_tau: float = 0.25,
    lam: float | None = None,
    lam_frac: float | None = None,
    rule: str = "or",
) -> tuple[np.ndarray, list[NeighborhoodEstimate]]:
    """Regression-path graph estimate from membrane traces and input trains.

    Each node's smoothed input signal is projected chunk-by-chunk onto the
    membrane basis; a group lasso then regresses every node's coefficients on
    all other nodes' coefficients and the supports are combined into an
    undirected adjacency. Coefficients are centered per feature and scaled to
    unit block norm first, so the shared baseline rate does not masquerade as
    coupling and the penalty weighs every candidate comparably.

    lam fixes one penalty for all nodes; lam_frac sets each node's penalty at
    that fraction of its own lambda_max; with neither, a held-out grid search
    picks the penalty per node.
    """
    if rule not in ("and", "or"):
        raise ValidationError('rule must be "and" or "or"')
    if lam is not None and lam_frac is not None:
        raise ValidationError("pass lam or lam_frac, not both")
    if lam_frac is not None and not 0.0 < lam_frac <= 1.0:
        raise ValidationError("lam_frac must lie in (0, 1]")
    n_nodes = len(trains)
    coeff = projection_coefficients(
        trains, trace_times, traces, weights, num_basis, chunks, smooth_tau
    )
    coeff = coeff - coeff.mean(axis=0, keepdims=True)
    scale = np.linalg.norm(coeff, axis=(0, 2), keepdims=True) / math.sqrt(chunks)
    coeff = coeff / np.maximum(scale, 1e-12)
    estimates = []
    for i in range(n_nodes):
        cands = [k for k in range(n_nodes) if k != i]
        y = coeff[:, i, :]
        xs = [coeff[:, k, :] for k in cands]
        if lam is not None:
            lam_i = lam
        elif lam_frac is not None:
            lam_i = lam_frac * lambda_max(y, xs)
        else:
            lam_i = select_lambda(y, xs)
        blocks, converged, iters = group_lasso_blocks(y, xs, lam_i)
        norms, mask = neighborhood_from_blocks(blocks)
        neigh = {cands[k] for k in np.flatnonzero(mask)}
        estimates.append(
            NeighborhoodEstimate(i, cands, norms, neigh, lam_i, converged, iters)
        )
    adjacency = combine_neighborhoods([e.neighbors for e in estimates], rule)
    return adjacency, estimates


def lasso_dynamic_graph(
    trains: list,
    trace_times: np.ndarray,
    traces: np.ndarray,
    weights,
    epoch_bounds: list[tuple[float, float]],
    num_basis: int = 6,
    chunks: int = 150,
    smooth_tau: float = 0.25,
    lam: float | None = None,
    lam_frac: float | None = None,
    rule: str = "or",
) -> DynamicGraph:
    """Per-epoch neighborhood regression assembled into a DynamicGraph.

    Attention probabilities are the row-normalized block norms, so downstream
    consumers weight neighbors by regression strength just as the softmax
    path weights them by correlation mass.
    """
    trace_times = np.asarray(trace_times)
    times = [_times(t) for t in trains]
    n = len(trains)
    windows = []
    for lo, hi in epoch_bounds:
        if not hi > lo:
            raise ValidationError("epoch bounds must have positive length")
        m = (trace_times >= lo) & (trace_times < hi)
        sub = [t[(t >= lo) & (t < hi)] for t in times]
        adj, ests = lasso_neighborhoods(
            sub, trace_times[m], np.asarray(traces)[m], weights,
            num_basis=num_basis, chunks=chunks, smooth_tau=smooth_tau,
            lam=lam, lam_frac=lam_frac, rule=rule,
        )
        probs = np.zeros((n, n))
        for e in ests:
            probs[e.node, e.candidates] = e.block_norms
        row_mass = probs.sum(axis=1, keepdims=True)
        probs = np.divide(probs, row_mass, out=np.zeros_like(probs), where=row_mass > 0)
        windows.append(GraphWindow(lo, hi, probs, adj))
    return DynamicGraph(tuple(windows), num_nodes=n)


def combine_neighborhoods(neighborhoods: list[set[int]], rule: str) -> np.ndarray:
    """AND keeps mutual supports; OR keeps either; result symmetric, empty diagonal."""
    if rule not in ("and", "or"):
        raise ValidationError('rule must be "and" or "or"')
    n = len(neighborhoods)
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            fwd = j in neighborhoods[i]
            bwd = i in neighborhoods[j]
            hit = (fwd and bwd) if rule == "and" else (fwd or bwd)
            if hit:
                adj[i, j] = adj[j, i] = 1.0
    return adj


@dataclass(frozen=True)
class SsiReport:
    value: float
    mu_a: float
    mu_b: float
    var_a: float
    var_b: float
    cov: float
    c1: float
    c2: float


def ssi(a: np.ndarray, b: np.ndarray, k1: float = SSI_K1, k2: float = SSI_K2, l: float = SSI_L) -> SsiReport:
    """Structural similarity between two adjacency matrices.

    Means run over all |V|^2 entries; variances and the covariance use the
    |V|^2 - 1 denominator. Identical inputs score exactly 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("adjacency matrices must be square with equal shapes")
    if a.shape[0] < 2:
        raise ValidationError("SSI needs at least a 2x2 adjacency")
    c1 = (k1 * l) ** 2
    c2 = (k2 * l) ** 2
    n2 = a.size
    mu_a = float(a.sum() / n2)
    mu_b = float(b.sum() / n2)
    da = a.ravel() - mu_a
    db = b.ravel() - mu_b
    var_a = float(da @ da / (n2 - 1))
    var_b = float(db @ db / (n2 - 1))
    cov = float(da @ db / (n2 - 1))
    value = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return SsiReport(float(value), mu_a, mu_b, var_a, var_b, cov, c1, c2)


def mean_timeline_ssi(truth_adjacencies: list[np.ndarray], graph: DynamicGraph) -> float:
    """Mean SSI between aligned truth and estimated windows."""
    if len(truth_adjacencies) != len(graph.windows):
        raise ValidationError("window counts differ")
    vals = [ssi(t, w.adjacency).value for t, w in zip(truth_adjacencies, graph.windows)]
    return float(np.mean(vals))


def gram_diagnostic(trains: list, width: float, horizon: float | None = None) -> float:
    """Off-diagonal mass ratio of the smoothed-train Gram matrix.

    Gaussian smoothing of width sigma gives closed-form inner products
    G(a - b; sigma * sqrt(2)), so the integral never needs a grid. Values
    near 0 indicate nearly orthogonal (decorrelated) trains.
    """
    if width <= 0:
        raise ValidationError("width must be positive")
    n = len(trains)
    if n < 2:
        raise ValidationError("need at least two trains")
    times = [_times(t) for t in trains]
    norm = 1.0 / (2.0 * width * math.sqrt(math.pi))
    cut = 12.0 * width
    gram = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            ta, tb = times[i], times[j]
            if ta.size == 0 or tb.size == 0:
                continue
            lo = np.searchsorted(tb, ta - cut, side="left")
            hi = np.searchsorted(tb, ta + cut, side="right")
            counts = hi - lo
            total = int(counts.sum())
            if total == 0:
                continue
            starts = np.cumsum(counts) - counts
            idx = np.repeat(lo, counts) + (np.arange(total) - np.repeat(starts, counts))
            d = np.repeat(ta, counts) - tb[idx]
            gram[i, j] = norm * float(np.exp(-(d * d) / (4.0 * width * width)).sum())
            gram[j, i] = gram[i, j]
    diag = np.trace(gram)
    if diag == 0.0:
        raise InsufficientDataError("all trains empty")
    off = gram.sum() - diag
    return float(off / diag)
