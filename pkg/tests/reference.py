"""Independent reference implementations used as test oracles.

Everything here is written straight from the defining formulas, with none of
the event-driven machinery, truncation windows, or recursions the package
uses. Slow is fine; these only run under pytest.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


def lif_fixed_step(network, input_trains, horizon, dt=1e-4, syn_delay=1e-3):
    """Dense fixed-step LIF simulation on a uniform grid.

    Same update formulas as the package integrator but stepped at a constant
    dt with deliveries applied at the first grid point at or after their
    timestamp, so any disagreement beyond ~dt is an event-scheduling bug.
    Returns a list of per-neuron spike-time lists.
    """
    p = network.params
    w = network.weights
    n = network.num_neurons
    v = np.full(n, p.v_rest, dtype=np.float64)
    syn = np.zeros(n)
    pending = []
    counter = 0
    amp_in = network.input_weight * p.syn_epsilon
    for k, train in enumerate(input_trains):
        targets = network.input_map[k]
        if targets.size == 0:
            continue
        for t in np.asarray(train.times, dtype=np.float64):
            td = float(t) + syn_delay
            if td <= horizon:
                heapq.heappush(pending, (td, counter, targets, amp_in))
                counter += 1

    decay_m = math.exp(-p.leak_alpha * dt / p.tau_m)
    decay_s = math.exp(-p.syn_beta * dt)
    spikes = [[] for _ in range(n)]
    steps = int(round(horizon / dt))
    for k in range(steps):
        t = k * dt
        t_new = (k + 1) * dt
        while pending and pending[0][0] <= t:
            _, _, targets, amps = heapq.heappop(pending)
            syn[targets] += amps
        v_inf = p.v_rest + syn / p.leak_alpha
        v = v_inf + (v - v_inf) * decay_m
        syn *= decay_s
        fired = np.flatnonzero(v >= p.v_th)
        for neuron in fired.tolist():
            spikes[neuron].append(t_new)
            v[neuron] = p.v_reset
            out = w.out_edges[neuron]
            if out.size and t_new + syn_delay <= horizon:
                heapq.heappush(
                    pending, (t_new + syn_delay, counter, w.post[out], w.w[out] * p.syn_epsilon)
                )
                counter += 1
    return spikes


def ssi_formula(a, b, k1=0.01, k2=0.03, l=1.0):
    """SSI straight from the formula, statistics via np.cov (ddof=1)."""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    mu_x, mu_y = x.mean(), y.mean()
    cm = np.cov(x, y)  # (n^2 - 1) denominators
    var_x, var_y, cov = cm[0, 0], cm[1, 1], cm[0, 1]
    c1 = (k1 * l) ** 2
    c2 = (k2 * l) ** 2
    return ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    )


def hawkes_ll_naive(times, types, num_types, mu, alpha, beta, horizon):
    """Exponential multivariate Hawkes log-likelihood by the O(n^2) double sum.

    Strictly-prior history only: events at exactly the same timestamp do not
    excite each other (matches the generator's tie convention).
    """
    times = np.asarray(times, dtype=np.float64)
    types = np.asarray(types, dtype=np.int64)
    mu = np.asarray(mu, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    ll = 0.0
    for i in range(times.size):
        lam = mu[types[i]]
        for j in range(i):
            if times[j] < times[i]:
                lam += alpha[types[i], types[j]] * math.exp(-beta * (times[i] - times[j]))
        if lam <= 0:
            return -math.inf
        ll += math.log(lam)
    comp = float(mu.sum()) * horizon
    for j in range(times.size):
        # each event contributes alpha[e, e_j]/beta * (1 - exp(-beta (T - t_j))) to every type e
        tail = (1.0 - math.exp(-beta * (horizon - times[j]))) / beta
        comp += float(alpha[:, types[j]].sum()) * tail
    return ll - comp


def eigen_centrality_dense(weights_abs):
    """Principal-eigenvector centrality via a dense symmetric eigensolver.

    Unit L2 norm, non-negative orientation, matching the power iteration.
    """
    m = np.asarray(weights_abs, dtype=np.float64)
    n = m.shape[0]
    if not m.any():
        return np.full(n, 1.0 / math.sqrt(n))
    vals, vecs = np.linalg.eigh(m)
    v = np.abs(vecs[:, np.argmax(vals)])
    return v / np.linalg.norm(v)
