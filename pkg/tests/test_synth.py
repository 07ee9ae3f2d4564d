"""Synthetic generator: dynamic graph timeline, Hawkes intensities, thinning
sampler, and the grid oracle it is validated against."""

import numpy as np
import pytest

from sdgn.errors import SimulationError, ValidationError
from sdgn.events import EventSequence
from sdgn.synth import (
    GraphTimeline,
    HawkesParams,
    SynthConfig,
    grid_oracle_simulate,
    hawkes_intensity,
    parse_graph_file,
    sample_graph_timeline,
    simulate,
    write_graph_file,
)


def make_seq(pairs, num_types, horizon):
    return EventSequence(
        times=np.array([t for t, _ in pairs], dtype=np.float64),
        types=np.array([e for _, e in pairs], dtype=np.int64),
        num_types=num_types,
        horizon=horizon,
    )


# ---------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ValidationError):
        SynthConfig(sparsity=1.5)
    with pytest.raises(ValidationError):
        SynthConfig(num_nodes=0)
    with pytest.raises(ValidationError):
        SynthConfig(mu_range=(2.0, 1.0))
    with pytest.raises(ValidationError):
        SynthConfig(beta_range=(0.0, 1.0))
    with pytest.raises(ValidationError):
        SynthConfig(kernel="cosine")
    with pytest.raises(ValidationError):
        SynthConfig(duration=0.0)


# -------------------------------------------------------------- timeline

def test_dense_two_nodes_forces_the_edge():
    cfg = SynthConfig(num_nodes=2, sparsity=1.0, num_steps=4, duration=10.0, seed=3)
    timeline, _ = sample_graph_timeline(cfg)
    for _, edges in timeline.snapshots:
        assert edges == frozenset({(0, 1)})


def test_zero_sparsity_gives_empty_graphs():
    cfg = SynthConfig(num_nodes=10, sparsity=0.0, num_steps=5, duration=10.0, seed=1)
    timeline, _ = sample_graph_timeline(cfg)
    assert all(len(edges) == 0 for _, edges in timeline.snapshots)


def test_edge_count_matches_density():
    cfg = SynthConfig(num_nodes=20, sparsity=0.3, num_steps=6, duration=60.0, seed=5)
    timeline, _ = sample_graph_timeline(cfg)
    m = round(0.3 * 20 * 19 / 2)
    assert all(len(edges) == m for _, edges in timeline.snapshots)


def test_consecutive_jaccard_matches_retention_arithmetic():
    # fresh edges are drawn among currently-absent pairs, so the overlap of
    # consecutive snapshots is exactly the kept subset: J = kept/(2m - kept)
    cfg = SynthConfig(num_nodes=20, sparsity=0.3, num_steps=5, duration=50.0,
                      carryover_fraction=0.5, seed=11)
    m = round(0.3 * 20 * 19 / 2)
    kept = round(0.5 * m)
    expect = kept / (2 * m - kept)
    for seed in range(10):
        timeline, _ = sample_graph_timeline(
            SynthConfig(num_nodes=20, sparsity=0.3, num_steps=5, duration=50.0,
                        carryover_fraction=0.5, seed=seed)
        )
        snaps = [edges for _, edges in timeline.snapshots]
        for a, b in zip(snaps, snaps[1:]):
            assert len(a & b) == kept
            assert len(a | b) == 2 * m - kept
            assert len(a & b) / len(a | b) == pytest.approx(expect)


def test_epoch_bounds_tile_duration():
    cfg = SynthConfig(num_nodes=5, sparsity=0.2, num_steps=4, duration=20.0, seed=0)
    timeline, _ = sample_graph_timeline(cfg)
    bounds = [timeline.epoch_bounds(k) for k in range(4)]
    assert bounds[0][0] == 0.0 and bounds[-1][1] == 20.0
    for (_, e0), (s1, _) in zip(bounds, bounds[1:]):
        assert e0 == s1


def test_timeline_validation():
    with pytest.raises(ValidationError):
        GraphTimeline(snapshots=((1.0, frozenset()),), num_nodes=3, duration=10.0)
    with pytest.raises(ValidationError):
        GraphTimeline(snapshots=((0.0, frozenset({(0, 0)})),), num_nodes=3, duration=10.0)
    with pytest.raises(ValidationError):
        GraphTimeline(snapshots=((0.0, frozenset({(0, 5)})),), num_nodes=3, duration=10.0)


# -------------------------------------------------------------- intensity

def one_edge_setup(kernel="full_history", mu=1.0, alpha=0.5, beta=1.0, duration=10.0):
    timeline = GraphTimeline(
        snapshots=((0.0, frozenset({(0, 1)})),), num_nodes=2, duration=duration
    )
    params = HawkesParams(
        mu=np.array([mu, mu]), edge_params={(0, 1): (alpha, beta)}, kernel=kernel
    )
    return timeline, params


def test_intensity_base_rate_only():
    timeline = GraphTimeline(snapshots=((0.0, frozenset()),), num_nodes=1, duration=10.0)
    params = HawkesParams(mu=np.array([1.0]), edge_params={})
    seq = make_seq([(0.5, 0), (2.0, 0)], 1, 10.0)
    for t in (0.0, 1.0, 5.0, 10.0):
        assert hawkes_intensity(0, t, seq, timeline, params) == 1.0


def test_intensity_single_neighbor_spike():
    timeline, params = one_edge_setup()
    seq = make_seq([(0.0, 1)], 2, 10.0)
    t0 = 1e-12
    assert hawkes_intensity(0, t0, seq, timeline, params) == pytest.approx(1.5)
    assert hawkes_intensity(0, 10.0, seq, timeline, params) == pytest.approx(1.0, abs=1e-4)


def test_intensity_two_spikes_full_history():
    timeline, params = one_edge_setup(mu=0.0)
    seq = make_seq([(0.0, 1), (np.log(2.0), 1)], 2, 10.0)
    t = np.log(2.0) + 1e-12
    # 0.5 exp(-ln 2) + 0.5 exp(0) = 0.25 + 0.5
    assert hawkes_intensity(0, t, seq, timeline, params) == pytest.approx(0.75, rel=1e-9)


def test_intensity_two_spikes_last_spike_kernel():
    timeline, params = one_edge_setup(mu=0.0, kernel="last_spike")
    seq = make_seq([(0.0, 1), (np.log(2.0), 1)], 2, 10.0)
    t = np.log(2.0) + 1e-12
    assert hawkes_intensity(0, t, seq, timeline, params) == pytest.approx(0.5, rel=1e-9)


def test_intensity_is_strictly_prior():
    timeline, params = one_edge_setup(mu=1.0)
    seq = make_seq([(2.0, 1)], 2, 10.0)
    assert hawkes_intensity(0, 2.0, seq, timeline, params) == 1.0


def test_intensity_domain_errors():
    timeline, params = one_edge_setup()
    seq = make_seq([], 2, 10.0)
    with pytest.raises(ValidationError):
        hawkes_intensity(0, -1.0, seq, timeline, params)
    with pytest.raises(ValidationError):
        hawkes_intensity(0, 11.0, seq, timeline, params)
    with pytest.raises(ValidationError):
        hawkes_intensity(5, 1.0, seq, timeline, params)


def test_intensity_never_below_mu():
    res = simulate(SynthConfig(num_nodes=4, sparsity=0.5, duration=20.0,
                               num_steps=2, seed=9))
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, 20, size=25):
        for node in range(4):
            lam = hawkes_intensity(node, float(t), res.seq, res.timeline, res.params)
            assert lam >= res.params.mu[node]


def test_removing_an_edge_never_raises_intensity():
    with_edge, params = one_edge_setup(mu=0.7)
    without = GraphTimeline(snapshots=((0.0, frozenset()),), num_nodes=2, duration=10.0)
    seq = make_seq([(0.5, 1), (1.0, 1), (4.0, 1)], 2, 10.0)
    for t in np.linspace(0.0, 10.0, 41):
        lam_with = hawkes_intensity(0, float(t), seq, with_edge, params)
        lam_without = hawkes_intensity(0, float(t), seq, without, params)
        assert lam_without <= lam_with


# --------------------------------------------------------------- simulate

def test_simulate_zero_intensity_is_empty():
    cfg = SynthConfig(num_nodes=3, sparsity=0.0, duration=50.0, num_steps=2,
                      mu_range=(0.0, 0.0), seed=4)
    res = simulate(cfg)
    assert len(res.seq) == 0


def test_simulate_reproducible():
    cfg = SynthConfig(num_nodes=5, sparsity=0.3, duration=30.0, num_steps=3, seed=21)
    a, b = simulate(cfg), simulate(cfg)
    np.testing.assert_array_equal(a.seq.times, b.seq.times)
    np.testing.assert_array_equal(a.seq.types, b.seq.types)
    assert a.timeline.snapshots == b.timeline.snapshots


def test_coupling_raises_event_rate():
    # a pinned symmetric edge adds excitation, so the coupled pair out-fires
    # two isolated nodes with the same baseline
    base = dict(num_nodes=2, duration=200.0, num_steps=1,
                mu_range=(1.0, 1.0), alpha_range=(0.3, 0.3), beta_range=(1.0, 1.0))
    coupled = np.mean([len(simulate(SynthConfig(sparsity=1.0, seed=s, **base)).seq)
                       for s in range(10)])
    isolated = np.mean([len(simulate(SynthConfig(sparsity=0.0, seed=s, **base)).seq)
                        for s in range(10)])
    assert coupled > isolated * 1.15


def test_supercritical_run_fails_loudly():
    cfg = SynthConfig(num_nodes=3, sparsity=1.0, duration=200.0, num_steps=1,
                      mu_range=(1.0, 1.0), alpha_range=(5.0, 5.0),
                      beta_range=(1.0, 1.0), kernel="full_history", seed=0)
    with pytest.raises(SimulationError, match="node"):
        simulate(cfg)


# ------------------------------------------------------------ grid oracle

def test_oracle_zero_intensity_is_empty():
    cfg = SynthConfig(num_nodes=2, sparsity=0.0, duration=20.0, num_steps=1,
                      mu_range=(0.0, 0.0), seed=2)
    assert len(grid_oracle_simulate(cfg, 0.01).seq) == 0


def test_oracle_rejects_coarse_grid():
    cfg = SynthConfig(num_nodes=1, sparsity=0.0, duration=10.0, num_steps=1,
                      mu_range=(5.0, 5.0), seed=0)
    with pytest.raises(ValidationError):
        grid_oracle_simulate(cfg, 0.05)  # lambda*dt = 0.25


def test_oracle_and_thinning_counts_agree():
    cfg = lambda s: SynthConfig(num_nodes=1, sparsity=0.0, duration=200.0,
                                num_steps=1, mu_range=(1.0, 1.0), seed=s)
    thin = np.mean([len(simulate(cfg(s)).seq) for s in range(20)])
    grid = np.mean([len(grid_oracle_simulate(cfg(s), 0.02).seq) for s in range(20)])
    assert abs(thin - grid) / grid < 0.05


# ------------------------------------------------------------ sidecar IO

def test_graph_file_roundtrip(tmp_path):
    cfg = SynthConfig(num_nodes=6, sparsity=0.4, num_steps=3, duration=30.0, seed=13)
    timeline, _ = sample_graph_timeline(cfg)
    path = tmp_path / "graph.jsonl"
    write_graph_file(timeline, path)
    back = parse_graph_file(path, num_nodes=6, duration=30.0)
    assert back.snapshots == timeline.snapshots


def test_graph_file_rejects_extra_keys(tmp_path):
    path = tmp_path / "graph.jsonl"
    path.write_text('{"epoch_start": 0.0, "edges": [[0, 1]], "x": 1}\n', encoding="utf-8")
    with pytest.raises(ValidationError):
        parse_graph_file(path, num_nodes=3, duration=10.0)
