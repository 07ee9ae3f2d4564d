"""Command-line entry point.

Commands: generate, train, estimate-graph, predict, evaluate, ablate, sweep.
Every command takes --config (JSON), --seed, --out; flag values override the
config file, which overrides defaults. Artifacts are named
<command>_<digest>.<kind> where the digest hashes the effective config, so a
re-run with the same inputs lands on the same files with the same bytes.
Exit codes: 0 success, 2 validation (bad flags, malformed inputs, unknown
config keys), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines import BaselineConfig, evaluate_hawkes, fit_hawkes
from .errors import RuntimeFailure, ValidationError
from .events import parse_event_file, split_train_test, write_event_file
from .figures import (
    fig_ablation,
    fig_prediction_scatter,
    fig_rmse_models,
    fig_ssi_grid,
    fig_ssi_windows,
)
from .graphs import mean_timeline_ssi
from .harness import (
    ABLATION_MODES,
    AblationProtocol,
    GridProtocol,
    pooled_se,
    run_ablation,
    run_grid,
)
from .reports import (
    build_report,
    config_digest,
    graph_to_dict,
    load_checkpoint,
    read_json,
    save_checkpoint,
    train_config_from_dict,
    train_config_to_dict,
    write_csv,
    write_json,
    write_metrics,
)
from .synth import SynthConfig, parse_graph_file, simulate, write_graph_file
from .tpp import TrainConfig, estimate_graph, evaluate_model, predict_sequence, train


def _read_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    cfg = read_json(path)
    if not isinstance(cfg, dict):
        raise ValidationError("config file must hold a JSON object")
    return cfg


def _merge(defaults: dict, file_cfg: dict, flags: dict) -> dict:
    """flags > config file > defaults; unknown config keys are an error."""
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(file_cfg)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, command: str, cfg: dict) -> str:
    digest = config_digest({"command": command, **cfg})
    write_json(out / f"{command}_{digest}.config.json", {"command": command, **cfg})
    return digest


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated floats, got {text!r}")


# ---------------------------------------------------------------- generate

def cmd_generate(args) -> int:
    defaults = {
        "nodes": 20, "sparsity": 0.1, "duration": 1000.0, "steps": 10,
        "carryover": 0.5, "kernel": "full_history", "seed": 0,
        "mu_range": [0.5, 1.5], "alpha_range": [0.1, 0.5], "beta_range": [1.0, 5.0],
    }
    flags = {
        "nodes": args.nodes, "sparsity": args.sparsity, "duration": args.duration,
        "steps": args.steps, "carryover": args.carryover, "kernel": args.kernel,
        "seed": args.seed,
    }
    cfg = _merge(defaults, _read_config_file(args.config), flags)
    out = _outdir(args)
    digest = _echo_config(out, "generate", cfg)
    scfg = SynthConfig(
        num_nodes=cfg["nodes"], sparsity=cfg["sparsity"], duration=cfg["duration"],
        num_steps=cfg["steps"], carryover_fraction=cfg["carryover"],
        mu_range=tuple(cfg["mu_range"]), alpha_range=tuple(cfg["alpha_range"]),
        beta_range=tuple(cfg["beta_range"]), kernel=cfg["kernel"], seed=cfg["seed"],
    )
    res = simulate(scfg)
    write_event_file(res.seq, out / f"generate_{digest}.events.jsonl")
    write_graph_file(res.timeline, out / f"generate_{digest}.graph.jsonl")
    print(f"generate: {len(res.seq)} events -> {out / f'generate_{digest}.events.jsonl'}")
    return 0


# ------------------------------------------------------------------- train

def _train_config(args) -> tuple[dict, TrainConfig]:
    defaults = train_config_to_dict(TrainConfig())
    file_cfg = _read_config_file(args.config)
    flags = {
        "estimator": args.estimator, "graph_epochs": args.epochs,
        "train_steps": args.train_steps, "num_mc": args.mc, "seed": args.seed,
    }
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(defaults)
    for key, val in file_cfg.items():
        if isinstance(defaults[key], dict):
            sub_unknown = set(val) - set(defaults[key])
            if sub_unknown:
                raise ValidationError(f"unknown config keys under {key}: {sorted(sub_unknown)}")
            merged[key] = {**defaults[key], **val}
        else:
            merged[key] = val
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged, train_config_from_dict(merged)


def cmd_train(args) -> int:
    seq = parse_event_file(args.events)
    cfg_dict, tcfg = _train_config(args)
    out = _outdir(args)
    digest = _echo_config(out, "train", {"events": str(args.events), **cfg_dict})
    t0 = time.perf_counter()
    model = train(seq, tcfg)
    runtime = time.perf_counter() - t0
    save_checkpoint(model, tcfg, out / f"train_{digest}.checkpoint.json")
    report = build_report(
        {"command": "train", "events": str(args.events), **cfg_dict}, tcfg.seed,
        extra={
            "final_log_likelihood": model.diagnostics.get("best_ll"),
            "diverged": model.diagnostics.get("diverged"),
            "events": len(seq),
        },
    )
    write_metrics(report, out / f"train_{digest}.report.json")
    print(f"train: checkpoint -> {out / f'train_{digest}.checkpoint.json'}", file=sys.stdout)
    print(f"runtime_seconds: {runtime:.2f}", file=sys.stderr)
    return 0


# ---------------------------------------------------------- estimate-graph

def cmd_estimate_graph(args) -> int:
    seq = parse_event_file(args.events)
    defaults = {
        "estimator": "softmax", "epochs": 5, "tau": 0.25, "sub_windows": 5,
        "theta": None, "lam_frac": 0.5, "basis": 6, "chunks": 150, "seed": 0,
    }
    flags = {
        "estimator": args.estimator, "epochs": args.epochs, "tau": args.tau,
        "sub_windows": args.sub_windows, "theta": args.theta, "seed": args.seed,
    }
    cfg = _merge(defaults, _read_config_file(args.config), flags)
    out = _outdir(args)
    digest = _echo_config(out, "estimate-graph", {"events": str(args.events), **cfg})
    tcfg = TrainConfig(
        estimator=cfg["estimator"], graph_epochs=cfg["epochs"], graph_tau=cfg["tau"],
        graph_sub_windows=cfg["sub_windows"], graph_theta=cfg["theta"],
        lasso_lam_frac=cfg["lam_frac"], lasso_basis=cfg["basis"],
        lasso_chunks=cfg["chunks"], seed=cfg["seed"],
    )
    graph = estimate_graph(seq, tcfg)
    write_json(out / f"estimate-graph_{digest}.graph.json", graph_to_dict(graph))

    ssi_mean = None
    extra = {"windows": len(graph.windows), "estimator": cfg["estimator"]}
    if args.truth:
        timeline = parse_graph_file(args.truth)
        truth = [timeline.adjacency(k) for k in range(len(timeline.snapshots))]
        if len(truth) != len(graph.windows):
            extra["ssi_windows"] = None
            extra["ssi_reason"] = (
                f"truth has {len(truth)} epochs but the estimate has "
                f"{len(graph.windows)} windows"
            )
        else:
            from .graphs import ssi as _ssi
            per_window = [
                _ssi(t, w.adjacency).value for t, w in zip(truth, graph.windows)
            ]
            ssi_mean = float(np.mean(per_window))
            extra["ssi_windows"] = per_window
            fig_ssi_windows(per_window, out / f"estimate-graph_{digest}.ssi.png")
    report = build_report(
        {"command": "estimate-graph", "events": str(args.events), **cfg},
        cfg["seed"], ssi=ssi_mean, extra=extra,
    )
    write_metrics(report, out / f"estimate-graph_{digest}.report.json")
    print(f"estimate-graph: {len(graph.windows)} windows"
          + (f", mean SSI {ssi_mean:.4f}" if ssi_mean is not None else ""))
    return 0


# ----------------------------------------------------------------- predict

def cmd_predict(args) -> int:
    seq = parse_event_file(args.events)
    model, tcfg = load_checkpoint(args.checkpoint)
    out = _outdir(args)
    digest = _echo_config(
        out, "predict",
        {"events": str(args.events), "checkpoint": str(args.checkpoint), "seed": tcfg.seed},
    )
    preds = predict_sequence(model, seq)
    starts = np.concatenate([[0.0], seq.times[:-1]])
    rows = [
        [f"{t:.9f}", f"{p.t_hat:.9f}", int(e), p.type_hat, int(p.truncated)]
        for t, e, p in zip(seq.times, seq.types, preds)
    ]
    write_csv(
        out / f"predict_{digest}.predictions.csv",
        ["t_actual", "t_hat", "type_actual", "type_hat", "truncated"], rows,
    )
    gaps_actual = seq.times - starts
    gaps_pred = np.array([p.t_hat for p in preds]) - starts
    fig_prediction_scatter(gaps_actual, gaps_pred, out / f"predict_{digest}.scatter.png")
    print(f"predict: {len(preds)} predictions -> {out / f'predict_{digest}.predictions.csv'}")
    return 0


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args) -> int:
    seq = parse_event_file(args.events)
    model, tcfg = load_checkpoint(args.checkpoint)
    out = _outdir(args)
    cfg = {"events": str(args.events), "checkpoint": str(args.checkpoint), "seed": tcfg.seed}
    digest = _echo_config(out, "evaluate", cfg)
    t0 = time.perf_counter()
    metrics = evaluate_model(model, seq, seed=tcfg.seed)
    runtime = time.perf_counter() - t0

    ssi_mean = None
    extra = {
        "type_accuracy": metrics["type_accuracy"], "rmse_rel": metrics["rmse_rel"],
        "mean_gap": metrics["mean_gap"],
        "truncated_fraction": metrics["truncated_fraction"],
    }
    if args.truth:
        timeline = parse_graph_file(args.truth)
        truth = [timeline.adjacency(k) for k in range(len(timeline.snapshots))]
        if len(truth) == len(model.graph.windows):
            ssi_mean = mean_timeline_ssi(truth, model.graph)
        else:
            extra["ssi_reason"] = (
                f"truth has {len(truth)} epochs but the checkpoint graph has "
                f"{len(model.graph.windows)} windows"
            )
    report = build_report(
        {"command": "evaluate", **cfg}, tcfg.seed,
        rmse=metrics["rmse"], nll=metrics["nll_per_event"], ssi=ssi_mean, extra=extra,
    )
    write_metrics(report, out / f"evaluate_{digest}.report.json")
    print(f"evaluate: rmse {metrics['rmse']:.4f}  nll/event {metrics['nll_per_event']:.4f}"
          + (f"  ssi {ssi_mean:.4f}" if ssi_mean is not None else ""))
    print(f"runtime_seconds: {runtime:.2f}", file=sys.stderr)
    return 0


# ------------------------------------------------------------------ ablate

def cmd_ablate(args) -> int:
    defaults = {
        "nodes": 20, "sparsity": 0.1, "duration": 300.0, "steps": 3,
        "kernel": "last_spike", "train_fraction": 2.0 / 3.0, "train_steps": 60,
        "seeds": 5, "seed": 0,
    }
    flags = {
        "nodes": args.nodes, "sparsity": args.sparsity, "duration": args.duration,
        "steps": args.steps, "seeds": args.seeds, "seed": args.seed,
    }
    cfg = _merge(defaults, _read_config_file(args.config), flags)
    out = _outdir(args)
    digest = _echo_config(out, "ablate", cfg)
    protocol = AblationProtocol(
        nodes=cfg["nodes"], sparsity=cfg["sparsity"], duration=cfg["duration"],
        num_steps=cfg["steps"], kernel=cfg["kernel"],
        train_fraction=cfg["train_fraction"], train_steps=cfg["train_steps"],
        seeds=cfg["seeds"],
    )
    t0 = time.perf_counter()
    rows = run_ablation(protocol, workers=args.workers)
    runtime = time.perf_counter() - t0

    stats = {}
    for name, row in rows.items():
        report = build_report(
            {"command": "ablate", "arm": name, **cfg}, cfg["seed"],
            rmse=row.mean,
            extra={
                "rmse_per_seed": row.rmses, "nll_per_seed": row.nlls,
                "rmse_se": row.se,
            },
        )
        write_metrics(report, out / f"ablate_{digest}.{name}.report.json")
        stats[name] = (row.mean, row.se)
    full = rows["full"]
    margins = {
        other: (rows[other].mean - full.mean) / max(pooled_se(full, rows[other]), 1e-300)
        for other in rows if other != "full"
    }
    table = [[name, f"{stats[name][0]:.6f}", f"{stats[name][1]:.6f}"] for name in rows]
    write_csv(out / f"ablate_{digest}.fig3.csv", ["arm", "rmse_mean", "rmse_se"], table)
    fig_ablation(stats, out / f"ablate_{digest}.fig3.png")
    print("ablate: mean RMSE " + "  ".join(f"{n}={stats[n][0]:.4f}" for n in rows))
    print("ablate: margin over full (pooled SEs) "
          + "  ".join(f"{n}={margins[n]:+.2f}" for n in margins))
    print(f"runtime_seconds: {runtime:.2f}", file=sys.stderr)
    return 0


# ------------------------------------------------------------------- sweep

def cmd_sweep(args) -> int:
    defaults = {
        "nodes": "10,20,40", "sparsity": "0.1,0.3,0.5", "seeds": 5,
        "duration": 600.0, "steps": 3, "kernel": "last_spike",
        "estimator": "softmax", "tau": 0.05, "sub_windows": 45,
        "theta_scale": 1.2, "lam_frac": 0.5, "basis": 6, "chunks": 150,
        "with_model": False, "train_steps": 40, "seed": 0,
    }
    flags = {
        "nodes": args.nodes, "sparsity": args.sparsity, "seeds": args.seeds,
        "duration": args.duration, "estimator": args.estimator,
        "with_model": args.with_model or None, "seed": args.seed,
    }
    cfg = _merge(defaults, _read_config_file(args.config), flags)
    nodes = _int_list(cfg["nodes"]) if isinstance(cfg["nodes"], str) else list(cfg["nodes"])
    sparsities = (
        _float_list(cfg["sparsity"]) if isinstance(cfg["sparsity"], str)
        else list(cfg["sparsity"])
    )
    out = _outdir(args)
    digest = _echo_config(out, "sweep", cfg)
    protocol = GridProtocol(
        duration=cfg["duration"], num_steps=cfg["steps"], kernel=cfg["kernel"],
        estimator=cfg["estimator"], tau=cfg["tau"], sub_windows=cfg["sub_windows"],
        theta_scale=cfg["theta_scale"], lasso_lam_frac=cfg["lam_frac"],
        lasso_basis=cfg["basis"], lasso_chunks=cfg["chunks"],
        train_steps=cfg["train_steps"],
    )
    t0 = time.perf_counter()
    runs = run_grid(
        protocol, nodes=tuple(nodes), sparsities=tuple(sparsities),
        seeds=cfg["seeds"], with_model=cfg["with_model"], workers=args.workers,
    )
    runtime = time.perf_counter() - t0

    for r in runs:
        tag = f"n{r.nodes}_s{r.sparsity}_k{r.seed}"
        report = build_report(
            {"command": "sweep", "run": tag, **cfg}, r.seed,
            rmse=r.rmse, ssi=r.ssi,
            extra={"nodes": r.nodes, "sparsity": r.sparsity, "rmse_rel": r.rmse_rel,
                   "nll": r.nll},
        )
        write_metrics(report, out / f"sweep_{digest}.{tag}.report.json")

    rows_a = [
        [r.nodes, r.sparsity, r.seed, f"{r.ssi:.6f}"] for r in runs
    ]
    write_csv(out / f"sweep_{digest}.fig2a.csv", ["nodes", "sparsity", "seed", "ssi"], rows_a)
    fig_ssi_grid([r.as_row() for r in runs], out / f"sweep_{digest}.fig2a.png")
    if cfg["with_model"]:
        rows_b = [
            [r.nodes, r.sparsity, r.seed, f"{r.rmse:.6f}", f"{r.rmse_rel:.6f}",
             f"{r.nll:.6f}"]
            for r in runs
        ]
        write_csv(
            out / f"sweep_{digest}.fig2bcd.csv",
            ["nodes", "sparsity", "seed", "rmse", "rmse_rel", "nll"], rows_b,
        )
    print(f"sweep: {len(runs)} runs -> {out}")
    print(f"runtime_seconds: {runtime:.2f}", file=sys.stderr)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdgn",
        description="Spiking-network dependency-graph estimation for event streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="global seed")
        p.add_argument("--out", default=".", help="output directory")

    p = sub.add_parser("generate", help="simulate a synthetic event stream")
    common(p)
    p.add_argument("--nodes", type=int)
    p.add_argument("--sparsity", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--carryover", type=float)
    p.add_argument("--kernel", choices=["full_history", "last_spike"])
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the intensity model on an event file")
    common(p)
    p.add_argument("--events", required=True)
    p.add_argument("--estimator", choices=["softmax", "lasso"])
    p.add_argument("--epochs", type=int, help="graph windows")
    p.add_argument("--train-steps", type=int, dest="train_steps")
    p.add_argument("--mc", type=int, help="MC samples per interval")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate-graph", help="estimate the dependency graph")
    common(p)
    p.add_argument("--events", required=True)
    p.add_argument("--truth", help="ground-truth graph file for SSI")
    p.add_argument("--estimator", choices=["softmax", "lasso"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--sub-windows", type=int, dest="sub_windows")
    p.add_argument("--theta", type=float)
    p.set_defaults(func=cmd_estimate_graph)

    p = sub.add_parser("predict", help="next-event predictions from a checkpoint")
    common(p)
    p.add_argument("--events", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="held-out metrics from a checkpoint")
    common(p)
    p.add_argument("--events", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--truth", help="ground-truth graph file for SSI")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="graph-mode ablation plus baselines")
    common(p)
    p.add_argument("--nodes", type=int)
    p.add_argument("--sparsity", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="the synthetic recovery grid")
    common(p)
    p.add_argument("--nodes", help="comma-separated node counts")
    p.add_argument("--sparsity", help="comma-separated sparsity levels")
    p.add_argument("--seeds", type=int)
    p.add_argument("--duration", type=float)
    p.add_argument("--estimator", choices=["softmax", "lasso"])
    p.add_argument("--with-model", action="store_true", dest="with_model",
                   help="also train and score the intensity model per run")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing input: {exc}", file=sys.stderr)
        return 2
    except RuntimeFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
