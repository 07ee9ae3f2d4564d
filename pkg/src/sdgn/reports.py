"""Run artifacts: canonical JSON, config digests, metrics files, checkpoints.

Every artifact is a deterministic function of its inputs so that re-running a
command with the same config and seed reproduces the bytes exactly. The one
quantity that cannot be deterministic, wall-clock runtime, is therefore kept
out of the report body (written as null with a reason) and surfaced on stderr
by the CLI instead.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EventFileError, ValidationError
from .graphs import DynamicGraph, GraphWindow
from .plasticity import StdpConfig, SynapseMatrix
from .snn import LifNetwork, LifParams, SimConfig
from .tpp import EmbeddingConfig, IntensityParams, TrainConfig, TrainedModel

CHECKPOINT_FORMAT = "sdgn-checkpoint-v1"


def _plain(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    """Sorted-key compact JSON; non-finite floats are rejected, not smuggled."""
    try:
        return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)
    except ValueError as exc:
        raise ValidationError(f"non-finite value in artifact: {exc}") from None


def config_digest(cfg: dict) -> str:
    """First 16 hex chars of the sha256 of the canonical config encoding."""
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()[:16]


def finite_or_null(value) -> tuple[float | None, str | None]:
    """Pass finite floats through; map None/NaN/inf to (None, reason)."""
    if value is None:
        return None, "not computed"
    v = float(value)
    if math.isfinite(v):
        return v, None
    return None, f"non-finite value {v!r}"


@dataclass
class MetricsReport:
    """One run's metric bundle; None entries carry a reason in null_reasons."""

    config_digest: str
    seed: int
    rmse: float | None = None
    nll: float | None = None
    ssi: float | None = None
    runtime_seconds: float | None = None
    null_reasons: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "config_digest": self.config_digest,
            "seed": int(self.seed),
            "rmse": self.rmse,
            "nll": self.nll,
            "ssi": self.ssi,
            "runtime_seconds": self.runtime_seconds,
        }
        if self.null_reasons:
            out["null_reasons"] = dict(sorted(self.null_reasons.items()))
        if self.extra:
            out["extra"] = {k: _plain(v) for k, v in sorted(self.extra.items())}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            config_digest=d["config_digest"],
            seed=int(d["seed"]),
            rmse=d.get("rmse"),
            nll=d.get("nll"),
            ssi=d.get("ssi"),
            runtime_seconds=d.get("runtime_seconds"),
            null_reasons=dict(d.get("null_reasons", {})),
            extra=dict(d.get("extra", {})),
        )


def build_report(config: dict, seed: int, *, rmse=None, nll=None, ssi=None, extra=None) -> MetricsReport:
    """Assemble a report, replacing non-finite metrics with reasoned nulls.

    Runtime is always null in the artifact so that identical runs write
    identical bytes; the CLI prints the measured wall time to stderr.
    """
    reasons = {"runtime_seconds": "excluded from the artifact for byte determinism"}
    vals = {}
    for name, raw in (("rmse", rmse), ("nll", nll), ("ssi", ssi)):
        v, why = finite_or_null(raw)
        vals[name] = v
        if why is not None:
            reasons[name] = why
    return MetricsReport(
        config_digest=config_digest(config),
        seed=seed,
        rmse=vals["rmse"],
        nll=vals["nll"],
        ssi=vals["ssi"],
        runtime_seconds=None,
        null_reasons=reasons,
        extra=dict(extra or {}),
    )


def write_json(path, payload: dict) -> None:
    Path(path).write_text(canonical_json(payload) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise EventFileError(f"invalid JSON in {path}: {exc.msg}") from None


def write_metrics(report: MetricsReport, path) -> None:
    write_json(path, report.to_dict())


def read_metrics(path) -> MetricsReport:
    return MetricsReport.from_dict(read_json(path))


def write_csv(path, header: list[str], rows: list[list]) -> None:
    """Delimited table with repr-exact floats so re-runs are byte-identical."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if not math.isfinite(f):
            return ""
        return repr(f)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return v


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EventFileError(f"empty table {path}")
    return rows[0], rows[1:]


# -- config (de)serialization -------------------------------------------------

def train_config_to_dict(cfg: TrainConfig) -> dict:
    return _plain(asdict(cfg))


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    emb = EmbeddingConfig(**d.pop("embedding"))
    lif = LifParams(**d.pop("lif"))
    sim = SimConfig(**d.pop("sim"))
    stdp_d = d.pop("stdp")
    stdp = StdpConfig(**stdp_d) if stdp_d is not None else None
    known = {f for f in TrainConfig.__dataclass_fields__}
    bad = set(d) - known
    if bad:
        raise ValidationError(f"unknown train config keys: {sorted(bad)}")
    return TrainConfig(embedding=emb, lif=lif, sim=sim, stdp=stdp, **d)


# -- checkpoints ---------------------------------------------------------------

def graph_to_dict(graph: DynamicGraph) -> dict:
    return {
        "num_nodes": graph.num_nodes,
        "windows": [
            {
                "t_start": w.t_start,
                "t_end": w.t_end,
                "probs": w.probs.tolist(),
                "adjacency": w.adjacency.tolist(),
            }
            for w in graph.windows
        ],
    }


def graph_from_dict(d: dict) -> DynamicGraph:
    windows = tuple(
        GraphWindow(
            float(w["t_start"]), float(w["t_end"]),
            np.asarray(w["probs"], dtype=np.float64),
            np.asarray(w["adjacency"], dtype=np.float64),
        )
        for w in d["windows"]
    )
    return DynamicGraph(windows=windows, num_nodes=int(d["num_nodes"]))


def save_checkpoint(model: TrainedModel, cfg: TrainConfig, path) -> None:
    """Self-describing single-file snapshot: params, synapses, graph, configs."""
    net = model.network
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": train_config_to_dict(cfg),
        "config_digest": config_digest(train_config_to_dict(cfg)),
        "params": {
            "w": model.params.w.tolist(),
            "delta": model.params.delta.tolist(),
            "b": model.params.b.tolist(),
        },
        "graph": graph_to_dict(model.graph),
        "network": {
            "synapse": {
                "pre": net.weights.pre.tolist(),
                "post": net.weights.post.tolist(),
                "w": net.weights.w.tolist(),
                "num_neurons": net.weights.num_neurons,
                "w_max": net.weights.w_max,
            },
            "input_map": [b.tolist() for b in net.input_map],
            "input_weight": net.input_weight,
        },
        "train_horizon": model.train_horizon,
        "diagnostics": _plain(model.diagnostics),
    }
    write_json(path, payload)


def load_checkpoint(path) -> tuple[TrainedModel, TrainConfig]:
    d = read_json(path)
    fmt = d.get("format")
    if fmt != CHECKPOINT_FORMAT:
        raise EventFileError(f"unsupported checkpoint format {fmt!r} in {path}")
    cfg = train_config_from_dict(d["config"])
    params = IntensityParams(
        w=np.asarray(d["params"]["w"], dtype=np.float64),
        delta=np.asarray(d["params"]["delta"], dtype=np.float64),
        b=np.asarray(d["params"]["b"], dtype=np.float64),
    )
    syn_d = d["network"]["synapse"]
    weights = SynapseMatrix(
        pre=syn_d["pre"], post=syn_d["post"], w=syn_d["w"],
        num_neurons=int(syn_d["num_neurons"]), w_max=float(syn_d["w_max"]),
    )
    network = LifNetwork(
        params=cfg.lif,
        weights=weights,
        input_map=tuple(np.asarray(b, dtype=np.int64) for b in d["network"]["input_map"]),
        input_weight=float(d["network"]["input_weight"]),
    )
    model = TrainedModel(
        params=params,
        graph=graph_from_dict(d["graph"]),
        network=network,
        embedding=cfg.embedding,
        lif=cfg.lif,
        sim=cfg.sim,
        blocks=[np.asarray(b) for b in network.input_map],
        train_horizon=float(d["train_horizon"]),
        diagnostics=dict(d.get("diagnostics", {})),
    )
    return model, cfg
