"""Spiking-network dependency-graph estimation for event streams."""

import os as _os

# Parallelism is managed at the run level (SDGN_THREADS fans out whole runs);
# pin BLAS pools to one thread by default so per-run results do not depend on
# reduction order. Set the variables beforehand to override.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .errors import (
    EventFileError,
    InsufficientDataError,
    RuntimeFailure,
    SdgnError,
    SimulationError,
    ValidationError,
)
from .events import (
    EventSequence,
    SpikeTrain,
    encode_as_spikes,
    parse_event_file,
    serialize_events,
    split_train_test,
    write_event_file,
)
from .synth import (
    GraphTimeline,
    HawkesParams,
    SynthConfig,
    SynthResult,
    grid_oracle_simulate,
    hawkes_intensity,
    parse_graph_file,
    sample_graph_timeline,
    simulate,
    write_graph_file,
)
from .plasticity import (
    StdpConfig,
    StdpEngine,
    SynapseMatrix,
    convergence_slope,
    random_topology,
    stdp_kernel,
    weight_update,
)
from .snn import (
    LifNetwork,
    LifParams,
    SimConfig,
    SimOutput,
    block_network,
    identity_network,
    min_detectable_dt,
    run_event_driven,
    surrogate_grad,
    synaptic_current,
)
from .graphs import (
    DynamicGraph,
    GraphWindow,
    SsiReport,
    ablation_graph,
    edge_probabilities,
    estimate_dynamic_graph,
    gram_diagnostic,
    lasso_dynamic_graph,
    lasso_neighborhoods,
    mean_timeline_ssi,
    pair_score,
    ssi,
    threshold_graph,
)
from .tpp import (
    EmbeddingConfig,
    IntensityParams,
    LikelihoodData,
    Prediction,
    TrainConfig,
    TrainedModel,
    build_likelihood_data,
    compute_embeddings,
    estimate_graph,
    evaluate_model,
    log_likelihood,
    parameter_gradients,
    predict_next,
    predict_sequence,
    rmse,
    train,
)
from .harness import (
    AblationProtocol,
    AblationRow,
    GridProtocol,
    GridRun,
    grid_run,
    pooled_se,
    run_ablation,
    run_grid,
    spearman,
    trend_margins,
)
from .reports import (
    MetricsReport,
    build_report,
    canonical_json,
    config_digest,
    load_checkpoint,
    read_metrics,
    save_checkpoint,
    write_metrics,
)
from .baselines import (
    BaselineConfig,
    HawkesModel,
    evaluate_hawkes,
    fit_hawkes,
    fit_poisson,
    hawkes_log_likelihood,
    poisson_log_likelihood,
    predict_sequence_hawkes,
)

__version__ = "0.1.0"

__all__ = [
    "AblationProtocol",
    "AblationRow",
    "BaselineConfig",
    "DynamicGraph",
    "EmbeddingConfig",
    "EventFileError",
    "EventSequence",
    "GraphTimeline",
    "GraphWindow",
    "GridProtocol",
    "GridRun",
    "HawkesModel",
    "HawkesParams",
    "InsufficientDataError",
    "IntensityParams",
    "LifNetwork",
    "LifParams",
    "LikelihoodData",
    "MetricsReport",
    "Prediction",
    "RuntimeFailure",
    "SdgnError",
    "SimConfig",
    "SimOutput",
    "SimulationError",
    "SpikeTrain",
    "SsiReport",
    "StdpConfig",
    "StdpEngine",
    "SynapseMatrix",
    "SynthConfig",
    "SynthResult",
    "TrainConfig",
    "TrainedModel",
    "ValidationError",
    "ablation_graph",
    "block_network",
    "build_likelihood_data",
    "build_report",
    "canonical_json",
    "compute_embeddings",
    "config_digest",
    "convergence_slope",
    "edge_probabilities",
    "encode_as_spikes",
    "estimate_dynamic_graph",
    "estimate_graph",
    "evaluate_hawkes",
    "evaluate_model",
    "fit_hawkes",
    "fit_poisson",
    "gram_diagnostic",
    "grid_oracle_simulate",
    "grid_run",
    "hawkes_intensity",
    "hawkes_log_likelihood",
    "identity_network",
    "lasso_dynamic_graph",
    "lasso_neighborhoods",
    "load_checkpoint",
    "log_likelihood",
    "mean_timeline_ssi",
    "min_detectable_dt",
    "pair_score",
    "parameter_gradients",
    "parse_event_file",
    "parse_graph_file",
    "poisson_log_likelihood",
    "pooled_se",
    "predict_next",
    "predict_sequence",
    "predict_sequence_hawkes",
    "random_topology",
    "read_metrics",
    "rmse",
    "run_ablation",
    "run_event_driven",
    "run_grid",
    "sample_graph_timeline",
    "save_checkpoint",
    "serialize_events",
    "simulate",
    "spearman",
    "split_train_test",
    "ssi",
    "stdp_kernel",
    "surrogate_grad",
    "synaptic_current",
    "threshold_graph",
    "train",
    "trend_margins",
    "weight_update",
    "write_event_file",
    "write_graph_file",
    "write_metrics",
]
