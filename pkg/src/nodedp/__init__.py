"""nodedp: node-level differentially private training on graphs.

Sub-graph sampling with per-node participation bounds, heavy-tailed
gradient noise, Renyi-DP accounting with noise-scale calibration, a
membership-style privacy audit, and the precision ceiling implied by
releasing per-node embeddings.
"""

__version__ = "0.1.0"

from .errors import (
    NodeDPError,
    ParseError,
    GraphIntegrityError,
    ConfigError,
    AccountantOverflowError,
    CalibrationError,
    TrainingDivergedError,
)
from .graph import (
    Graph,
    NodeSplit,
    load_graph,
    save_graph,
    gen_erdos_renyi,
    gen_planted_classes,
    split_train_test,
)
from .noise import NoiseSpec, sample_noise, sample_sml, sample_gaussian
from .accountant import (
    AccountantConfig,
    AccountedEpsilon,
    CalibrationResult,
    accounted_epsilon,
    calibrate_sigma,
    rdp_gamma,
    rdp_to_dp,
    rho_pmf,
    rho_pmf_no_enforce,
    precision_upper_bound,
    gaussian_sigma_to_match_ak,
)
from .seeding import named_streams
from .sampler import (
    SamplerConfig,
    SubGraph,
    SubGraphBatch,
    ZSpec,
    heter_poisson,
    coupled_adjacent_sample,
    coupled_realized_k,
    MODE_TRAIN,
    MODE_INFERENCE,
)
from .gnn import (
    ARCH_GCN,
    ARCH_GIN,
    ARCH_SAGE,
    CLIP_THRESHOLD,
    ModelParams,
    GradientVector,
    init_params,
    batch_forward,
    batch_losses_and_clipped_sum,
    clip_gradient,
    save_params,
    load_params,
)
from .trainer import (
    TrainConfig,
    RunReport,
    EvalReport,
    train,
    evaluate,
    resolve_sigma,
    impact_experiment,
    MODE_TRANSDUCTIVE,
    MODE_INDUCTIVE,
)
from .audit import (
    AuditObservations,
    AuditResult,
    run_audit,
    attack_accuracy,
    empirical_epsilon,
    audit_result,
)

__all__ = [
    "__version__",
    # errors
    "NodeDPError",
    "ParseError",
    "GraphIntegrityError",
    "ConfigError",
    "AccountantOverflowError",
    "CalibrationError",
    "TrainingDivergedError",
    # graph
    "Graph",
    "NodeSplit",
    "load_graph",
    "save_graph",
    "gen_erdos_renyi",
    "gen_planted_classes",
    "split_train_test",
    # noise
    "NoiseSpec",
    "sample_noise",
    "sample_sml",
    "sample_gaussian",
    # accountant
    "AccountantConfig",
    "AccountedEpsilon",
    "CalibrationResult",
    "accounted_epsilon",
    "calibrate_sigma",
    "rdp_gamma",
    "rdp_to_dp",
    "rho_pmf",
    "rho_pmf_no_enforce",
    "precision_upper_bound",
    "gaussian_sigma_to_match_ak",
    # seeding
    "named_streams",
    # sampler
    "SamplerConfig",
    "SubGraph",
    "SubGraphBatch",
    "ZSpec",
    "heter_poisson",
    "coupled_adjacent_sample",
    "coupled_realized_k",
    "MODE_TRAIN",
    "MODE_INFERENCE",
    # gnn
    "ARCH_GCN",
    "ARCH_GIN",
    "ARCH_SAGE",
    "CLIP_THRESHOLD",
    "ModelParams",
    "GradientVector",
    "init_params",
    "batch_forward",
    "batch_losses_and_clipped_sum",
    "clip_gradient",
    "save_params",
    "load_params",
    # trainer
    "TrainConfig",
    "RunReport",
    "EvalReport",
    "train",
    "evaluate",
    "resolve_sigma",
    "impact_experiment",
    "MODE_TRANSDUCTIVE",
    "MODE_INDUCTIVE",
    # audit
    "AuditObservations",
    "AuditResult",
    "run_audit",
    "attack_accuracy",
    "empirical_epsilon",
    "audit_result",
]
