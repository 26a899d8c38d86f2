"""Full-duplex pilot exchange over a passive reflecting surface, with a
graph-attention channel estimator, a least-squares baseline, and the
simulation harness that compares them."""

__version__ = "0.1.0"

from .channel import (
    DEFAULT_POLYNOMIAL,
    PRIMITIVE_POLYNOMIAL_DEG4,
    PURE_LOS_K,
    BurstComponents,
    ChannelRealization,
    NoiseParams,
    PilotSequence,
    ReceivedPilots,
    RisConfig,
    gen_pn_sequence,
    instantaneous_snr,
    ris_phase_matrix,
    sample_rician_channel,
    synthesize_received_pilots,
)
from .dataset import (
    ChecksumMismatchError,
    DatasetConfig,
    DatasetError,
    DatasetManifest,
    GraphSample,
    ManifestInconsistencyError,
    SampleMeta,
    TruncatedBlobError,
    build_sample,
    generate_dataset,
    load_dataset,
    pack_channel_label,
    save_dataset,
    split,
    stack_features,
    unpack_channel_label,
)
from .estimators import EstimateReport, ls_estimate, ls_estimate_pair, nmse, pilot_design_matrix
from .harness import (
    CSV_HEADER,
    EvalPoint,
    ExperimentConfig,
    NmseRecord,
    TrainingDivergedError,
    TrainingLog,
    eval_points,
    evaluate,
    model_estimator,
    parse_records_csv,
    point_samples,
    report,
    run_ls_baseline,
    snr_grid,
    summarize,
    train,
    write_records_csv,
    write_resolved_config,
)

__all__ = [
    "__version__",
    "build_sample",
    "BurstComponents",
    "ChannelRealization",
    "ChecksumMismatchError",
    "CSV_HEADER",
    "DatasetConfig",
    "DatasetError",
    "DatasetManifest",
    "DEFAULT_POLYNOMIAL",
    "EstimateReport",
    "eval_points",
    "EvalPoint",
    "evaluate",
    "ExperimentConfig",
    "gen_pn_sequence",
    "generate_dataset",
    "GraphSample",
    "instantaneous_snr",
    "load_dataset",
    "ls_estimate",
    "ls_estimate_pair",
    "ManifestInconsistencyError",
    "model_estimator",
    "nmse",
    "NmseRecord",
    "NoiseParams",
    "pack_channel_label",
    "parse_records_csv",
    "pilot_design_matrix",
    "PilotSequence",
    "point_samples",
    "PRIMITIVE_POLYNOMIAL_DEG4",
    "PURE_LOS_K",
    "ReceivedPilots",
    "report",
    "ris_phase_matrix",
    "RisConfig",
    "run_ls_baseline",
    "sample_rician_channel",
    "SampleMeta",
    "save_dataset",
    "snr_grid",
    "split",
    "stack_features",
    "summarize",
    "synthesize_received_pilots",
    "train",
    "TrainingDivergedError",
    "TrainingLog",
    "TruncatedBlobError",
    "unpack_channel_label",
    "write_records_csv",
    "write_resolved_config",
]
