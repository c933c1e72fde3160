from .diff_ts import (
    AmplifiedLabels,
    DiffTsConfig,
    DiffusionModel,
    NoiseSchedule,
    concat_encode,
    diversity_loss,
    forward_noise,
    infer_amplified,
    infer_database,
    reverse_step,
    train_diff_ts,
)
from .gnn_ts import (
    CellVocabulary,
    GnnTsConfig,
    ImportanceModel,
    TBert,
    TrajectoryGraph,
    build_graph,
    contrastive_loss,
    encode_points,
    globality,
    importance,
    ml_loss,
    pretrain_mlm,
    refine,
    segment,
    train_gnn_ts,
    uniqueness,
)
from .mutual_learning import (
    MlSchedule,
    MutualLearningResult,
    TrainingLogRecord,
    run_mutual_learning,
    soft_labels,
)

__all__ = [
    # GNN-TS
    "CellVocabulary",
    "GnnTsConfig",
    "ImportanceModel",
    "TBert",
    "TrajectoryGraph",
    "build_graph",
    "contrastive_loss",
    "encode_points",
    "globality",
    "importance",
    "ml_loss",
    "pretrain_mlm",
    "refine",
    "segment",
    "train_gnn_ts",
    "uniqueness",
    # Diff-TS
    "AmplifiedLabels",
    "DiffTsConfig",
    "DiffusionModel",
    "NoiseSchedule",
    "concat_encode",
    "diversity_loss",
    "forward_noise",
    "infer_amplified",
    "infer_database",
    "reverse_step",
    "train_diff_ts",
    # Mutual learning
    "MlSchedule",
    "MutualLearningResult",
    "TrainingLogRecord",
    "run_mutual_learning",
    "soft_labels",
]
