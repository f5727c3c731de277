from .cube import (
    CubeFilter,
    FilterConfig,
    ProposalModel,
    RunningFilter,
    UpdateModel,
    estimate,
    init_particles,
)
from .dataset import (
    Episode,
    SequenceDataset,
    collect_sequences,
    load_dataset,
    save_dataset,
)
from .loss import FilterLossConfig, component_errors, filter_loss
from .particles import (
    FilterCollapsed,
    effective_sample_size,
    filter_step,
    normalize_log_weights,
    systematic_resample,
)
from .training import (
    FilterTrainConfig,
    InLoopCollapse,
    TrainingDiverged,
    evaluate_filter,
    evaluate_stage1,
    identity_baseline_loss,
    train_inloop,
    train_stage1,
    train_stage2,
)

__all__ = [
    "CubeFilter",
    "Episode",
    "FilterCollapsed",
    "FilterConfig",
    "FilterLossConfig",
    "FilterTrainConfig",
    "InLoopCollapse",
    "ProposalModel",
    "RunningFilter",
    "SequenceDataset",
    "TrainingDiverged",
    "UpdateModel",
    "collect_sequences",
    "component_errors",
    "effective_sample_size",
    "estimate",
    "evaluate_filter",
    "evaluate_stage1",
    "filter_loss",
    "filter_step",
    "identity_baseline_loss",
    "init_particles",
    "load_dataset",
    "normalize_log_weights",
    "save_dataset",
    "systematic_resample",
    "train_inloop",
    "train_stage1",
    "train_stage2",
]
