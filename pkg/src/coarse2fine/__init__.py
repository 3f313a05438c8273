"""Coarse-to-fine multi-label refinement with learned pseudo-labels and active querying."""
from ._backend import name as backend
from .active import (
    ActiveConfig,
    Oracle,
    QueryScores,
    run_active_loop,
    score_pseudo_change,
    score_random,
    score_uncertainty,
    select_queries,
)
from .data import (
    Dataset,
    LabelHierarchy,
    PartialLabelMatrix,
    WarmupSet,
    deduce_fine_observations,
    generate_synthetic,
    split_warmup,
)
from .errors import (
    ConfigError,
    DimensionError,
    HierarchyViolationError,
    InputError,
    LoadError,
    ParseError,
    RefineError,
    ShapeError,
    StorageError,
)
from .fileio import load_dataset, load_params, save_dataset, save_params
from .learners import (
    PseudoLabelMatrix,
    TrainConfig,
    assign_pseudo_labels,
    train_fully_supervised,
    train_leml,
    train_occ,
    train_pseudo,
)
from .metrics import ProgressionCurve, curve_auc, precision_at_k, recover_f1_loss
from .model import (
    Architecture,
    ModelParameters,
    Prediction,
    bce_loss,
    forward,
    grad_loss,
    init_params,
    logit_tangent,
    sgd_step,
)

__version__ = "0.1.0"
