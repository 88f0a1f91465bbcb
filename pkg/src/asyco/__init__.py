"""Asymmetric co-teaching with multi-view consensus for noisy-label
learning, at desk scale."""

__version__ = "0.1.0"

from .baselines import (  # noqa: F401
    ALL_VARIANTS,
    Gmm1d,
    ablation_variants,
    fit_gmm_em,
    small_loss_select,
    train_plain_ce,
)
from .consensus import (  # noqa: F401
    DecisionBatch,
    LabelViews,
    SampleDecision,
    SubsetTag,
    agreement_degree,
    classify_subset,
    decide_batch,
    one_hot_prediction,
    relabel_variable,
    selection_variable,
    top_k_prediction,
)
from .data import (  # noqa: F401
    NoisyDataset,
    inject_instance_dependent_noise,
    inject_symmetric_noise,
    make_blobs,
)
from .metrics import (  # noqa: F401
    ExperimentReport,
    ce_vs_bce_curves,
    relabel_hit_rate,
    selection_metrics,
    subset_loss_histogram,
    time_selection,
)
from .nn import (  # noqa: F401
    LossKind,
    MlpModel,
    SgdMomentum,
    loss_and_grad,
    sharpen,
    sigmoid,
    softmax,
)
from .trainer import (  # noqa: F401
    AsyCoConfig,
    EpochState,
    TrainingDivergedError,
    train_asyco,
    warmup,
)
