"""Cross-domain sparse feature selection.

A shared trainable feature mask feeds one variational autoencoder per domain
and a shared latent-space classifier; the four-part weighted objective
(reconstruction, KL, classification, l1 sparsity) prunes the mask down to the
features that discriminate the classes across domains. A sweep harness repeats
training over data subsamples and weight initializations, and post-processing
turns the mask weights into frequency-ranked feature reports.
"""

from .data import (
    Batch,
    BatchPair,
    ExpressionDataset,
    PairedDomainData,
    SyntheticSpec,
    align_domains,
    generate_synthetic,
    load_dataset,
    sample_batch_pair,
    save_synthetic,
    subsample,
    zscore_per_domain,
)
from .network import MaskedDualVAE, init_model, load_checkpoint, save_checkpoint
from .objective import LossBreakdown, LossWeights, composite_loss, gradients
from .postprocess import (
    FeatureReport,
    OverlapReport,
    build_feature_report,
    elbow_threshold,
    frequency_rank,
    latent_pca,
    overlap_groups,
    per_run_selection,
)
from .selector import CrossDomainMaskSelector
from .sweep import (
    SweepConfig,
    SweepResult,
    load_sweep,
    resume_sweep,
    run_single_domain,
    run_sweep,
)
from .training import NonFiniteLossError, RunRecord, TrainConfig, evaluate, train_one

__version__ = "0.1.0"

__all__ = [
    "Batch",
    "BatchPair",
    "ExpressionDataset",
    "PairedDomainData",
    "SyntheticSpec",
    "align_domains",
    "generate_synthetic",
    "load_dataset",
    "sample_batch_pair",
    "save_synthetic",
    "subsample",
    "zscore_per_domain",
    "MaskedDualVAE",
    "init_model",
    "load_checkpoint",
    "save_checkpoint",
    "LossBreakdown",
    "LossWeights",
    "composite_loss",
    "gradients",
    "FeatureReport",
    "OverlapReport",
    "build_feature_report",
    "elbow_threshold",
    "frequency_rank",
    "latent_pca",
    "overlap_groups",
    "per_run_selection",
    "CrossDomainMaskSelector",
    "SweepConfig",
    "SweepResult",
    "load_sweep",
    "resume_sweep",
    "run_single_domain",
    "run_sweep",
    "NonFiniteLossError",
    "RunRecord",
    "TrainConfig",
    "evaluate",
    "train_one",
]
