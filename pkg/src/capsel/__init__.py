"""capsel: loss-aware centroid selection with caption-guided augmentation."""

from .augment import CeaConfig, attention_scores, augment, blend_prompt, overshoot_count
from .core import (
    CaptionEmbeddings,
    EmbeddingSet,
    LossProfile,
    OdsConfig,
    SelectionModel,
    ValidationError,
    cosine_similarity,
    make_rng,
    softmax,
)
from .fileio import FormatError, LengthError, read_embeddings, read_labels, write_embeddings, write_labels
from .harness import (
    LoopReport,
    RunConfig,
    b2a,
    baseline_diversity_only,
    baseline_topk,
    run,
)
from .probe import ProbeModel, SgdTrainer, TrainConfig, evaluate, load_probe, pool_losses, save_probe, train
from .selection import OptimizationError, assign, debias, ensemble_stats, optimize, select
from .synth import ConfigError, SynthData, SynthSpec, synth_dataset

__all__ = [
    "CaptionEmbeddings",
    "CeaConfig",
    "ConfigError",
    "EmbeddingSet",
    "FormatError",
    "LengthError",
    "LoopReport",
    "LossProfile",
    "OdsConfig",
    "OptimizationError",
    "ProbeModel",
    "RunConfig",
    "SelectionModel",
    "SgdTrainer",
    "SynthData",
    "SynthSpec",
    "TrainConfig",
    "ValidationError",
    "assign",
    "attention_scores",
    "augment",
    "b2a",
    "baseline_diversity_only",
    "baseline_topk",
    "blend_prompt",
    "cosine_similarity",
    "debias",
    "ensemble_stats",
    "evaluate",
    "load_probe",
    "make_rng",
    "optimize",
    "overshoot_count",
    "pool_losses",
    "read_embeddings",
    "read_labels",
    "run",
    "save_probe",
    "select",
    "softmax",
    "synth_dataset",
    "train",
    "write_embeddings",
    "write_labels",
]

__version__ = "0.1.0"
