"""Reaction motion generation with state-space sequence models.

A conditional VAE that, given one character's 3D skeletal motion and the
reacting character's initial pose, generates the reactor's motion. Includes
the numerics engine, the SSM/attention blocks, losses, evaluation metrics,
a synthetic interaction dataset, a trainer, and benchmarking tools.
"""

from .errors import (
    ConfigError,
    DataFormatError,
    DomainError,
    NumericError,
    ShapeError,
    UnsupportedModeError,
    UsageError,
)
from .numerics import Tensor, gated_mlp, grad_check, linear, rmsnorm
from .ssm import (
    MambaBlockParams,
    SSMParams,
    attention_block,
    discretize,
    mamba_block,
    selective_scan,
    ssm_conv_apply,
    ssm_conv_kernel,
    ssm_scan_recurrent,
)
from .model import (
    LatentSequence,
    ModelConfig,
    MotionSequence,
    PosteriorStats,
    ReactionModel,
)
from .objectives import LossReport, LossWeights, kl_loss, reaction_loss, recon_loss, total_loss
from .metrics import (
    EvalReport,
    GaussianStats,
    diversity,
    evaluate_sets,
    feature_extract,
    fid,
    fit_gaussian,
    matrix_sqrt_psd,
    mpjpe,
    mpjve,
)
from .data import (
    InteractionPair,
    NormStats,
    load_motion,
    normalize,
    save_motion,
    split_windows,
    synth_dataset,
)
from .trainer import TrainConfig, adam_step, cosine_lr, load_checkpoint, save_checkpoint, train
from .bench import TimingReport, bench_inference, fit_loglog_exponent, scaling_curve

__all__ = [
    "ConfigError", "DataFormatError", "DomainError", "NumericError",
    "ShapeError", "UnsupportedModeError", "UsageError",
    "Tensor", "linear", "rmsnorm", "gated_mlp", "grad_check",
    "SSMParams", "MambaBlockParams", "discretize", "ssm_scan_recurrent",
    "ssm_conv_kernel", "ssm_conv_apply", "selective_scan", "mamba_block",
    "attention_block",
    "ModelConfig", "MotionSequence", "PosteriorStats", "LatentSequence",
    "ReactionModel",
    "LossWeights", "LossReport", "recon_loss", "kl_loss", "reaction_loss",
    "total_loss",
    "GaussianStats", "EvalReport", "mpjpe", "mpjve", "fit_gaussian",
    "matrix_sqrt_psd", "fid", "diversity", "feature_extract", "evaluate_sets",
    "InteractionPair", "NormStats", "synth_dataset", "normalize",
    "load_motion", "save_motion", "split_windows",
    "TrainConfig", "adam_step", "cosine_lr", "train", "save_checkpoint",
    "load_checkpoint",
    "TimingReport", "bench_inference", "scaling_curve", "fit_loglog_exponent",
]

__version__ = "0.1.0"
