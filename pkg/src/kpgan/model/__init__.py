"""Network, distillation, Beta prior and detection."""
from .detect import DetectionResult, detect, point_features, run_model
from .distill import distill, distill_soft
from .model import Model, config_path
from .network import (
    critic_score, decode, encode, encode_xyz, encoder_output_size, global_dim, heads,
    init_critic, init_generator,
)
from .prior import BetaPrior, sample_beta_prior

__all__ = [
    "BetaPrior", "DetectionResult", "Model", "config_path", "critic_score", "decode", "detect",
    "distill", "distill_soft", "encode", "encode_xyz", "encoder_output_size", "global_dim",
    "heads", "init_critic", "init_generator", "point_features", "run_model",
    "sample_beta_prior",
]
