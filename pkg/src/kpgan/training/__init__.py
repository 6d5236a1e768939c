"""Losses and the adversarial training loop."""
from .losses import critic_loss, generator_gan_loss, recon_loss, sparsity_l1, sym_loss
from .trainer import (
    METRIC_COLUMNS, CloudState, Trainer, prepare, sample_centers, train, write_metrics,
)

__all__ = [
    "CloudState", "METRIC_COLUMNS", "Trainer", "critic_loss", "generator_gan_loss", "prepare",
    "recon_loss", "sample_centers", "sparsity_l1", "sym_loss", "train", "write_metrics",
]
