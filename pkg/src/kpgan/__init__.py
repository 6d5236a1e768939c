"""Unsupervised 3D keypoint detection: rotation-invariant local features,
GAN-controlled saliency sparsity and salient feature distillation."""

__version__ = "0.1.0"
