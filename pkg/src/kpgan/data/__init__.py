"""Synthetic shape corpus and dataset IO."""
from .dataset import (
    MANIFEST, SPLITS, Item, downsample, make_corpus, read_dataset, read_manifest, split_counts,
    write_dataset,
)
from .shapes import FAMILIES, GenerationError, ShapeSpec, expected_spacing, generate

__all__ = [
    "FAMILIES", "GenerationError", "Item", "MANIFEST", "SPLITS", "ShapeSpec", "downsample",
    "expected_spacing", "generate", "make_corpus", "read_dataset", "read_manifest",
    "split_counts", "write_dataset",
]
