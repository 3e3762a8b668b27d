"""Offline augmentation cascade, TS-Mixup and online missing-value injection."""

from .missing import missing_mask, missing_runs, nan_inject
from .mixup import simplex_path, ts_mixup
from .pipeline import (DEFAULT_CATEGORY_WEIGHTS, AugmentationConfig, augment_pipeline, change_score,
                       inclusion_probability, replay, run_stages, sample_categories)
from .transforms import (CATEGORY_ORDER, TRANSFORMS, CategoryKind, apply_category, apply_transform, conv1d_same,
                         random_conv_filter)

__all__ = [
    "AugmentationConfig", "CategoryKind", "CATEGORY_ORDER", "DEFAULT_CATEGORY_WEIGHTS", "TRANSFORMS",
    "apply_category", "apply_transform", "augment_pipeline", "change_score", "conv1d_same",
    "inclusion_probability", "missing_mask", "missing_runs", "nan_inject", "random_conv_filter", "replay",
    "run_stages", "sample_categories", "simplex_path", "ts_mixup",
]
