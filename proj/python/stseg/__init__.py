"""Spatio-temporal segmentation toolkit: synthetic video benchmark,
temporal-consistency metrics, and window inference bindings."""

from _stseg import (
    Segmenter,
    generate_sequence,
    iou,
    onecycle_lr,
    receptive_field,
    temporal_consistency,
    warp_mask,
)

__all__ = [
    "Segmenter",
    "generate_sequence",
    "iou",
    "onecycle_lr",
    "receptive_field",
    "temporal_consistency",
    "warp_mask",
]
