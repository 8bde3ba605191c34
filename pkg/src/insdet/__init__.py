"""Instance-detection toolkit: synthesis, matching, and evaluation."""

__version__ = "0.1.0"

from .geometry import BoundingBox, Mask, SizeTag, iou, min_bounding_square, size_tag
from .matching import (
    FeatureVector,
    MatchResult,
    SimilarityMatrix,
    aggregate_similarity,
    build_similarity_matrix,
    cosine_similarity,
    rank_select,
    stable_matching,
    threshold_filter,
    to_detections,
)
from .evaluation import (
    Detection,
    EvalReport,
    GroundTruth,
    average_precision,
    average_recall,
    coco_ap,
    evaluate,
    match_at_iou,
    pr_curve,
)
from .synth import (
    ForegroundAsset,
    Placement,
    SynthConfig,
    SynthScene,
    blend,
    compose_scene,
    generate_dataset,
    sample_placements,
)

__all__ = [
    "BoundingBox",
    "Mask",
    "SizeTag",
    "iou",
    "min_bounding_square",
    "size_tag",
    "FeatureVector",
    "MatchResult",
    "SimilarityMatrix",
    "aggregate_similarity",
    "build_similarity_matrix",
    "cosine_similarity",
    "rank_select",
    "stable_matching",
    "threshold_filter",
    "to_detections",
    "Detection",
    "EvalReport",
    "GroundTruth",
    "average_precision",
    "average_recall",
    "coco_ap",
    "evaluate",
    "match_at_iou",
    "pr_curve",
    "ForegroundAsset",
    "Placement",
    "SynthConfig",
    "SynthScene",
    "blend",
    "compose_scene",
    "generate_dataset",
    "sample_placements",
]
