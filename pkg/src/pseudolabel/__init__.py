"""Detector-agnostic pseudo-label refinement toolkit.

Filters teacher detections with IoU-aware combined confidence, fits
per-class adaptive thresholds with a two-component Gaussian mixture,
reweights accepted labels, computes class-aware contrastive weights over
pooled object features, maintains a mean-teacher EMA state, and ships a
synthetic simulator comparing static against adaptive thresholds.
"""

from ._accel import USING_NUMBA
from .config import RunConfig, SchemaError
from .contrastive import (
    ContrastiveConfig,
    ObjectFeature,
    contrastive_weights,
    extract_object_features,
    features_to_csv,
    supcon_grad_arrays,
    supcon_loss,
    supcon_loss_arrays,
)
from .geometry import (
    BoxFormat,
    FeatureMap,
    box_area,
    convert,
    giou,
    iou,
    pairwise_giou,
    pairwise_iou,
    roi_align,
)
from .matching import (
    Assignment,
    CostWeights,
    GroundTruth,
    cost_matrix,
    hungarian,
    iou_targets,
    match_cost,
)
from .pipeline import (
    EmaState,
    PseudoLabel,
    RefinementPipeline,
    RoundStats,
    ema_update,
    refine,
)
from .scoring import (
    Detection,
    HyperParams,
    StageLosses,
    VarifocalConfig,
    adversarial_total,
    combined_confidence,
    discriminator_loss,
    reweight_coefficients,
    stage_losses,
    varifocal_loss,
    weighted_unsup_loss,
)
from .simulation import (
    ComparisonReport,
    SimConfig,
    SimScene,
    compare_static_vs_adaptive,
    generate_scene,
    pr_metrics,
    pseudo_gt_ratio,
)
from .thresholds import (
    ClassThresholds,
    FallbackNeeded,
    GmmConfig,
    GmmParams,
    ThresholdEntry,
    class_threshold,
    fit_all_thresholds,
    fit_gmm_1d,
    positive_component,
    responsibilities,
)

__version__ = "0.1.0"
