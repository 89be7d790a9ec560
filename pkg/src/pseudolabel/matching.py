"""Hungarian assignment of predictions to ground truth and IoU targets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._accel import kernels
from .geometry import BoxFormat, check_boxes, convert, giou, iou
from .scoring import Detection

Assignment = list[tuple[int, int]]  # (prediction_index, gt_index) pairs


@dataclass(frozen=True)
class GroundTruth:
    """Annotated object: corner-format box plus class id."""

    box: np.ndarray
    class_id: int

    def __post_init__(self):
        object.__setattr__(self, "box", check_boxes(np.asarray(self.box, dtype=np.float64)))
        if self.class_id < 0:
            raise ValueError("class_id must be nonnegative")


@dataclass(frozen=True)
class CostWeights:
    """Matching-cost mix: class score, center-form L1, GIoU terms."""

    w_class: float = 2.0
    w_l1: float = 5.0
    w_giou: float = 2.0

    def __post_init__(self):
        if min(self.w_class, self.w_l1, self.w_giou) < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.w_class == self.w_l1 == self.w_giou == 0:
            raise ValueError("at least one cost weight must be positive")


def match_cost(pred: Detection, gt: GroundTruth, weights: CostWeights = CostWeights()) -> float:
    """Assignment cost between one prediction and one ground-truth object.

    ``w_class * (1 - score[gt class]) + w_l1 * L1(center-form boxes)
    + w_giou * (1 - giou)``; lower is better.
    """
    if gt.class_id >= pred.class_scores.size:
        raise ValueError(
            f"prediction has no score for class {gt.class_id} "
            f"(only {pred.class_scores.size} classes)"
        )
    class_term = 1.0 - float(pred.class_scores[gt.class_id])
    pred_c = convert(pred.box, BoxFormat.XYXY, BoxFormat.CXCYWH)
    gt_c = convert(gt.box, BoxFormat.XYXY, BoxFormat.CXCYWH)
    l1_term = float(np.sum(np.abs(pred_c - gt_c)))
    giou_term = 1.0 - giou(pred.box, gt.box)
    return float(weights.w_class * class_term + weights.w_l1 * l1_term + weights.w_giou * giou_term)


def cost_matrix(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruth],
    weights: CostWeights = CostWeights(),
) -> np.ndarray:
    """(n_preds, n_gts) matrix of :func:`match_cost` values."""
    out = np.zeros((len(preds), len(gts)), dtype=np.float64)
    for i, pred in enumerate(preds):
        for j, gt in enumerate(gts):
            out[i, j] = match_cost(pred, gt, weights)
    return out


def hungarian(cost: np.ndarray) -> Assignment:
    """Minimum-total-cost one-to-one assignment of a rectangular matrix.

    Returns min(n, m) (row, col) pairs sorted by row. Rectangular inputs
    are padded to square with a uniform large sentinel; sentinel pairs are
    dropped from the output. Deterministic across runs and platforms.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return []
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost entries must be finite")
    n, m = cost.shape
    side = max(n, m)
    padded = cost
    if n != m:
        sentinel = float(cost.max()) + 1.0
        padded = np.full((side, side), sentinel, dtype=np.float64)
        padded[:n, :m] = cost
    row_to_col = kernels.solve_square_assignment(np.ascontiguousarray(padded))
    pairs = [
        (i, int(row_to_col[i]))
        for i in range(side)
        if i < n and row_to_col[i] < m
    ]
    pairs.sort()
    return pairs


def iou_targets(
    preds: Sequence[Detection],
    gts: Sequence[GroundTruth],
    assignment: Assignment,
) -> np.ndarray:
    """Per-class learning targets for the localization-certainty branch.

    Row i is all zeros except, when prediction i is matched, the IoU with
    its assigned ground truth placed at the predicted-class position.
    Unmatched predictions keep an all-zero row.
    """
    if not preds:
        return np.zeros((0, 0), dtype=np.float64)
    n_classes = preds[0].class_scores.size
    targets = np.zeros((len(preds), n_classes), dtype=np.float64)
    seen_preds: set[int] = set()
    seen_gts: set[int] = set()
    for pred_idx, gt_idx in assignment:
        if not (0 <= pred_idx < len(preds) and 0 <= gt_idx < len(gts)):
            raise ValueError(f"assignment pair ({pred_idx}, {gt_idx}) out of range")
        if pred_idx in seen_preds or gt_idx in seen_gts:
            raise ValueError("assignment reuses a prediction or ground-truth index")
        seen_preds.add(pred_idx)
        seen_gts.add(gt_idx)
        pred = preds[pred_idx]
        targets[pred_idx, pred.predicted_class] = iou(pred.box, gts[gt_idx].box)
    return targets
