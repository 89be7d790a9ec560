"""Class-aware weighted contrastive loss over object features.

Anchors come from the weak-augmentation (teacher) view, candidates from
the strong-augmentation (student) view. Positives share the anchor's
class; the denominator ranges over different-class candidates in the
``as_written`` mode or over all candidates in ``standard`` mode.
"""

from __future__ import annotations

import io as _io
import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import FeatureMap, roi_align

ROLE_ANCHOR = "anchor"
ROLE_CANDIDATE = "candidate"

DENOM_AS_WRITTEN = "as_written"
DENOM_STANDARD = "standard"


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.07
    threshold_exponent: float = 0.5
    denominator_mode: str = DENOM_AS_WRITTEN

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.threshold_exponent <= 1.0:
            raise ValueError("threshold_exponent must lie in (0, 1]")
        if self.denominator_mode not in (DENOM_AS_WRITTEN, DENOM_STANDARD):
            raise ValueError(f"unknown denominator_mode {self.denominator_mode!r}")


@dataclass(frozen=True)
class ObjectFeature:
    """Unit-normalized feature of one pooled object."""

    feature: np.ndarray
    class_id: int
    confidence: float = 1.0
    role: str = ROLE_ANCHOR

    def __post_init__(self):
        feat = np.asarray(self.feature, dtype=np.float64).ravel()
        norm = float(np.linalg.norm(feat))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"feature must be unit-normalized (norm {norm:.3g})")
        object.__setattr__(self, "feature", feat)


def contrastive_weights(confidences, class_taus, exponent: float = 0.5) -> np.ndarray:
    """Per-object loss weights from confidence and class threshold.

    Raw weight ``(1 + e^(C - 1)) * (1 - tau ** exponent)`` favors
    confident objects of hard (low-threshold) classes; the vector is
    normalized to sum to 1.
    """
    c = np.asarray(confidences, dtype=np.float64).ravel()
    tau = np.asarray(class_taus, dtype=np.float64).ravel()
    if c.size == 0 or c.shape != tau.shape:
        raise ValueError("confidences and class_taus must be nonempty and aligned")
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("confidences must lie in [0, 1]")
    if np.any(tau < 0) or np.any(tau > 1):
        raise ValueError("class thresholds must lie in [0, 1]")
    if not 0.0 < exponent <= 1.0:
        raise ValueError("exponent must lie in (0, 1]")
    raw = (1.0 + np.exp(c - 1.0)) * (1.0 - tau**exponent)
    total = float(raw.sum())
    if total <= 0.0:
        raise ValueError("all raw weights are zero (every class threshold is 1)")
    return raw / total


def _stack(objs: Sequence[ObjectFeature]) -> tuple[np.ndarray, np.ndarray]:
    feats = np.stack([o.feature for o in objs])
    classes = np.array([o.class_id for o in objs], dtype=np.int64)
    return feats, classes


def _masks(anchor_class: int, cand_classes: np.ndarray, mode: str):
    pos = cand_classes == anchor_class
    if mode == DENOM_AS_WRITTEN:
        denom = ~pos
    else:
        denom = np.ones_like(pos)
    return pos, denom


def _logsumexp(v: np.ndarray) -> float:
    top = float(v.max())
    return top + float(np.log(np.exp(v - top).sum()))


def supcon_loss_arrays(
    anchor_feats: np.ndarray,
    anchor_classes,
    cand_feats: np.ndarray,
    cand_classes,
    weights,
    cfg: ContrastiveConfig = ContrastiveConfig(),
) -> tuple[float, int]:
    """Array-level contrastive loss (features taken as free vectors)."""
    anchor_feats = np.atleast_2d(np.asarray(anchor_feats, dtype=np.float64))
    cand_feats = np.atleast_2d(np.asarray(cand_feats, dtype=np.float64))
    anchor_classes = np.asarray(anchor_classes, dtype=np.int64).ravel()
    cand_classes = np.asarray(cand_classes, dtype=np.int64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if anchor_feats.shape[0] == 0 or cand_feats.shape[0] == 0:
        raise ValueError("anchors and candidates must be nonempty")
    if weights.size != anchor_feats.shape[0]:
        raise ValueError("weights must align with anchors")
    if anchor_feats.shape[1] != cand_feats.shape[1]:
        raise ValueError("anchor and candidate features must share a dimension")
    sims = anchor_feats @ cand_feats.T / cfg.temperature
    total = 0.0
    skipped = 0
    for i in range(anchor_feats.shape[0]):
        pos, denom = _masks(int(anchor_classes[i]), cand_classes, cfg.denominator_mode)
        if not pos.any() or not denom.any():
            skipped += 1
            continue
        log_num = _logsumexp(sims[i, pos])
        log_den = _logsumexp(sims[i, denom])
        total += -(np.log(weights[i]) - np.log(pos.sum()) + log_num - log_den)
    if skipped == anchor_feats.shape[0]:
        raise ValueError("no anchor has a valid positive/denominator set")
    return float(total), skipped


def supcon_loss(
    anchors: Sequence[ObjectFeature],
    candidates: Sequence[ObjectFeature],
    weights,
    cfg: ContrastiveConfig = ContrastiveConfig(),
) -> tuple[float, int]:
    """Weighted supervised contrastive loss.

    Per anchor i with positives P(i) and denominator set A(i):
    ``-log( (w_i / |P(i)|) * sum_p exp(s_ip) / sum_a exp(s_ia) )`` with
    ``s_ij = z_i . z_j / temperature``. Anchors lacking positives (or, in
    as_written mode, lacking negatives) are skipped and counted.

    Returns ``(loss, n_skipped)``; raises when every anchor is skipped.
    """
    if len(anchors) == 0 or len(candidates) == 0:
        raise ValueError("anchors and candidates must be nonempty")
    a_feats, a_classes = _stack(anchors)
    c_feats, c_classes = _stack(candidates)
    return supcon_loss_arrays(a_feats, a_classes, c_feats, c_classes, weights, cfg)


def supcon_grad_arrays(
    anchor_feats: np.ndarray,
    anchor_classes,
    cand_feats: np.ndarray,
    cand_classes,
    weights,
    cfg: ContrastiveConfig = ContrastiveConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of :func:`supcon_loss_arrays` w.r.t. every feature.

    Returns (grad_anchors, grad_candidates). Skipped anchors contribute
    zero gradient, mirroring the loss.
    """
    anchor_feats = np.atleast_2d(np.asarray(anchor_feats, dtype=np.float64))
    cand_feats = np.atleast_2d(np.asarray(cand_feats, dtype=np.float64))
    anchor_classes = np.asarray(anchor_classes, dtype=np.int64).ravel()
    cand_classes = np.asarray(cand_classes, dtype=np.int64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    sims = anchor_feats @ cand_feats.T / cfg.temperature
    grad_a = np.zeros_like(anchor_feats)
    grad_c = np.zeros_like(cand_feats)
    n_cand = cand_feats.shape[0]
    for i in range(anchor_feats.shape[0]):
        pos, denom = _masks(int(anchor_classes[i]), cand_classes, cfg.denominator_mode)
        if not pos.any() or not denom.any():
            continue
        soft_pos = np.zeros(n_cand)
        e_pos = np.exp(sims[i, pos] - sims[i, pos].max())
        soft_pos[pos] = e_pos / e_pos.sum()
        soft_den = np.zeros(n_cand)
        e_den = np.exp(sims[i, denom] - sims[i, denom].max())
        soft_den[denom] = e_den / e_den.sum()
        coeff = (soft_den - soft_pos) / cfg.temperature
        grad_a[i] += coeff @ cand_feats
        grad_c += coeff[:, None] * anchor_feats[i]
    return grad_a, grad_c


def extract_object_features(
    fmap: FeatureMap,
    boxes: np.ndarray,
    class_ids: Sequence[int],
    confidences: Sequence[float] | None = None,
    pool_size: int = 7,
    samples_per_bin: int = 2,
    role: str = ROLE_ANCHOR,
) -> tuple[list[ObjectFeature], int]:
    """Pool, flatten and L2-normalize one feature vector per box.

    Boxes that collapse to zero area on the map, or whose pooled vector
    has zero norm, are skipped and counted rather than raised: small
    batches routinely contain a few unusable regions.
    """
    boxes = np.atleast_2d(np.asarray(boxes, dtype=np.float64))
    class_ids = list(class_ids)
    if len(class_ids) != boxes.shape[0]:
        raise ValueError("class_ids must align with boxes")
    if confidences is None:
        confidences = [1.0] * boxes.shape[0]
    confidences = list(confidences)
    if len(confidences) != boxes.shape[0]:
        raise ValueError("confidences must align with boxes")
    features: list[ObjectFeature] = []
    skipped = 0
    for i in range(boxes.shape[0]):
        try:
            vec = roi_align(fmap, boxes[i], pool_size, pool_size, samples_per_bin)
        except ValueError:
            skipped += 1
            continue
        norm = float(np.linalg.norm(vec))
        if norm <= 0.0:
            skipped += 1
            continue
        features.append(
            ObjectFeature(
                feature=vec / norm,
                class_id=int(class_ids[i]),
                confidence=float(confidences[i]),
                role=role,
            )
        )
    return features, skipped


def features_to_csv(features: Sequence[ObjectFeature]) -> str:
    """Dump features for offline inspection.

    Columns: object_id, class_id, confidence, then one column per
    feature component.
    """
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    dim = features[0].feature.size if features else 0
    writer.writerow(
        ["object_id", "class_id", "confidence"] + [f"f{j}" for j in range(dim)]
    )
    for idx, obj in enumerate(features):
        writer.writerow(
            [idx, obj.class_id, repr(obj.confidence)] + [repr(float(v)) for v in obj.feature]
        )
    return buf.getvalue()
