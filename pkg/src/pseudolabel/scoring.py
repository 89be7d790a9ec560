"""Confidence fusion, IoU-aware classification loss, and stage losses.

All evaluators are pure scalar/array functions: they take scores or
pre-computed loss terms and combine them, never touching a network.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import check_boxes

LOG_EPS = 1e-7  # clamp applied to every log argument


@dataclass(frozen=True)
class VarifocalConfig:
    """Weight and focusing exponent for the negative branch."""

    alpha: float = 0.75
    gamma: float = 2.0

    def __post_init__(self):
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("alpha and gamma must be nonnegative")


@dataclass(frozen=True)
class HyperParams:
    """Loss-combination coefficients for the two training stages."""

    lambda_g: float = 1.0
    lambda_l: float = 1.0
    lambda_unsup: float = 1.0
    lambda_adv: float = 1.0
    lambda_contra: float = 0.05

    def __post_init__(self):
        for name in ("lambda_g", "lambda_l", "lambda_unsup", "lambda_adv", "lambda_contra"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class Detection:
    """One teacher prediction: box, per-class scores, localization score.

    ``predicted_class`` is always the argmax of ``class_scores`` (ties go
    to the lowest index).
    """

    box: np.ndarray
    class_scores: np.ndarray
    iou_score: float
    predicted_class: int = field(init=False)

    def __post_init__(self):
        box = check_boxes(np.asarray(self.box, dtype=np.float64))
        scores = np.asarray(self.class_scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size < 1:
            raise ValueError("class_scores must be a nonempty 1-D vector")
        if np.any(scores < 0.0) or np.any(scores > 1.0):
            raise ValueError("class scores must lie in [0, 1]")
        if not 0.0 <= self.iou_score <= 1.0:
            raise ValueError("iou_score must lie in [0, 1]")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "class_scores", scores)
        object.__setattr__(self, "predicted_class", int(np.argmax(scores)))

    @property
    def class_confidence(self) -> float:
        return float(self.class_scores[self.predicted_class])

    @property
    def combined_confidence(self) -> float:
        return combined_confidence(self.class_confidence, self.iou_score)


def _clamped_log(x):
    return np.log(np.clip(x, LOG_EPS, 1.0 - LOG_EPS))


def varifocal_loss(p, q, cfg: VarifocalConfig = VarifocalConfig(), reduction: str = "sum"):
    """IoU-aware classification loss.

    For targets q > 0 the predicted score p regresses toward q:
    ``-q (q log p + (1 - q) log(1 - p))``; for q = 0 the negative branch
    ``-alpha p**gamma log(1 - p)`` applies. p is clamped to
    [1e-7, 1 - 1e-7] before the logs.

    ``reduction``: "sum" (default), "mean" or "none".
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1) or np.any(q < 0) or np.any(q > 1):
        raise ValueError("p and q must lie in [0, 1]")
    pc = np.clip(p, LOG_EPS, 1.0 - LOG_EPS)
    pos = -q * (q * np.log(pc) + (1.0 - q) * np.log(1.0 - pc))
    neg = -cfg.alpha * pc**cfg.gamma * np.log(1.0 - pc)
    out = np.where(q > 0.0, pos, neg)
    if reduction == "none":
        return out
    if reduction == "mean":
        return float(np.mean(out))
    if reduction == "sum":
        return float(np.sum(out))
    raise ValueError(f"unknown reduction {reduction!r}")


def combined_confidence(c_class, c_loc):
    """Geometric mean of classification score and localization certainty."""
    c_class = np.asarray(c_class, dtype=np.float64)
    c_loc = np.asarray(c_loc, dtype=np.float64)
    if np.any(c_class < 0) or np.any(c_class > 1) or np.any(c_loc < 0) or np.any(c_loc > 1):
        raise ValueError("confidences must lie in [0, 1]")
    out = np.sqrt(c_class * c_loc)
    return float(out) if out.ndim == 0 else out


def reweight_coefficients(confidence):
    """Per-box loss weights from combined confidence C.

    Returns ``(1 + exp(C - 1), exp(C - 1))`` for the classification-side
    and regression-side terms; the two always differ by exactly 1.
    """
    c = np.asarray(confidence, dtype=np.float64)
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("confidence must lie in [0, 1]")
    cls = 1.0 + np.exp(c - 1.0)
    # re-derive the regression weight from the rounded sum so the pair
    # differs by exactly 1 in floating point (cls is in [1+1/e, 2], where
    # subtracting 1 is exact)
    reg = cls - 1.0
    if c.ndim == 0:
        return float(cls), float(reg)
    return cls, reg


def weighted_unsup_loss(per_box: Sequence[tuple]) -> float:
    """Confidence-reweighted unsupervised detection loss.

    ``per_box`` holds ``(l_cls, l_vfl, l_reg, confidence)`` tuples; each
    contributes ``(1 + e^(C-1)) (l_cls + l_vfl) + e^(C-1) l_reg``.
    """
    total = 0.0
    for l_cls, l_vfl, l_reg, conf in per_box:
        if l_cls < 0 or l_vfl < 0 or l_reg < 0:
            raise ValueError("loss terms must be nonnegative")
        cls_w, reg_w = reweight_coefficients(float(conf))
        total += cls_w * (l_cls + l_vfl) + reg_w * l_reg
    return float(total)


def discriminator_loss(domain: int, scores) -> float:
    """Binary cross-entropy of domain classifier outputs.

    ``domain`` is the true label (1 source, 0 target); ``scores`` are the
    classifier outputs D(f), eps-clamped before the logs.
    """
    if domain not in (0, 1):
        raise ValueError("domain label must be 0 or 1")
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise ValueError("scores must be nonempty")
    d = np.clip(scores, LOG_EPS, 1.0 - LOG_EPS)
    return float(-np.mean(domain * np.log(d) + (1 - domain) * np.log(1.0 - d)))


def adversarial_total(
    l_enc_g: float,
    l_dec_g: float,
    l_enc_l: float,
    l_dec_l: float,
    hp: HyperParams = HyperParams(),
) -> float:
    """Global/local token discriminator losses combined."""
    return float(hp.lambda_g * (l_enc_g + l_dec_g) + hp.lambda_l * (l_enc_l + l_dec_l))


class StageLosses(NamedTuple):
    student: float
    burn_up: float
    mutual: float


def stage_losses(
    sup: float,
    unsup: float,
    contra: float,
    adv: float,
    hp: HyperParams = HyperParams(),
) -> StageLosses:
    """Stage-level loss combinations.

    student = sup + lambda_unsup * unsup
    burn_up = sup - lambda_adv * adv
    mutual  = student + lambda_contra * contra - lambda_adv * adv

    The adversarial term enters with a minus sign, reflecting the gradient
    reversal in front of the discriminators.
    """
    for name, value in (("sup", sup), ("unsup", unsup), ("contra", contra), ("adv", adv)):
        if not np.isfinite(value):
            raise ValueError(f"{name} must be finite")
    student = sup + hp.lambda_unsup * unsup
    burn_up = sup - hp.lambda_adv * adv
    mutual = student + hp.lambda_contra * contra - hp.lambda_adv * adv
    return StageLosses(float(student), float(burn_up), float(mutual))
