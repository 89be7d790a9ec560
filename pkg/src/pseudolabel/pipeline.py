"""Refinement rounds: filter teacher detections, track confidence windows,
refit class thresholds, and maintain the EMA teacher state."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .scoring import Detection, combined_confidence, reweight_coefficients
from .thresholds import ClassThresholds, GmmConfig, fit_all_thresholds

# raw detections below this combined confidence are noise and are kept out
# of the threshold-fitting windows
SCORE_FLOOR = 0.05


@dataclass(frozen=True)
class PseudoLabel:
    """Accepted detection with its loss-weight coefficients attached."""

    box: np.ndarray
    class_id: int
    confidence: float
    cls_weight: float
    reg_weight: float
    source_image_id: object = None

    def __post_init__(self):
        object.__setattr__(self, "box", np.asarray(self.box, dtype=np.float64))

    def key(self) -> tuple:
        """Order-independent identity for set comparisons in tests."""
        return (self.source_image_id, self.class_id, tuple(self.box.tolist()), self.confidence)


@dataclass(frozen=True)
class EmaState:
    """Teacher parameter vector updated as an EMA of the student."""

    teacher_params: np.ndarray
    momentum: float = 0.999
    step: int = 0

    def __post_init__(self):
        params = np.asarray(self.teacher_params, dtype=np.float64)
        if not np.all(np.isfinite(params)):
            raise ValueError("teacher params must be finite")
        if not 0.0 <= self.momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        object.__setattr__(self, "teacher_params", params)


def ema_update(state: EmaState, student_params) -> EmaState:
    """teacher' = m * teacher + (1 - m) * student, elementwise."""
    student = np.asarray(student_params, dtype=np.float64)
    if student.shape != state.teacher_params.shape:
        raise ValueError(
            f"student params shape {student.shape} != teacher {state.teacher_params.shape}"
        )
    m = state.momentum
    updated = m * state.teacher_params + (1.0 - m) * student
    return EmaState(teacher_params=updated, momentum=m, step=state.step + 1)


@dataclass
class RoundStats:
    """Observability for one refinement round."""

    round_index: int = 0
    raw_counts: dict[int, int] = field(default_factory=dict)
    accepted_counts: dict[int, int] = field(default_factory=dict)
    thresholds_used: dict[int, float] = field(default_factory=dict)
    threshold_sources: dict[int, str] = field(default_factory=dict)
    skips: dict[str, int] = field(default_factory=lambda: {"missing_threshold": 0})

    def acceptance_rates(self) -> dict[int, float]:
        return {
            c: (self.accepted_counts.get(c, 0) / n if n else 0.0)
            for c, n in self.raw_counts.items()
        }

    def to_json_obj(self) -> dict:
        return {
            "round": self.round_index,
            "raw": {str(c): n for c, n in sorted(self.raw_counts.items())},
            "accepted": {str(c): n for c, n in sorted(self.accepted_counts.items())},
            "thresholds": {str(c): t for c, t in sorted(self.thresholds_used.items())},
            "sources": {str(c): s for c, s in sorted(self.threshold_sources.items())},
            "acceptance_rates": {
                str(c): r for c, r in sorted(self.acceptance_rates().items())
            },
            "skips": dict(self.skips),
        }


def refine(
    detections_by_image: Mapping[object, Sequence[Detection]],
    thresholds: ClassThresholds,
    round_index: int = 0,
) -> tuple[dict[object, list[PseudoLabel]], RoundStats]:
    """Keep detections whose combined confidence clears their class threshold.

    A detection is accepted iff ``sqrt(max_class_score * iou_score)`` is
    >= the threshold of its predicted class (boundary included). Classes
    without a fitted entry use the fallback threshold and are counted in
    the stats. Output is independent of input ordering.
    """
    stats = RoundStats(round_index=round_index)
    labels: dict[object, list[PseudoLabel]] = {}
    for image_id in detections_by_image:
        accepted: list[PseudoLabel] = []
        for det in detections_by_image[image_id]:
            class_id = det.predicted_class
            conf = combined_confidence(det.class_confidence, det.iou_score)
            entry = thresholds.get(class_id)
            if class_id not in thresholds.entries:
                stats.skips["missing_threshold"] += 1
            stats.raw_counts[class_id] = stats.raw_counts.get(class_id, 0) + 1
            stats.thresholds_used[class_id] = entry.threshold
            stats.threshold_sources[class_id] = entry.source
            if conf >= entry.threshold:
                cls_w, reg_w = reweight_coefficients(conf)
                accepted.append(
                    PseudoLabel(
                        box=det.box,
                        class_id=class_id,
                        confidence=conf,
                        cls_weight=cls_w,
                        reg_weight=reg_w,
                        source_image_id=image_id,
                    )
                )
                stats.accepted_counts[class_id] = stats.accepted_counts.get(class_id, 0) + 1
        labels[image_id] = accepted
    return labels, stats


class RefinementPipeline:
    """Stateful round runner with per-class sliding confidence windows.

    Single-writer: one round executes at a time. Each round pushes the
    current detections' combined confidences into the windows, refits all
    thresholds, then filters, so thresholds always reflect the newest
    score distribution.
    """

    def __init__(
        self,
        gmm: GmmConfig = GmmConfig(),
        fallback_threshold: float = 0.5,
        score_floor: float = SCORE_FLOOR,
        seed: int = 0,
    ):
        if seed < 0:
            raise ValueError("seed must be nonnegative")
        self.gmm = gmm
        self.fallback_threshold = float(fallback_threshold)
        self.score_floor = float(score_floor)
        self.seed = int(seed)
        self.round_index = 0
        self._windows: dict[int, deque] = {}

    def window(self, class_id: int) -> deque:
        win = self._windows.get(class_id)
        if win is None:
            win = deque(maxlen=self.gmm.window)
            self._windows[class_id] = win
        return win

    def push_confidences(self, detections_by_image: Mapping[object, Sequence[Detection]]) -> None:
        for image_id in detections_by_image:
            for det in detections_by_image[image_id]:
                conf = combined_confidence(det.class_confidence, det.iou_score)
                if conf >= self.score_floor:
                    self.window(det.predicted_class).append(conf)

    def fit_thresholds(self) -> ClassThresholds:
        per_class = {
            c: np.asarray(win, dtype=np.float64)
            for c, win in self._windows.items()
            if len(win) > 0
        }
        round_seed = int(
            np.random.SeedSequence([self.seed, self.round_index]).generate_state(1)[0]
        )
        return fit_all_thresholds(
            per_class, self.fallback_threshold, self.gmm, seed=round_seed
        )

    def run_round(
        self, detections_by_image: Mapping[object, Sequence[Detection]]
    ) -> tuple[dict[object, list[PseudoLabel]], ClassThresholds, RoundStats]:
        self.push_confidences(detections_by_image)
        thresholds = self.fit_thresholds()
        labels, stats = refine(detections_by_image, thresholds, self.round_index)
        self.round_index += 1
        return labels, thresholds, stats
