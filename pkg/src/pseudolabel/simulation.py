"""Synthetic class-imbalanced scenes and filter-quality metrics.

The generator mimics the field situation that motivates adaptive
thresholds: a long-tailed class distribution where rare classes receive
systematically lower scores, plus confidently-scored false positives.
Running the same scenes through a static and an adaptive threshold arm
quantifies how far each keeps the pseudo-label/ground-truth ratio from 1.
"""

from __future__ import annotations

import csv
import io as _io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .matching import GroundTruth
from .pipeline import SCORE_FLOOR, PseudoLabel, RefinementPipeline, refine
from .scoring import Detection
from .geometry import iou, pairwise_iou
from .thresholds import ClassThresholds, GmmConfig

MODE_STATIC = "static"
MODE_ADAPTIVE = "adaptive"


@dataclass(frozen=True)
class SimConfig:
    """Scene generator knobs; every random draw flows from ``seed``.

    ``class_freq_ratio`` < 1 yields a geometric long tail. Emitted scores
    follow the true box IoU plus a per-class bias interpolated linearly
    over ``class_bias_range`` (rare classes get the more negative end);
    the localization score carries ``loc_bias_factor`` of that bias.
    False positives score around ``fp_class_score`` / ``fp_loc_score``
    before bias, which puts them well above a naive static threshold for
    frequent classes.
    """

    n_classes: int = 8
    class_freq_ratio: float = 0.6
    boxes_per_image_mean: float = 6.0
    image_size: float = 512.0
    box_size_range: tuple = (32.0, 128.0)
    box_noise_px: float = 3.0
    score_noise: float = 0.03
    class_bias_range: tuple = (0.02, -0.42)
    loc_bias_factor: float = 0.5
    fp_rate: float = 1.5
    fp_class_score: float = 0.68
    fp_loc_score: float = 0.60
    scenes_per_round: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if not 0.0 < self.class_freq_ratio <= 1.0:
            raise ValueError("class_freq_ratio must lie in (0, 1]")
        if self.box_noise_px < 0 or self.score_noise < 0 or self.fp_rate < 0:
            raise ValueError("noise and rate parameters must be nonnegative")
        if self.box_size_range[0] <= 0 or self.box_size_range[1] < self.box_size_range[0]:
            raise ValueError("box_size_range must be positive and ordered")
        if self.box_size_range[1] >= self.image_size:
            raise ValueError("boxes must fit inside the image")
        if self.scenes_per_round < 1:
            raise ValueError("scenes_per_round must be >= 1")

    @property
    def class_frequencies(self) -> np.ndarray:
        raw = self.class_freq_ratio ** np.arange(self.n_classes, dtype=np.float64)
        return raw / raw.sum()

    def class_bias(self, class_id: int) -> float:
        first, last = self.class_bias_range
        if self.n_classes == 1:
            return float(first)
        frac = class_id / (self.n_classes - 1)
        return float(first + (last - first) * frac)

    @property
    def rare_class_id(self) -> int:
        return int(np.argmin(self.class_frequencies))


@dataclass(frozen=True)
class SimScene:
    """Ground truth plus simulated teacher detections for one image.

    ``matches[i]`` is the ground-truth index detection i was generated
    from, or -1 for a false positive.
    """

    ground_truths: list[GroundTruth]
    detections: list[Detection]
    matches: list[int]


def _random_box(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    lo, hi = cfg.box_size_range
    w = rng.uniform(lo, hi)
    h = rng.uniform(lo, hi)
    x1 = rng.uniform(0.0, cfg.image_size - w)
    y1 = rng.uniform(0.0, cfg.image_size - h)
    return np.array([x1, y1, x1 + w, y1 + h])


def _emit_scores(cfg, rng, class_id: int, base_class: float, base_loc: float):
    bias = cfg.class_bias(class_id)
    c_class = float(
        np.clip(base_class + bias + rng.normal(0.0, cfg.score_noise), 0.01, 1.0)
    )
    c_loc = float(
        np.clip(
            base_loc + cfg.loc_bias_factor * bias + rng.normal(0.0, cfg.score_noise),
            0.0,
            1.0,
        )
    )
    scores = np.zeros(cfg.n_classes)
    scores[class_id] = c_class
    return scores, c_loc


def generate_scene(cfg: SimConfig, rng: np.random.Generator) -> SimScene:
    """One synthetic image: noisy detections of every GT box plus FPs."""
    freqs = cfg.class_frequencies
    n_boxes = max(1, int(rng.poisson(cfg.boxes_per_image_mean)))
    gts: list[GroundTruth] = []
    detections: list[Detection] = []
    matches: list[int] = []
    for gt_idx in range(n_boxes):
        class_id = int(rng.choice(cfg.n_classes, p=freqs))
        gt_box = _random_box(cfg, rng)
        gts.append(GroundTruth(box=gt_box, class_id=class_id))
        det_box = gt_box + rng.normal(0.0, cfg.box_noise_px, size=4)
        det_box[2] = max(det_box[2], det_box[0] + 1e-3)
        det_box[3] = max(det_box[3], det_box[1] + 1e-3)
        true_iou = iou(det_box, gt_box)
        scores, c_loc = _emit_scores(cfg, rng, class_id, true_iou, true_iou)
        detections.append(Detection(box=det_box, class_scores=scores, iou_score=c_loc))
        matches.append(gt_idx)
    for _ in range(int(rng.poisson(cfg.fp_rate))):
        class_id = int(rng.choice(cfg.n_classes, p=freqs))
        fp_box = _random_box(cfg, rng)
        scores, c_loc = _emit_scores(
            cfg, rng, class_id, cfg.fp_class_score, cfg.fp_loc_score
        )
        detections.append(Detection(box=fp_box, class_scores=scores, iou_score=c_loc))
        matches.append(-1)
    return SimScene(ground_truths=gts, detections=detections, matches=matches)


def pseudo_gt_ratio(
    labels_by_image: Mapping[object, Sequence[PseudoLabel]],
    gts_by_image: Mapping[object, Sequence[GroundTruth]],
) -> dict[int, float]:
    """Per-class (#pseudo labels / #ground truth); zero-GT classes absent."""
    label_counts: dict[int, int] = {}
    gt_counts: dict[int, int] = {}
    for labels in labels_by_image.values():
        for lab in labels:
            label_counts[lab.class_id] = label_counts.get(lab.class_id, 0) + 1
    for gts in gts_by_image.values():
        for gt in gts:
            gt_counts[gt.class_id] = gt_counts.get(gt.class_id, 0) + 1
    return {
        c: label_counts.get(c, 0) / n_gt for c, n_gt in sorted(gt_counts.items()) if n_gt > 0
    }


def pr_metrics(
    labels_by_image: Mapping[object, Sequence[PseudoLabel]],
    gts_by_image: Mapping[object, Sequence[GroundTruth]],
    iou_match_threshold: float = 0.5,
) -> dict[int, tuple[float, float]]:
    """Per-class (precision, recall) via greedy score-descending matching.

    Within each image and class, labels claim the unmatched ground truth
    of highest IoU when it reaches the threshold. Classes with zero GT
    everywhere are omitted; a class with GT but no labels reports
    precision 0.
    """
    tp: dict[int, int] = {}
    fp: dict[int, int] = {}
    n_gt: dict[int, int] = {}
    for image_id, gts in gts_by_image.items():
        labels = list(labels_by_image.get(image_id, ()))
        classes = {g.class_id for g in gts} | {l.class_id for l in labels}
        for c in classes:
            gt_boxes = [g.box for g in gts if g.class_id == c]
            n_gt[c] = n_gt.get(c, 0) + len(gt_boxes)
            cls_labels = sorted(
                (l for l in labels if l.class_id == c),
                key=lambda l: -l.confidence,
            )
            if not cls_labels:
                continue
            if not gt_boxes:
                fp[c] = fp.get(c, 0) + len(cls_labels)
                continue
            mat = pairwise_iou(
                np.stack([l.box for l in cls_labels]), np.stack(gt_boxes)
            )
            taken = np.zeros(len(gt_boxes), dtype=bool)
            for i in range(len(cls_labels)):
                best_j = -1
                best_iou = iou_match_threshold
                for j in range(len(gt_boxes)):
                    if not taken[j] and mat[i, j] >= best_iou:
                        best_iou = mat[i, j]
                        best_j = j
                if best_j >= 0:
                    taken[best_j] = True
                    tp[c] = tp.get(c, 0) + 1
                else:
                    fp[c] = fp.get(c, 0) + 1
    out: dict[int, tuple[float, float]] = {}
    for c in sorted(n_gt):
        if n_gt[c] == 0:
            continue
        n_tp = tp.get(c, 0)
        n_fp = fp.get(c, 0)
        precision = n_tp / (n_tp + n_fp) if (n_tp + n_fp) > 0 else 0.0
        recall = n_tp / n_gt[c]
        out[c] = (precision, recall)
    return out


@dataclass
class ComparisonReport:
    """Static-vs-adaptive filtering outcome on identical scenes."""

    rows: list[tuple[int, str, float, float, float]]  # class, mode, ratio, p, r
    max_abs_ratio_dev: dict[str, float]
    rare_class_id: int
    rare_class_recall: dict[str, float]
    thresholds_by_round: list[ClassThresholds]
    seed: int
    rounds: int
    n_scenes: int
    config_hash: str = ""

    def to_csv_text(self) -> str:
        buf = _io.StringIO()
        buf.write(f"# seed={self.seed} config_sha256={self.config_hash}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class_id", "mode", "ratio", "precision", "recall"])
        for class_id, mode, ratio, precision, recall in self.rows:
            writer.writerow([class_id, mode, repr(ratio), repr(precision), repr(recall)])
        return buf.getvalue()

    def to_summary_obj(self) -> dict:
        last = self.thresholds_by_round[-1] if self.thresholds_by_round else None
        return {
            "seed": self.seed,
            "config_sha256": self.config_hash,
            "rounds": self.rounds,
            "scenes": self.n_scenes,
            "rare_class_id": self.rare_class_id,
            "rare_class_recall": dict(self.rare_class_recall),
            "max_abs_ratio_dev": dict(self.max_abs_ratio_dev),
            "final_thresholds": last.to_json_obj() if last is not None else {},
        }


def compare_static_vs_adaptive(
    cfg: SimConfig,
    static_tau: float = 0.5,
    rounds: int = 2,
    gmm: GmmConfig = GmmConfig(),
    fallback_threshold: float = 0.5,
    score_floor: float = SCORE_FLOOR,
) -> ComparisonReport:
    """Run both threshold policies over identical simulated rounds.

    The adaptive arm refits per-class thresholds each round from its
    confidence windows; the static arm filters at ``static_tau`` for every
    class. Reports per-class ratio/precision/recall per mode plus the
    max-over-classes |ratio - 1|.
    """
    rng = np.random.default_rng(cfg.seed)
    adaptive = RefinementPipeline(
        gmm, fallback_threshold, score_floor, seed=cfg.seed
    )
    static_thr = ClassThresholds.uniform(static_tau, range(cfg.n_classes))
    gts_all: dict[int, list[GroundTruth]] = {}
    labels_static: dict[int, list[PseudoLabel]] = {}
    labels_adaptive: dict[int, list[PseudoLabel]] = {}
    thresholds_by_round: list[ClassThresholds] = []
    image_id = 0
    for round_index in range(rounds):
        dets: dict[int, list[Detection]] = {}
        for _ in range(cfg.scenes_per_round):
            scene = generate_scene(cfg, rng)
            dets[image_id] = scene.detections
            gts_all[image_id] = scene.ground_truths
            image_id += 1
        round_adaptive, thr, _ = adaptive.run_round(dets)
        round_static, _ = refine(dets, static_thr, round_index)
        labels_adaptive.update(round_adaptive)
        labels_static.update(round_static)
        thresholds_by_round.append(thr)

    rows = []
    max_dev = {}
    rare_recall = {}
    for mode, labels in ((MODE_STATIC, labels_static), (MODE_ADAPTIVE, labels_adaptive)):
        ratios = pseudo_gt_ratio(labels, gts_all)
        pr = pr_metrics(labels, gts_all)
        for c in sorted(ratios):
            precision, recall = pr.get(c, (0.0, 0.0))
            rows.append((c, mode, ratios[c], precision, recall))
        max_dev[mode] = max((abs(r - 1.0) for r in ratios.values()), default=0.0)
        rare_recall[mode] = pr.get(cfg.rare_class_id, (0.0, 0.0))[1]
    rows.sort(key=lambda r: (r[0], r[1]))
    return ComparisonReport(
        rows=rows,
        max_abs_ratio_dev=max_dev,
        rare_class_id=cfg.rare_class_id,
        rare_class_recall=rare_recall,
        thresholds_by_round=thresholds_by_round,
        seed=cfg.seed,
        rounds=rounds,
        n_scenes=image_id,
    )
