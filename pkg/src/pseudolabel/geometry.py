"""Bounding-box geometry and feature pooling.

Boxes are plain float arrays. Corner format ``[x1, y1, x2, y2]`` is the
canonical in-memory representation; :func:`convert` moves between corner,
center and normalized variants.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._accel import kernels


class BoxFormat(str, Enum):
    XYXY = "xyxy"
    CXCYWH = "cxcywh"
    XYXY_NORM = "xyxy_norm"
    CXCYWH_NORM = "cxcywh_norm"

    @property
    def normalized(self) -> bool:
        return self.value.endswith("_norm")

    @property
    def centered(self) -> bool:
        return self.value.startswith("cxcywh")


@dataclass(frozen=True)
class FeatureMap:
    """Dense (C, H, W) value grid with a pixel stride per cell."""

    values: np.ndarray
    stride: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError("feature map must have shape (C, H, W) with C,H,W >= 1")
        if self.stride <= 0:
            raise ValueError("stride must be positive")
        object.__setattr__(self, "values", values)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


def check_boxes(boxes: np.ndarray) -> np.ndarray:
    """Validate corner-format boxes: finite, x1 <= x2, y1 <= y2."""
    boxes = np.asarray(boxes, dtype=np.float64)
    if boxes.shape[-1] != 4:
        raise ValueError("boxes must have a trailing dimension of 4")
    if not np.all(np.isfinite(boxes)):
        raise ValueError("boxes must be finite")
    flat = boxes.reshape(-1, 4)
    if np.any(flat[:, 2] < flat[:, 0]) or np.any(flat[:, 3] < flat[:, 1]):
        raise ValueError("boxes must satisfy x1 <= x2 and y1 <= y2")
    return boxes


def box_area(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    return np.maximum(boxes[..., 2] - boxes[..., 0], 0.0) * np.maximum(
        boxes[..., 3] - boxes[..., 1], 0.0
    )


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two corner-format boxes.

    Degenerate pairs with zero union return 0 so downstream confidence
    fusion never sees a NaN.
    """
    a = check_boxes(a)
    b = check_boxes(b)
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    union = box_area(a) + box_area(b) - inter
    return float(inter / union) if union > 0.0 else 0.0


def giou(a: np.ndarray, b: np.ndarray) -> float:
    """Generalized IoU: iou - (enclosing_area - union) / enclosing_area."""
    a = check_boxes(a)
    b = check_boxes(b)
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    inter = iw * ih if iw > 0.0 and ih > 0.0 else 0.0
    union = float(box_area(a) + box_area(b) - inter)
    iou_val = inter / union if union > 0.0 else 0.0
    enclose = (max(a[2], b[2]) - min(a[0], b[0])) * (max(a[3], b[3]) - min(a[1], b[1]))
    if enclose <= 0.0:
        return float(iou_val)
    return float(iou_val - (enclose - union) / enclose)


def pairwise_iou(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """(N, M) IoU matrix between two corner-format box sets."""
    boxes_a = np.ascontiguousarray(check_boxes(np.atleast_2d(boxes_a)))
    boxes_b = np.ascontiguousarray(check_boxes(np.atleast_2d(boxes_b)))
    return kernels.pairwise_iou(boxes_a, boxes_b)


def pairwise_giou(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """(N, M) GIoU matrix between two corner-format box sets."""
    boxes_a = np.ascontiguousarray(check_boxes(np.atleast_2d(boxes_a)))
    boxes_b = np.ascontiguousarray(check_boxes(np.atleast_2d(boxes_b)))
    return kernels.pairwise_giou(boxes_a, boxes_b)


def _image_wh(image_size) -> tuple[float, float]:
    if np.isscalar(image_size):
        w = h = float(image_size)
    else:
        w, h = (float(image_size[0]), float(image_size[1]))
    if w <= 0 or h <= 0:
        raise ValueError("image_size must be positive")
    return w, h


def convert(
    boxes: np.ndarray,
    src: BoxFormat,
    dst: BoxFormat,
    image_size=None,
) -> np.ndarray:
    """Convert boxes between formats; exact algebra, round-trips to 1e-9.

    ``image_size`` (scalar or (width, height)) is required whenever a
    normalized format is involved.
    """
    src = BoxFormat(src)
    dst = BoxFormat(dst)
    boxes = np.asarray(boxes, dtype=np.float64).copy()
    if boxes.shape[-1] != 4:
        raise ValueError("boxes must have a trailing dimension of 4")
    if src.normalized or dst.normalized:
        if image_size is None:
            raise ValueError("image_size is required for normalized formats")
        w, h = _image_wh(image_size)
        scale = np.array([w, h, w, h])
    if src.normalized:
        boxes = boxes * scale
    if src.centered:
        cx, cy, bw, bh = (boxes[..., 0], boxes[..., 1], boxes[..., 2], boxes[..., 3])
        boxes = np.stack(
            [cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0], axis=-1
        )
    # boxes now in corner pixels
    if dst.centered:
        x1, y1, x2, y2 = (boxes[..., 0], boxes[..., 1], boxes[..., 2], boxes[..., 3])
        boxes = np.stack(
            [(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1], axis=-1
        )
    if dst.normalized:
        boxes = boxes / scale
    return boxes


def roi_align(
    fmap: FeatureMap,
    box: np.ndarray,
    out_h: int,
    out_w: int,
    samples_per_bin: int = 2,
) -> np.ndarray:
    """Average-pooled bilinear sampling of ``box`` over a feature grid.

    The box (pixel corner coordinates) is clamped to the map extent before
    sampling; a box that collapses to zero area after clamping is unusable
    and raises. Returns a flat vector of length C * out_h * out_w.

    Cell (i, j) of the map is anchored at pixel center
    ((j + 0.5) * stride, (i + 0.5) * stride); each output bin averages
    ``samples_per_bin ** 2`` bilinear reads at fixed interior offsets, so
    the result is deterministic and linear in the map values.
    """
    if out_h < 1 or out_w < 1 or samples_per_bin < 1:
        raise ValueError("out_h, out_w and samples_per_bin must be >= 1")
    box = check_boxes(box)
    stride = fmap.stride
    extent_w = fmap.width * stride
    extent_h = fmap.height * stride
    x1 = min(max(float(box[0]), 0.0), extent_w)
    y1 = min(max(float(box[1]), 0.0), extent_h)
    x2 = min(max(float(box[2]), 0.0), extent_w)
    y2 = min(max(float(box[3]), 0.0), extent_h)
    if x2 - x1 <= 0.0 or y2 - y1 <= 0.0:
        raise ValueError("box has zero area after clamping to the feature map")
    # pixel -> grid coordinates (cell centers at integer grid positions)
    gx1 = x1 / stride - 0.5
    gy1 = y1 / stride - 0.5
    gx2 = x2 / stride - 0.5
    gy2 = y2 / stride - 0.5
    pooled = kernels.roi_align_box(
        np.ascontiguousarray(fmap.values),
        gy1,
        gx1,
        gy2,
        gx2,
        int(out_h),
        int(out_w),
        int(samples_per_bin),
    )
    return pooled.ravel()
