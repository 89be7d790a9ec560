"""File ingestion and artifact serialization.

Predictions use the COCO detection-results layout (a JSON array of
``{image_id, category_id, bbox [x, y, w, h], score}`` records) extended
with a mandatory ``iou_score`` field (the localization-certainty output).
Unknown record fields survive a load/save round-trip. All writes are
atomic (temp file + rename) and emit sorted-key JSON with shortest
round-trip float formatting, so outputs are diffable.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Mapping, Sequence

import numpy as np

from .config import SchemaError
from .matching import GroundTruth
from .pipeline import PseudoLabel, RoundStats
from .scoring import Detection

_REQUIRED_PREDICTION_FIELDS = ("image_id", "category_id", "bbox", "score", "iou_score")
_REQUIRED_GT_FIELDS = ("image_id", "category_id", "bbox")


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def read_json(path: str):
    with open(path) as handle:
        text = handle.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc


def _check_bbox(bbox, where: str) -> list[float]:
    if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
        raise SchemaError(f"{where}: bbox must be a [x, y, w, h] list of 4 numbers")
    vals = [float(v) for v in bbox]
    if vals[2] < 0 or vals[3] < 0:
        raise SchemaError(f"{where}: bbox width and height must be nonnegative")
    return vals


def load_prediction_records(path: str) -> list[dict]:
    """Read and validate a prediction file, preserving unknown fields."""
    data = read_json(path)
    if not isinstance(data, list):
        raise SchemaError(f"{path}: prediction file must be a JSON array")
    for idx, record in enumerate(data):
        where = f"{path}: record {idx}"
        if not isinstance(record, dict):
            raise SchemaError(f"{where}: must be an object")
        for name in _REQUIRED_PREDICTION_FIELDS:
            if name not in record:
                if name == "iou_score":
                    raise SchemaError(
                        f"{where}: missing required field 'iou_score' "
                        "(localization certainty is mandatory for combined confidence)"
                    )
                raise SchemaError(f"{where}: missing required field {name!r}")
        _check_bbox(record["bbox"], where)
        for name in ("score", "iou_score"):
            value = float(record[name])
            if not 0.0 <= value <= 1.0:
                raise SchemaError(f"{where}: {name}={value} outside [0, 1]")
        if int(record["category_id"]) < 0:
            raise SchemaError(f"{where}: category_id must be nonnegative")
    return data


def write_prediction_records(path: str, records: Sequence[Mapping]) -> None:
    atomic_write_text(path, dump_json(list(records)))


def predictions_to_detections(
    records: Sequence[Mapping], n_classes: int | None = None
) -> dict[object, list[Detection]]:
    """Group records into per-image Detection lists.

    Boxes convert xywh -> corner. Ordering is stable by (image_id, input
    index). The class-score vector is sized by the largest category id
    seen unless ``n_classes`` pins it.
    """
    if n_classes is None:
        n_classes = max((int(r["category_id"]) for r in records), default=0) + 1
    out: dict[object, list[Detection]] = {}
    for record in records:
        x, y, w, h = (float(v) for v in record["bbox"])
        scores = np.zeros(n_classes)
        scores[int(record["category_id"])] = float(record["score"])
        det = Detection(
            box=np.array([x, y, x + w, y + h]),
            class_scores=scores,
            iou_score=float(record["iou_score"]),
        )
        out.setdefault(record["image_id"], []).append(det)
    return {k: out[k] for k in sorted(out, key=str)}


def load_predictions(path: str, n_classes: int | None = None) -> dict[object, list[Detection]]:
    return predictions_to_detections(load_prediction_records(path), n_classes)


def load_ground_truth(path: str) -> dict[object, list[GroundTruth]]:
    """Read COCO-style ground truth: {image_id, category_id, bbox [x,y,w,h]}."""
    data = read_json(path)
    if not isinstance(data, list):
        raise SchemaError(f"{path}: ground-truth file must be a JSON array")
    out: dict[object, list[GroundTruth]] = {}
    for idx, record in enumerate(data):
        where = f"{path}: record {idx}"
        if not isinstance(record, dict):
            raise SchemaError(f"{where}: must be an object")
        for name in _REQUIRED_GT_FIELDS:
            if name not in record:
                raise SchemaError(f"{where}: missing required field {name!r}")
        x, y, w, h = _check_bbox(record["bbox"], where)
        out.setdefault(record["image_id"], []).append(
            GroundTruth(box=np.array([x, y, x + w, y + h]), class_id=int(record["category_id"]))
        )
    return {k: out[k] for k in sorted(out, key=str)}


def pseudo_labels_to_obj(
    labels_by_image: Mapping[object, Sequence[PseudoLabel]], meta: Mapping | None = None
) -> dict:
    images = []
    for image_id in sorted(labels_by_image, key=str):
        images.append(
            {
                "image_id": image_id,
                "labels": [
                    {
                        "bbox": [float(v) for v in lab.box],
                        "class_id": lab.class_id,
                        "C": lab.confidence,
                        "cls_weight": lab.cls_weight,
                        "reg_weight": lab.reg_weight,
                    }
                    for lab in labels_by_image[image_id]
                ],
            }
        )
    return {"meta": dict(meta or {}), "images": images}


def write_pseudo_labels(
    path: str,
    labels_by_image: Mapping[object, Sequence[PseudoLabel]],
    meta: Mapping | None = None,
) -> None:
    atomic_write_text(path, dump_json(pseudo_labels_to_obj(labels_by_image, meta)))


def load_pseudo_labels(path: str) -> dict[object, list[PseudoLabel]]:
    data = read_json(path)
    if not isinstance(data, dict) or "images" not in data:
        raise SchemaError(f"{path}: expected an object with an 'images' array")
    out: dict[object, list[PseudoLabel]] = {}
    for image in data["images"]:
        labels = [
            PseudoLabel(
                box=np.asarray(lab["bbox"], dtype=np.float64),
                class_id=int(lab["class_id"]),
                confidence=float(lab["C"]),
                cls_weight=float(lab["cls_weight"]),
                reg_weight=float(lab["reg_weight"]),
                source_image_id=image["image_id"],
            )
            for lab in image["labels"]
        ]
        out[image["image_id"]] = labels
    return out


def write_stats_jsonl(
    path: str, stats: Sequence[RoundStats], meta: Mapping | None = None
) -> None:
    records = []
    for s in stats:
        record = s.to_json_obj()
        if meta:
            record.update(meta)
        records.append(json.dumps(record, sort_keys=True))
    atomic_write_text(path, "\n".join(records) + ("\n" if records else ""))
