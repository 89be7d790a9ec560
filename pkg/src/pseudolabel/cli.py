"""Command-line entry points.

Exit codes: 0 success, 2 validation failure (bad schema/arguments),
3 runtime failure. Failures print a machine-readable JSON object on
stderr: ``{"error": {"type": ..., "message": ...}}``.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys

import numpy as np

from . import io as pio
from .config import RunConfig, SchemaError
from .contrastive import ContrastiveConfig, ObjectFeature, contrastive_weights, supcon_loss
from .pipeline import RefinementPipeline, refine
from .scoring import (
    VarifocalConfig,
    adversarial_total,
    combined_confidence,
    discriminator_loss,
    reweight_coefficients,
    stage_losses,
    varifocal_loss,
    weighted_unsup_loss,
)
from .simulation import compare_static_vs_adaptive, pr_metrics, pseudo_gt_ratio
from .thresholds import ClassThresholds

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as handle:
        return RunConfig.from_json(handle.read())


def _meta(cfg: RunConfig) -> dict:
    return {"seed": cfg.seed, "config_sha256": cfg.hash()}


def _cmd_fit_thresholds(args) -> int:
    cfg = _load_config(args.config)
    if args.print_config:
        print(cfg.to_json())
        return EXIT_OK
    detections = pio.load_predictions(args.preds)
    pipeline = RefinementPipeline(
        cfg.gmm, cfg.fallback_threshold, cfg.score_floor, seed=cfg.seed
    )
    pipeline.push_confidences(detections)
    thresholds = pipeline.fit_thresholds()
    payload = {"meta": _meta(cfg), "thresholds": thresholds.to_json_obj()}
    pio.atomic_write_text(args.out, pio.dump_json(payload))
    return EXIT_OK


def _load_thresholds_file(path: str, fallback: float) -> ClassThresholds:
    data = pio.read_json(path)
    if isinstance(data, dict) and "thresholds" in data:
        data = data["thresholds"]
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a threshold map")
    return ClassThresholds.from_json_obj(data, fallback=fallback)


def _cmd_refine(args) -> int:
    cfg = _load_config(args.config)
    if args.print_config:
        print(cfg.to_json())
        return EXIT_OK
    detections = pio.load_predictions(args.preds)
    thresholds = _load_thresholds_file(args.thresholds, cfg.fallback_threshold)
    labels, stats = refine(detections, thresholds)
    pio.write_pseudo_labels(args.out, labels, meta=_meta(cfg))
    if args.stats:
        pio.write_stats_jsonl(args.stats, [stats], meta=_meta(cfg))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    if args.print_config:
        print(cfg.to_json())
        return EXIT_OK
    report = compare_static_vs_adaptive(
        cfg.sim,
        static_tau=cfg.static_threshold,
        rounds=args.rounds,
        gmm=cfg.gmm,
        fallback_threshold=cfg.fallback_threshold,
        score_floor=cfg.score_floor,
    )
    report.config_hash = cfg.hash()
    pio.atomic_write_text(args.out, report.to_csv_text())
    summary_path = args.summary or (args.out + ".summary.json")
    pio.atomic_write_text(summary_path, pio.dump_json(report.to_summary_obj()))
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    if args.print_config:
        print(cfg.to_json())
        return EXIT_OK
    labels = pio.load_pseudo_labels(args.labels)
    gts = pio.load_ground_truth(args.gt)
    pr = pr_metrics(labels, gts, cfg.eval_iou_threshold)
    ratios = pseudo_gt_ratio(labels, gts)
    buf = _io.StringIO()
    buf.write(f"# seed={cfg.seed} config_sha256={cfg.hash()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class_id", "ratio", "precision", "recall"])
    for class_id in sorted(pr):
        precision, recall = pr[class_id]
        writer.writerow(
            [class_id, repr(ratios.get(class_id, 0.0)), repr(precision), repr(recall)]
        )
    pio.atomic_write_text(args.out, buf.getvalue())
    return EXIT_OK


def _eval_losses(batch: dict, cfg: RunConfig) -> dict:
    if not isinstance(batch, dict):
        raise SchemaError("losses input must be a JSON object")
    known = {
        "varifocal",
        "combined",
        "reweight",
        "unsup_boxes",
        "discriminators",
        "adversarial",
        "stages",
        "contrastive_weights",
        "supcon",
    }
    unknown = set(batch) - known
    if unknown:
        raise SchemaError(f"unknown losses sections: {sorted(unknown)}")
    out: dict = {}
    if "varifocal" in batch:
        section = batch["varifocal"]
        vf_cfg = VarifocalConfig(
            alpha=section.get("alpha", cfg.varifocal.alpha),
            gamma=section.get("gamma", cfg.varifocal.gamma),
        )
        values = [
            varifocal_loss(item["p"], item["q"], vf_cfg) for item in section["items"]
        ]
        out["varifocal"] = {"values": values, "sum": float(np.sum(values))}
    if "combined" in batch:
        out["combined"] = [
            combined_confidence(item["c_class"], item["c_loc"]) for item in batch["combined"]
        ]
    if "reweight" in batch:
        out["reweight"] = [list(reweight_coefficients(c)) for c in batch["reweight"]]
    if "unsup_boxes" in batch:
        per_box = [
            (b["l_cls"], b["l_vfl"], b["l_reg"], b["c"]) for b in batch["unsup_boxes"]
        ]
        out["unsup_loss"] = weighted_unsup_loss(per_box)
    if "discriminators" in batch:
        out["discriminators"] = [
            discriminator_loss(int(d["domain"]), d["scores"]) for d in batch["discriminators"]
        ]
    if "adversarial" in batch:
        adv = batch["adversarial"]
        out["adversarial_total"] = adversarial_total(
            adv["enc_global"], adv["dec_global"], adv["enc_local"], adv["dec_local"], cfg.hyper
        )
    if "stages" in batch:
        st = batch["stages"]
        losses = stage_losses(
            st["supervised"], st["unsupervised"], st["contrastive"], st["adversarial"], cfg.hyper
        )
        out["stages"] = {
            "student": losses.student,
            "burn_up": losses.burn_up,
            "mutual": losses.mutual,
        }
    if "contrastive_weights" in batch:
        section = batch["contrastive_weights"]
        weights = contrastive_weights(
            section["confidences"],
            section["thresholds"],
            section.get("exponent", cfg.contrastive.threshold_exponent),
        )
        out["contrastive_weights"] = [float(w) for w in weights]
    if "supcon" in batch:
        section = batch["supcon"]
        cc = ContrastiveConfig(
            temperature=section.get("temperature", cfg.contrastive.temperature),
            threshold_exponent=cfg.contrastive.threshold_exponent,
            denominator_mode=section.get(
                "denominator_mode", cfg.contrastive.denominator_mode
            ),
        )
        anchors = [
            ObjectFeature(np.asarray(a["feature"], dtype=np.float64), int(a["class_id"]))
            for a in section["anchors"]
        ]
        candidates = [
            ObjectFeature(np.asarray(c["feature"], dtype=np.float64), int(c["class_id"]))
            for c in section["candidates"]
        ]
        loss, skipped = supcon_loss(anchors, candidates, section["weights"], cc)
        out["supcon"] = {"loss": loss, "skipped": skipped}
    return out


def _cmd_losses(args) -> int:
    cfg = _load_config(args.config)
    if args.print_config:
        print(cfg.to_json())
        return EXIT_OK
    batch = pio.read_json(args.input)
    try:
        result = _eval_losses(batch, cfg)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"losses input malformed: {exc}") from exc
    text = pio.dump_json(result)
    if args.out:
        pio.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudolabel",
        description="Pseudo-label refinement: adaptive thresholds, confidence "
        "reweighting, and the static-vs-adaptive simulation harness.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run-config JSON file (defaults apply when omitted)")
    common.add_argument(
        "--print-config",
        action="store_true",
        help="print the effective configuration and exit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "fit-thresholds",
        parents=[common],
        help="fit per-class adaptive thresholds from a prediction file",
    )
    p.add_argument("--preds", required=True, help="COCO-style predictions with iou_score")
    p.add_argument("--out", required=True, help="output thresholds JSON")
    p.set_defaults(func=_cmd_fit_thresholds)

    p = sub.add_parser(
        "refine", parents=[common], help="filter predictions into weighted pseudo labels"
    )
    p.add_argument("--preds", required=True)
    p.add_argument("--thresholds", required=True, help="thresholds JSON from fit-thresholds")
    p.add_argument("--out", required=True, help="output pseudo-label JSON")
    p.add_argument("--stats", help="optional per-round stats JSONL")
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser(
        "simulate",
        parents=[common],
        help="run the static-vs-adaptive threshold comparison on synthetic scenes",
    )
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--out", required=True, help="output report CSV")
    p.add_argument("--summary", help="summary JSON path (default: <out>.summary.json)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser(
        "eval", parents=[common], help="precision/recall of pseudo labels against ground truth"
    )
    p.add_argument("--labels", required=True, help="pseudo-label JSON from refine")
    p.add_argument("--gt", required=True, help="ground-truth JSON array")
    p.add_argument("--out", required=True, help="output PR CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser(
        "losses",
        parents=[common],
        help="evaluate the scalar loss formulas for an encoded batch (debug oracle)",
    )
    p.add_argument("--input", required=True, help="batch JSON document")
    p.add_argument("--out", help="write results here instead of stdout")
    p.set_defaults(func=_cmd_losses)
    return parser


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message}}) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        _emit_error("validation", str(exc))
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        _emit_error("validation", str(exc))
        return EXIT_VALIDATION
    except ValueError as exc:
        _emit_error("validation", str(exc))
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - defensive
        _emit_error("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
