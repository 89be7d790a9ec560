"""Run configuration: one structured document holding every module default.

Parsing is strict: unknown keys are rejected so a typo never silently
falls back to a default. The top-level ``seed`` propagates into the gmm
and sim sections unless they set their own.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields, replace

from .contrastive import ContrastiveConfig
from .scoring import HyperParams, VarifocalConfig
from .simulation import SimConfig
from .thresholds import GmmConfig


class SchemaError(ValueError):
    """Input document violates the expected schema."""


_TUPLE_FIELDS = {"box_size_range", "class_bias_range"}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    fallback_threshold: float = 0.5
    static_threshold: float = 0.5
    score_floor: float = 0.05
    ema_momentum: float = 0.999
    eval_iou_threshold: float = 0.5
    varifocal: VarifocalConfig = VarifocalConfig()
    hyper: HyperParams = HyperParams()
    contrastive: ContrastiveConfig = ContrastiveConfig()
    gmm: GmmConfig = GmmConfig()
    sim: SimConfig = SimConfig()

    def __post_init__(self):
        if self.seed < 0:
            raise SchemaError("seed must be nonnegative")
        if not 0.0 <= self.fallback_threshold <= 1.0:
            raise SchemaError("fallback_threshold must lie in [0, 1]")
        if not 0.0 <= self.static_threshold <= 1.0:
            raise SchemaError("static_threshold must lie in [0, 1]")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise SchemaError("ema_momentum must lie in [0, 1]")

    def to_dict(self) -> dict:
        def _clean(obj):
            if isinstance(obj, dict):
                return {k: _clean(v) for k, v in obj.items()}
            if isinstance(obj, (list, tuple)):
                return [_clean(v) for v in obj]
            return obj

        return _clean(dataclasses.asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise SchemaError("config document must be a JSON object")
        sections = {
            "varifocal": VarifocalConfig,
            "hyper": HyperParams,
            "contrastive": ContrastiveConfig,
            "gmm": GmmConfig,
            "sim": SimConfig,
        }
        top_names = {f.name for f in fields(cls)}
        unknown = set(data) - top_names
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in sections:
                kwargs[key] = _parse_section(sections[key], value, key)
            else:
                kwargs[key] = value
        try:
            cfg = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise SchemaError(str(exc)) from exc
        # propagate the run seed into sections that did not pin their own
        gmm_data = data.get("gmm") or {}
        sim_data = data.get("sim") or {}
        if "seed" not in gmm_data:
            cfg = replace(cfg, gmm=replace(cfg.gmm, seed=cfg.seed))
        if "seed" not in sim_data:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=cfg.seed))
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid config JSON at line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data)


def _parse_section(section_cls, value, name: str):
    if not isinstance(value, dict):
        raise SchemaError(f"config section {name!r} must be an object")
    allowed = {f.name for f in fields(section_cls)}
    unknown = set(value) - allowed
    if unknown:
        raise SchemaError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    coerced = {
        k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
        for k, v in value.items()
    }
    try:
        return section_cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid value in section {name!r}: {exc}") from exc
