"""Experiment config files: one YAML document per experiment, loaded into
the typed config records. Unknown or malformed fields fail with a message
naming the field; the fully resolved config is echoed next to the outputs
so no default stays hidden.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

import yaml

from .datagen import PartitionSpec, SyntheticTaskSpec
from .engine import EngineConfig
from .experiment import PRESETS, ExperimentConfig, apply_preset
from .model import LayerMode, LayerPlan, ModelSpec, TrainerConfig
from .pacing import AugEParams, ControllerPacing, FixedCountPacing, PacingConfig
from .planner import CostModel, PlanSearchConfig
from .selector import SelectorConfig


class ConfigError(ValueError):
    pass


_PLAN_CHARS = {"z": LayerMode.FROZEN, "b": LayerMode.BIAS_ONLY, "F": LayerMode.FULL}


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    allowed = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown field (allowed: {sorted(allowed)})")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_plan(value, path: str) -> LayerPlan | None:
    if value is None:
        return None
    if not isinstance(value, str) or not value or set(value) - set(_PLAN_CHARS):
        raise ConfigError(f"{path}: plan must be a string of z/b/F characters")
    return LayerPlan(tuple(_PLAN_CHARS[c] for c in value))


def _parse_pacing(value, path: str):
    if value is None:
        return None
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping with a 'mode' key")
    data = dict(value)
    mode = data.pop("mode", "controller")
    if mode == "none":
        if data:
            raise ConfigError(f"{path}: mode 'none' takes no other fields")
        return None
    if mode == "static":
        return _build(PacingConfig, data, path)
    if mode == "fixed":
        return _build(FixedCountPacing, data, path)
    if mode == "controller":
        candidates = data.pop("candidates", None)
        cfg = _build(ControllerPacing, data, path)
        if candidates is not None:
            try:
                parsed = tuple(PacingConfig(f=int(c[0]), n=int(c[1]), k=float(c[2])) for c in candidates)
            except (TypeError, ValueError, IndexError) as exc:
                raise ConfigError(f"{path}.candidates: each entry must be [f, n, k] ({exc})")
            cfg = dataclasses.replace(cfg, candidates=parsed)
        return cfg
    raise ConfigError(f"{path}.mode: unknown mode '{mode}'")


def _parse_engine(data: dict, path: str) -> EngineConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    data = dict(data)
    sub: dict[str, Any] = {}
    if "pacing" in data:
        sub["pacing"] = _parse_pacing(data.pop("pacing"), f"{path}.pacing")
    if "plan" in data:
        sub["plan"] = _parse_plan(data.pop("plan"), f"{path}.plan")
    for key, cls in (
        ("selector", SelectorConfig),
        ("cost_model", CostModel),
        ("trainer", TrainerConfig),
        ("model", ModelSpec),
        ("aug_e_params", AugEParams),
    ):
        if key in data:
            raw = data.pop(key)
            sub[key] = None if raw is None else _build(cls, raw, f"{path}.{key}")
    allowed = {f.name for f in dataclasses.fields(EngineConfig)}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown field")
    try:
        return EngineConfig(**data, **sub)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path: str | Path, seed: int | None = None, output_dir: str | None = None):
    """Load one experiment config. Returns (ExperimentConfig, data_dir)
    where data_dir, if set, points at a gen-data export to load instead of
    regenerating. seed/output_dir arguments override the file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing config file: {path}")
    with path.open() as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    known = {"name", "seed", "output_dir", "preset", "data", "task", "partition", "engine", "planner"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown top-level field (allowed: {sorted(known)})")

    task = _build(SyntheticTaskSpec, _listable(raw.get("task", {})), "task")
    partition = _build(PartitionSpec, raw.get("partition", {}), "partition")
    engine = _parse_engine(raw.get("engine", {}), "engine")
    planner = None
    if raw.get("planner") is not None:
        planner = _build(PlanSearchConfig, raw["planner"], "planner")
    cfg = ExperimentConfig(
        name=str(raw.get("name", path.stem)),
        task=task,
        partition=partition,
        engine=engine,
        planner=planner,
        output_dir=str(output_dir if output_dir is not None else raw.get("output_dir", "out")),
        seed=int(seed if seed is not None else raw.get("seed", 0)),
    )
    preset = raw.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset '{preset}' (allowed: {list(PRESETS)})")
        cfg = apply_preset(cfg, preset)
    data_dir = raw.get("data")
    return cfg, (str(data_dir) if data_dir else None)


def _listable(data):
    # YAML gives lists for per-class counts; dataclasses want tuples
    if isinstance(data, dict) and isinstance(data.get("per_class_count"), list):
        data = dict(data)
        data["per_class_count"] = tuple(data["per_class_count"])
    return data


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved config, defaults included, for the output-dir echo."""

    def convert(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            if isinstance(obj, LayerPlan):
                return obj.describe()
            out = {}
            for f in dataclasses.fields(obj):
                out[f.name] = convert(getattr(obj, f.name))
            if isinstance(obj, PacingConfig):
                out["mode"] = "static"
            elif isinstance(obj, FixedCountPacing):
                out["mode"] = "fixed"
            elif isinstance(obj, ControllerPacing):
                out["mode"] = "controller"
                out["candidates"] = [[c.f, c.n, c.k] for c in obj.candidate_list()]
            return out
        if isinstance(obj, tuple):
            return [convert(v) for v in obj]
        if isinstance(obj, LayerMode):
            return obj.value
        return obj

    out = convert(cfg)
    if cfg.engine.pacing is None:
        out["engine"]["pacing"] = {"mode": "none"}
    return out
