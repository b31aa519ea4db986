"""Experiment configuration: presets, config files and --set overrides.

Model and system descriptions resolve from preset names or JSON files, then
individual fields can be overridden with ``section.key=value`` strings. The
fully resolved configuration is embedded in every output file so a result is
reproducible from its own header.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from . import presets
from .model_kernels import ModelConfig
from .pim_design import AreaParams, EnergyParams, PimConfig, PimRole
from .roofline import DeviceKind, DeviceSpec
from .sim_engine import EnergyModel, InterconnectSpec, PlacementMode, RunConfig, SystemConfig
from .workload import BatchPolicy


class ConfigError(ValueError):
    """Configuration problem, annotated with the offending field path."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one experiment needs, with all defaults resolved."""

    model: ModelConfig
    system: SystemConfig
    run: RunConfig
    energy: EnergyModel
    area: AreaParams
    seed: int = 0
    trace_path: Optional[str] = None
    out_dir: str = "out"
    modes: tuple[PlacementMode, ...] = (PlacementMode.DYNAMIC,)
    sweep_max: int = 512


def load_model(name_or_path: str) -> ModelConfig:
    if name_or_path in presets.MODEL_PRESETS:
        return presets.get_model(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise ConfigError(
            f"model: {name_or_path!r} is neither a preset "
            f"({sorted(presets.MODEL_PRESETS)}) nor a file"
        )
    try:
        payload = json.loads(path.read_text())
        return ModelConfig(**payload)
    except (TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"model: {path}: {exc}") from exc


def load_system(name_or_path: str) -> SystemConfig:
    if name_or_path in presets.SYSTEM_PRESETS:
        return presets.get_system(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise ConfigError(
            f"system: {name_or_path!r} is neither a preset "
            f"({sorted(presets.SYSTEM_PRESETS)}) nor a file"
        )
    try:
        payload = json.loads(path.read_text())
        return _system_from_dict(payload)
    except (TypeError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"system: {path}: {exc}") from exc


def _system_from_dict(payload: dict) -> SystemConfig:
    pu = payload["pu"]
    return SystemConfig(
        label=payload.get("label", "custom"),
        pu=DeviceSpec(kind=DeviceKind.PU, peak_flops=pu["peak_flops"],
                      peak_bandwidth=pu["peak_bandwidth"], label=pu.get("label", "pu")),
        fc_pim=_pim_from_dict(payload["fc_pim"], PimRole.FC_PIM),
        fc_pim_count=payload["fc_pim_count"],
        attn_pim=_pim_from_dict(payload["attn_pim"], PimRole.ATTN_PIM),
        attn_pim_count=payload["attn_pim_count"],
        fc_link=InterconnectSpec(**payload["fc_link"]),
        attn_link=InterconnectSpec(**payload["attn_link"]),
        placement_mode=PlacementMode(payload.get("placement_mode", "dynamic")),
        pu_utilization=payload.get("pu_utilization", 0.7),
        pu_power_w=payload.get("pu_power_w", 400.0),
    )


def _pim_from_dict(payload: dict, role: PimRole) -> PimConfig:
    if isinstance(payload, str):
        return presets.PIM_PRESETS[payload]
    payload = dict(payload)
    payload.setdefault("role", role.value)
    payload["role"] = PimRole(payload["role"])
    return PimConfig(**payload)


_SECTION_PATHS = {
    "model": ("model",),
    "system": ("system",),
    "pu": ("system", "pu"),
    "fc_pim": ("system", "fc_pim"),
    "attn_pim": ("system", "attn_pim"),
    "fc_link": ("system", "fc_link"),
    "attn_link": ("system", "attn_link"),
    "run": ("run",),
    "energy": ("energy",),
    "pim_energy": ("energy", "pim"),
    "area": ("area",),
}


def apply_overrides(spec: ExperimentSpec, overrides: list[str]) -> ExperimentSpec:
    """Apply ``section.key=value`` strings on top of a resolved spec."""
    for override in overrides:
        if "=" not in override or "." not in override.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {override!r}")
        dotted, raw_value = override.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in _SECTION_PATHS:
            raise ConfigError(f"{dotted}: unknown section {section!r}; "
                              f"have {sorted(_SECTION_PATHS)}")
        spec = _replace_nested(spec, _SECTION_PATHS[section] + tuple(key.split(".")), raw_value, dotted)
    return spec


def _replace_nested(root: Any, path: tuple[str, ...], raw_value: str, dotted: str) -> Any:
    attr, rest = path[0], path[1:]
    if not hasattr(root, attr):
        raise ConfigError(f"{dotted}: {type(root).__name__} has no field {attr!r}")
    current = getattr(root, attr)
    if rest:
        new_value = _replace_nested(current, rest, raw_value, dotted)
    else:
        new_value = _coerce(current, raw_value, dotted)
    try:
        return dataclasses.replace(root, **{attr: new_value})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{dotted}: {exc}") from exc


def _coerce(current: Any, raw: str, dotted: str) -> Any:
    try:
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(current, Enum):
            return type(current)(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, str):
            return raw
    except ValueError as exc:
        raise ConfigError(f"{dotted}: cannot parse {raw!r} as {type(current).__name__}") from exc
    raise ConfigError(f"{dotted}: field of type {type(current).__name__} is not overridable")


def _to_plain(value: Any) -> Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _to_plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    return value


def resolved_config(spec: ExperimentSpec, **extra: Any) -> dict:
    """Full configuration echo with every default expanded."""
    payload = {
        "model": _to_plain(spec.model),
        "system": _to_plain(spec.system),
        "run": _to_plain(spec.run),
        "energy": _to_plain(spec.energy),
        "area": _to_plain(spec.area),
        "seed": spec.seed,
        "trace": spec.trace_path,
        "modes": [m.value for m in spec.modes],
        "sweep_max": spec.sweep_max,
    }
    payload.update(extra)
    return payload


def build_spec(
    model: str = "gpt3-175b",
    system: str = "hybrid",
    run: Optional[RunConfig] = None,
    seed: int = 0,
    trace_path: Optional[str] = None,
    out_dir: str = "out",
    modes: tuple[PlacementMode, ...] = (PlacementMode.DYNAMIC,),
    overrides: Optional[list[str]] = None,
    sweep_max: int = 512,
) -> ExperimentSpec:
    system_cfg = load_system(system)
    spec = ExperimentSpec(
        model=load_model(model),
        system=system_cfg,
        run=run or RunConfig(seed=seed),
        energy=presets.default_energy_model(system_cfg),
        area=AreaParams(),
        seed=seed,
        trace_path=trace_path,
        out_dir=out_dir,
        modes=modes,
        sweep_max=sweep_max,
    )
    if overrides:
        spec = apply_overrides(spec, overrides)
    return spec


def run_config_from_args(args: Any) -> RunConfig:
    """RunConfig from parsed CLI arguments (missing attributes keep defaults)."""
    defaults = RunConfig()
    return RunConfig(
        policy=BatchPolicy(getattr(args, "policy", defaults.policy.value)),
        batch_size=getattr(args, "batch", defaults.batch_size),
        max_rlp=getattr(args, "max_rlp", defaults.max_rlp),
        spec_len=getattr(args, "spec_len", defaults.spec_len),
        acceptance_rate=getattr(args, "acceptance", defaults.acceptance_rate),
        migration_penalty_s=getattr(args, "migration_penalty", defaults.migration_penalty_s),
        comm_overlap=getattr(args, "comm_overlap", defaults.comm_overlap),
        seed=getattr(args, "seed", defaults.seed),
    )
