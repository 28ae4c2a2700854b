"""Pipeline configuration: a flat ``section.key`` schema loaded from TOML.

Every key has a type and, except for a few paths that only matter when a
feature is switched on, a default. Unknown keys are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

REQUIRED = object()
BUILTIN_HEADS = "builtin:toy_heads"


@dataclass(frozen=True)
class Key:
    default: Any
    kind: type
    help: str


SCHEMA: dict[str, Key] = {
    "video.width": Key(640, int, "working frame width in pixels"),
    "video.height": Key(480, int, "working frame height in pixels"),
    "video.fps": Key(30.0, float, "frame rate used for timestamps"),
    "video.grayscale": Key(True, bool, "convert RGB input to luma before modelling"),
    "gmm.max_components": Key(5, int, "Gaussians per pixel"),
    "gmm.history": Key(500, int, "learning rate is 1/history"),
    "gmm.var_threshold": Key(8.0, float, "squared Mahalanobis match threshold (low = high recall)"),
    "gmm.var_init": Key(225.0, float, "variance of a new component"),
    "gmm.var_min": Key(4.0, float, "variance floor"),
    "gmm.var_max": Key(1125.0, float, "variance ceiling"),
    "gmm.background_ratio": Key(0.9, float, "cumulative weight treated as background"),
    "gmm.complexity_prior": Key(0.05, float, "weight decay that prunes unsupported components"),
    "mask.open_radius": Key(0, int, "morphological opening radius (0 disables)"),
    "mask.min_area": Key(2, int, "smallest blob kept, in pixels"),
    "mask.warmup_frames": Key(2, int, "leading frames whose masks are not searched for blobs"),
    "pipeline.scoring": Key("blob_direct", str, "blob_direct or smrpn_refined"),
    "attention.enabled": Key(False, bool, "multiply blob scores by the mean attention value"),
    "attention.weights": Key(REQUIRED, str, "attention weight JSON (required when enabled)"),
    "attention.stride": Key(4, int, "downscale factor of the attention feature map"),
    "smrpn.alpha": Key(0.2, float, "growth rate of the size-adaptive IoU cutoff"),
    "smrpn.log_base": Key("e", str, "logarithm base of the cutoff: e or a number"),
    "smrpn.strides": Key([4, 8, 16, 32, 64], list, "anchor strides, one level each"),
    "smrpn.stages": Key(2, int, "refinement stages"),
    "smrpn.nms_thr": Key(0.5, float, "proposal NMS IoU threshold"),
    "smrpn.top_k": Key(100, int, "proposals kept per frame"),
    "smrpn.heads": Key(BUILTIN_HEADS, str, "refiner heads JSON"),
    "smrpn.min_coverage": Key(0.1, float, "minimum foreground fraction for an anchor to be scored"),
    "tracker.g": Key(9.8, float, "gravity in m/s^2 (physics utility)"),
    "tracker.min_track_len": Key(3, int, "shortest track kept, in frames"),
    "tracker.max_gap": Key(2, int, "missed frames tolerated inside a track"),
    "tracker.min_down_fraction": Key(0.8, float, "fraction of steps that must move down"),
    "tracker.max_link_dist": Key(120.0, float, "largest centroid jump per frame, in pixels"),
    "tracker.gate_min": Key(6.0, float, "prediction gate radius floor, in pixels"),
    "tracker.gate_speed_frac": Key(0.25, float, "prediction gate growth per px/frame of speed"),
    "events.merge_gap_s": Key(0.5, float, "incidents closer than this are merged"),
    "eval.iou_thr": Key(0.3, float, "IoU a detection must exceed to count as a hit"),
    "eval.beta": Key(1.0, float, "F-measure weight"),
}


def valid_keys() -> list[str]:
    return sorted(SCHEMA)


def describe_keys() -> str:
    lines = []
    for name in valid_keys():
        k = SCHEMA[name]
        default = "<required>" if k.default is REQUIRED else repr(k.default)
        lines.append(f"  {name} = {default}  # {k.help}")
    return "\n".join(lines)


def _coerce(name: str, value: Any) -> Any:
    kind = SCHEMA[name].kind
    if isinstance(value, str) and kind is not str:
        text = value.strip()
        if kind is bool:
            if text.lower() in ("true", "1", "yes", "on"):
                return True
            if text.lower() in ("false", "0", "no", "off"):
                return False
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        if kind is list:
            text = text.strip("[]")
            try:
                return [int(v) for v in text.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"{name}: expected a list of integers, got {value!r}") from exc
        try:
            return kind(text)
        except ValueError as exc:
            raise ConfigError(f"{name}: expected {kind.__name__}, got {value!r}") from exc
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is str and isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{name}: expected {kind.__name__}, got {value!r}")
    return value


class Config:
    """Resolved configuration; read values with ``cfg["gmm.history"]``."""

    def __init__(self, values: Mapping[str, Any] | None = None):
        self._values: dict[str, Any] = {}
        for name, value in (values or {}).items():
            self.set(name, value)

    def set(self, name: str, value: Any) -> None:
        if name not in SCHEMA:
            raise ConfigError(f"unknown config key {name!r}; valid keys: {', '.join(valid_keys())}")
        self._values[name] = _coerce(name, value)

    def __getitem__(self, name: str) -> Any:
        if name not in SCHEMA:
            raise ConfigError(f"unknown config key {name!r}")
        if name in self._values:
            return self._values[name]
        default = SCHEMA[name].default
        if default is REQUIRED:
            raise ConfigError(f"missing required config key {name!r} (it has no default)")
        return list(default) if isinstance(default, list) else default

    def is_set(self, name: str) -> bool:
        return name in self._values

    def resolved(self) -> dict[str, Any]:
        """Every key with a value, for echoing into reports."""
        out = {}
        for name in valid_keys():
            if name in self._values or SCHEMA[name].default is not REQUIRED:
                out[name] = self[name]
        return out

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "Config":
        flat = {}
        for section, body in data.items():
            if isinstance(body, Mapping):
                for key, value in body.items():
                    flat[f"{section}.{key}"] = value
            else:
                flat[section] = body
        return cls(flat)

    @classmethod
    def load(cls, path: str | os.PathLike | None) -> "Config":
        if path is None:
            return cls()
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid config file ({exc})") from exc
        return cls.from_mapping(data)

    def apply_overrides(self, overrides: list[str]) -> None:
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} must look like section.key=value")
            name, value = item.split("=", 1)
            self.set(name.strip(), value)
