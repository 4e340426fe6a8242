"""TOML run configuration: strict schema, defaults, derived model specs."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .cart import ForestSpec, TreeSpec
from .cnnlstm import CnnLstmSpec, TrainConfig
from .errors import ConfigError
from .svr import SvrSpec
from .synth import SceneSpec

DEFAULTS: dict = {
    "paths": {
        "data_root": "data",
        "model_dir": "models",
        "report_dir": "reports",
    },
    "dataset": {
        "steps": 4,
        "window": 10,
        "interval_seconds": 900,
        "folds": 5,
        "fold": 0,
        "seed": 7,
        "validation_fraction": 0.1,
        "satellite_hours": [9, 17],
        "solar_hours": [9, 15],
    },
    "scene": {
        "sites": 10,
        "days": 30,
        "grid_edge": 52,
        "cadence_seconds": 900,
        "blob_count": 6,
        "blob_radius": [2.0, 4.0],
        "blob_opacity": [0.35, 0.95],
        "velocity": [3.0, 0.0],
        "velocity_jitter": 0.5,
        "clear_sky": 0.08,
        "capacity_kw": 10.0,
        "derate_per_degc": 0.004,
        "noise_sigma": 0.005,
        "power_noise_sigma": 0.05,
        "temperature_noise_sigma": 0.2,
        "utc_offset_minutes": -300,
        "start_date": "2021-06-01",
    },
    "cnnlstm": {
        "filters": 32,
        "dense_dims": [256, 256],
        "lstm_hidden": 64,
        "batch_size": 64,
        "learning_rate": 1e-3,
        "max_epochs": 40,
        "patience": 10,
        "clip_norm": 5.0,
    },
    "tree": {
        "max_depth": 12,
        "min_samples_leaf": 3,
    },
    "forest": {
        "tree_count": 20,
        "max_depth": 12,
        "min_samples_leaf": 3,
        "bootstrap": True,
        "feature_subsample": 0.5,
    },
    "svr": {
        "C": 10.0,
        "epsilon": 0.01,
        "kernel": "rbf",
        "tol": 1e-3,
        "max_passes": 200000,
    },
    "evaluation": {
        "channel": 0,
        "channel_deltas": [0.0, 0.01, 0.02, 0.05, 0.10],
        "solar_deltas_pct": [0.0, 1.0, 2.0, 5.0, 10.0],
        "period": "full",
    },
}


def _merge(defaults: dict, overrides: dict, trail: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {trail}{key!r}")
        base = defaults[key]
        if isinstance(base, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{trail}{key} must be a table")
            out[key] = _merge(base, value, f"{trail}{key}.")
        else:
            if isinstance(base, bool) != isinstance(value, bool):
                raise ConfigError(f"{trail}{key} must be a boolean")
            if isinstance(base, (int, float)) and not isinstance(base, bool):
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ConfigError(f"{trail}{key} must be a number")
            elif isinstance(base, str) and not isinstance(value, str):
                raise ConfigError(f"{trail}{key} must be a string")
            elif isinstance(base, list) and not isinstance(value, list):
                raise ConfigError(f"{trail}{key} must be a list")
            out[key] = value
    return out


class RunConfig:
    """Validated configuration plus factories for the model specs."""

    def __init__(self, raw: dict):
        self.raw = _merge(DEFAULTS, raw, "")
        ev = self.raw["evaluation"]
        if ev["period"] not in ("full", "summer"):
            raise ConfigError(f"evaluation.period must be full|summer, got {ev['period']!r}")
        ds = self.raw["dataset"]
        if not 0 <= ds["fold"] < ds["folds"]:
            raise ConfigError(f"dataset.fold {ds['fold']} outside 0..{ds['folds'] - 1}")

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                return cls(tomllib.load(fh))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"bad TOML in {path}: {exc}") from exc

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    # -- derived sections -------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.raw["dataset"]["seed"])

    def section_seed(self, name: str) -> int:
        """Stable per-section stream derived from the root seed."""
        digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
        return int.from_bytes(digest[:4], "little")

    def scene_spec(self) -> SceneSpec:
        s = self.raw["scene"]
        d = self.raw["dataset"]
        return SceneSpec(
            grid_edge=int(s["grid_edge"]),
            window=int(d["window"]),
            cadence_seconds=int(s["cadence_seconds"]),
            day_start_hour=int(d["satellite_hours"][0]),
            day_end_hour=int(d["satellite_hours"][1]),
            blob_count=int(s["blob_count"]),
            blob_radius=tuple(s["blob_radius"]),
            blob_opacity=tuple(s["blob_opacity"]),
            velocity=tuple(s["velocity"]),
            velocity_jitter=float(s["velocity_jitter"]),
            clear_sky=float(s["clear_sky"]),
            capacity_kw=float(s["capacity_kw"]),
            derate_per_degc=float(s["derate_per_degc"]),
            noise_sigma=float(s["noise_sigma"]),
            power_noise_sigma=float(s["power_noise_sigma"]),
            temperature_noise_sigma=float(s["temperature_noise_sigma"]),
            utc_offset_minutes=int(s["utc_offset_minutes"]),
            start_date=str(s["start_date"]),
            seed=self.section_seed("scene"),
        )

    def cnnlstm_spec(self, steps: int | None = None) -> CnnLstmSpec:
        c = self.raw["cnnlstm"]
        d = self.raw["dataset"]
        return CnnLstmSpec(
            window=int(d["window"]),
            steps=int(steps if steps is not None else d["steps"]),
            filters=int(c["filters"]),
            dense_dims=tuple(int(v) for v in c["dense_dims"]),
            lstm_hidden=int(c["lstm_hidden"]),
        )

    def train_config(self) -> TrainConfig:
        c = self.raw["cnnlstm"]
        return TrainConfig(
            batch_size=int(c["batch_size"]),
            learning_rate=float(c["learning_rate"]),
            max_epochs=int(c["max_epochs"]),
            patience=int(c["patience"]),
            clip_norm=float(c["clip_norm"]) if c["clip_norm"] else None,
        )

    def tree_spec(self) -> TreeSpec:
        t = self.raw["tree"]
        return TreeSpec(int(t["max_depth"]), int(t["min_samples_leaf"]))

    def forest_spec(self) -> ForestSpec:
        f = self.raw["forest"]
        return ForestSpec(
            tree_count=int(f["tree_count"]),
            max_depth=int(f["max_depth"]),
            min_samples_leaf=int(f["min_samples_leaf"]),
            bootstrap=bool(f["bootstrap"]),
            feature_subsample=float(f["feature_subsample"]),
            seed=self.section_seed("forest"),
        )

    def svr_spec(self) -> SvrSpec:
        s = self.raw["svr"]
        return SvrSpec(
            C=float(s["C"]),
            epsilon=float(s["epsilon"]),
            kernel=str(s["kernel"]),
            tol=float(s["tol"]),
            max_passes=int(s["max_passes"]),
        )
