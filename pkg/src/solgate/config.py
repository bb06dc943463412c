"""Run configuration: YAML file < command-line flags."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dynamics import NoiseConfig
from .model import CircuitParams

OUTPUT_DIR_ENV = "SOLGATE_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "solgate-output"


_FLOAT_FIELDS = ("v1", "delta_v2", "rel_tol", "abs_tol", "t_end", "record_dt", "ratio")


class ConfigError(ValueError):
    """Malformed or unknown configuration entries."""


@dataclass
class RunConfig:
    gate: str = "AND"
    v1: float | None = None
    initial: str | list = "reference-point"
    delta_v2: float = 1e-2
    polarity: str = "logical"
    integrator: str = "rk45"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    t_end: float = 1.0
    record_dt: float = 1e-4
    ratio: float | None = None
    ratios: list = field(default_factory=lambda: [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 0.3, 0.6, 0.9])
    resistance_mode: str = "track"
    gammas: list = field(default_factory=lambda: [0.01, 1.0, 100.0, 400.0])
    n_seeds: int = 1000
    seed: int = 0
    output_dir: str | None = None
    params: dict = field(default_factory=lambda: CircuitParams().to_dict())
    noise: dict = field(default_factory=lambda: {"gamma": 0.0, "dt": 1e-6, "n_runs": 100,
                                                 "project": True})

    def __post_init__(self):
        # YAML 1.1 reads "1e-8" as a string
        try:
            for name in _FLOAT_FIELDS:
                if getattr(self, name) is not None:
                    setattr(self, name, float(getattr(self, name)))
            self.ratios = [float(r) for r in self.ratios]
            self.gammas = [float(g) for g in self.gammas]
            self.params = {k: (int(v) if k == "r_order" else float(v))
                           for k, v in self.params.items()}
            self.noise = {k: (bool(v) if k == "project" else int(v) if k == "n_runs"
                              else float(v)) for k, v in self.noise.items()}
            if not isinstance(self.initial, str):
                self.initial = [float(v) for v in self.initial]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"non-numeric configuration value: {exc}") from exc
        self.gate = str(self.gate).upper()
        if self.gate not in ("AND", "OR"):
            raise ConfigError(f"gate must be AND or OR, not {self.gate!r}")
        if self.integrator not in ("rk45", "rosenbrock"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        if self.polarity not in ("logical", "raw"):
            raise ConfigError(f"unknown polarity {self.polarity!r}")
        if self.resistance_mode not in ("track", "fixed"):
            raise ConfigError(f"unknown resistance mode {self.resistance_mode!r}")
        if isinstance(self.initial, str) and self.initial != "reference-point":
            raise ConfigError(f"unknown initial-state preset {self.initial!r}")
        if not isinstance(self.initial, str) and len(self.initial) != 7:
            raise ConfigError("an explicit initial state needs 7 entries (v2, v3, x1..x5)")
        _check_keys("params", self.params, {f.name for f in dataclasses.fields(CircuitParams)})
        _check_keys("noise", self.noise, {"gamma", "dt", "n_runs", "project"})
        self.circuit_params()

    def circuit_params(self) -> CircuitParams:
        p = CircuitParams(**self.params)
        return p if self.ratio is None else p.with_ratio(self.ratio)

    def noise_config(self) -> NoiseConfig:
        return NoiseConfig(seed=self.seed, **self.noise)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data or {})
        _check_keys("config", data, {f.name for f in dataclasses.fields(cls)})
        base = cls()
        for key in ("params", "noise"):
            if key in data:
                merged = dict(getattr(base, key))
                _check_keys(key, data[key], set(merged))
                merged.update(data[key])
                data[key] = merged
        return cls(**data)

    def updated(self, **changes) -> "RunConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return RunConfig.from_dict({**self.to_dict(), **changes})


def _check_keys(where, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def load_config(path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return RunConfig.from_dict(data or {})


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
