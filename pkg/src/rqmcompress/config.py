"""Experiment configuration: defaults, YAML loading, validation, hashing.

Every hyperparameter the underlying method leaves open (shift distribution,
ensemble size, burn-in, circuit depths, cost weights, optimizer and baseline
settings) lives here with an explicit default, is echoed into summary.json,
and is covered by the config hash stamped onto every result row.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


DEFAULTS: dict = {
    "model": {
        "n": [2, 3, 4],
        "shift": {"kind": "wrapped-gaussian", "mean": 0.0, "sigma": None},  # None: 1/(2N)
    },
    "reduction": {
        "n_tilde": [1, 2],
        "v_layers": 4,
        "u_layers": 4,
        "alpha": 1.0,
        "beta": 1.0,
        "k": 256,
        "burn_in": None,  # None: 16 * N
        "ensemble_seed": 0,
    },
    "optimizer": {
        "max_iter": 2000,
        "tol_cost": 1e-9,
        "tol_grad": 1e-7,
        "restarts": 3,
        "two_phase": False,
    },
    "baseline": {
        "delta_thresh": 1e-8,
        "max_iter": 500,
        "restarts": 20,
    },
    "seeds": list(range(10)),
    "output_dir": "results",
    "workers": None,  # None: cpu count
}


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict = field(repr=False)

    @property
    def n_list(self) -> list[int]:
        return list(self.raw["model"]["n"])

    @property
    def shift_spec(self) -> dict:
        return dict(self.raw["model"]["shift"])

    @property
    def n_tilde_list(self) -> list[int]:
        return list(self.raw["reduction"]["n_tilde"])

    @property
    def reduction(self) -> dict:
        return dict(self.raw["reduction"])

    @property
    def optimizer(self) -> dict:
        return dict(self.raw["optimizer"])

    @property
    def baseline(self) -> dict:
        return dict(self.raw["baseline"])

    @property
    def seeds(self) -> list[int]:
        return list(self.raw["seeds"])

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get("RQMCOMPRESS_OUTPUT_DIR", self.raw["output_dir"]))

    @property
    def workers(self) -> int:
        w = self.raw.get("workers")
        return int(w) if w else (os.cpu_count() or 1)

    def sigma_for(self, n: int) -> float | None:
        """Resolved wrapped-Gaussian width for an n-qubit model (None elsewhere)."""
        spec = self.shift_spec
        if spec.get("kind") != "wrapped-gaussian":
            return None
        return spec["sigma"] if spec.get("sigma") is not None else 1.0 / (2.0 * 2**n)

    def resolved_shift(self, n: int) -> dict:
        spec = self.shift_spec
        if spec.get("kind") == "wrapped-gaussian" and spec.get("sigma") is None:
            spec = dict(spec, sigma=self.sigma_for(n))
        return spec

    def burn_in_for(self, n: int) -> int:
        b = self.reduction["burn_in"]
        return int(b) if b is not None else 16 * 2**n

    def valid_cells(self) -> list[tuple[int, int]]:
        """(n, n_tilde) pairs with n_tilde < n; invalid combinations are skipped."""
        return [(n, nt) for n in self.n_list for nt in self.n_tilde_list if nt < n]

    def hash(self) -> str:
        return config_hash(self.raw)


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {key!r}")
        if isinstance(value, dict) and isinstance(base[key], dict):
            out[key] = _deep_merge(base[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _validate(raw: dict) -> None:
    kind = raw["model"]["shift"].get("kind")
    if kind not in ("wrapped-gaussian", "uniform-interval", "point-mass", "table"):
        raise ConfigError(f"unknown shift kind {kind!r}")
    if not raw["model"]["n"]:
        raise ConfigError("model.n must be a non-empty list")
    if any(int(n) < 1 for n in raw["model"]["n"]):
        raise ConfigError("model sizes must be positive")
    if not raw["reduction"]["n_tilde"]:
        raise ConfigError("reduction.n_tilde must be a non-empty list")
    if any(int(t) < 1 for t in raw["reduction"]["n_tilde"]):
        raise ConfigError("reduced sizes must be positive")
    if not raw["seeds"]:
        raise ConfigError("seeds must be a non-empty list")
    for key in ("v_layers", "u_layers", "k"):
        if int(raw["reduction"][key]) < 0:
            raise ConfigError(f"reduction.{key} must be nonnegative")
    if raw["reduction"]["alpha"] <= 0 or raw["reduction"]["beta"] <= 0:
        raise ConfigError("cost weights alpha, beta must be positive")
    cells = [
        (n, nt)
        for n in raw["model"]["n"]
        for nt in raw["reduction"]["n_tilde"]
        if nt < n
    ]
    if not cells:
        raise ConfigError("no valid (n, n_tilde) cell satisfies n_tilde < n")


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Defaults merged with an optional YAML file, validated."""
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
        raw = _deep_merge(raw, data)
    _validate(raw)
    return ExperimentConfig(raw=raw)


def config_hash(raw: dict) -> str:
    """Stable digest of the science-relevant configuration.

    Output location and worker count do not affect results and are excluded.
    """
    payload = {k: v for k, v in raw.items() if k not in ("output_dir", "workers")}
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]
