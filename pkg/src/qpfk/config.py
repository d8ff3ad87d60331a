"""Run configuration: a JSON file that pins down one experiment exactly.

Every numerical choice routes through here so that a persisted config
reproduces the run; nothing time- or host-dependent is stored.  Validation
reports the offending field by name.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .cohomology import FrequencyData
from .errors import ConfigError
from .model import ForceModel

_KNOWN_KEYS = {
    "d", "N", "alpha", "omega", "tau", "K_max", "U_modes", "V_modes",
    "lambda0", "tol", "max_iter", "m_list", "ramp", "outputs", "seed",
}


@dataclass
class RunConfig:
    d: int
    N: int
    alpha: tuple
    omega: float
    tau: Optional[float] = None
    K_max: Optional[int] = None
    U_modes: Optional[list] = None
    V_modes: Optional[list] = None
    lambda0: float = 0.0
    tol: float = 1e-12
    max_iter: int = 30
    m_list: tuple = ()
    ramp: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int = 0

    def frequency(self) -> FrequencyData:
        return FrequencyData(alpha=self.alpha, omega=self.omega, tau=self.tau)

    def force(self) -> ForceModel:
        if self.U_modes:
            return ForceModel.from_real_modes(self.U_modes, alpha=self.alpha)
        if self.V_modes:
            return ForceModel.from_real_modes(
                self.V_modes, alpha=self.alpha, potential=True
            )
        return ForceModel(d=self.d, modes=(), gradient=True)

    def canonical(self) -> str:
        """Deterministic serialization used for hashing and persistence."""
        payload = {
            "d": self.d,
            "N": self.N,
            "alpha": list(self.alpha),
            "omega": self.omega,
            "tau": self.tau,
            "K_max": self.K_max,
            "U_modes": self.U_modes,
            "V_modes": self.V_modes,
            "lambda0": self.lambda0,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "m_list": list(self.m_list),
            "ramp": self.ramp,
            "outputs": self.outputs,
            "seed": self.seed,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode("ascii")).hexdigest()


def _require(condition: bool, message: str, field_name: str):
    if not condition:
        raise ConfigError(message, field=field_name)


def _check_mode_entries(entries, d: int, field_name: str):
    _require(isinstance(entries, list), f"{field_name} must be a list", field_name)
    for i, entry in enumerate(entries):
        where = f"{field_name}[{i}]"
        _require(isinstance(entry, dict), f"{where} must be an object", field_name)
        _require("k" in entry, f"{where} needs a mode index 'k'", field_name)
        k = entry["k"]
        _require(
            isinstance(k, list) and len(k) == d
            and all(isinstance(x, int) for x in k),
            f"{where}.k must be {d} integers",
            field_name,
        )
        for key in entry:
            _require(
                key in ("k", "cos", "sin"),
                f"{where} has unknown key {key!r}",
                field_name,
            )
        for key in ("cos", "sin"):
            if key in entry:
                _require(
                    isinstance(entry[key], (int, float)),
                    f"{where}.{key} must be a number",
                    field_name,
                )


def validate_config(cfg: RunConfig) -> RunConfig:
    _require(isinstance(cfg.d, int) and cfg.d >= 2, "d must be an integer >= 2", "d")
    _require(
        isinstance(cfg.N, int) and cfg.N >= 4 and (cfg.N & (cfg.N - 1)) == 0,
        f"N must be a power of two >= 4, got {cfg.N}",
        "N",
    )
    _require(
        len(cfg.alpha) == cfg.d
        and all(isinstance(a, (int, float)) and math.isfinite(a) for a in cfg.alpha),
        f"alpha must be {cfg.d} finite numbers",
        "alpha",
    )
    _require(
        isinstance(cfg.omega, (int, float)) and math.isfinite(cfg.omega)
        and cfg.omega != 0.0,
        "omega must be a finite nonzero number",
        "omega",
    )
    if cfg.tau is not None:
        _require(cfg.tau > 0, "tau must be positive", "tau")
    if cfg.K_max is not None:
        _require(
            isinstance(cfg.K_max, int) and cfg.K_max >= 1,
            "K_max must be a positive integer",
            "K_max",
        )
    _require(
        not (cfg.U_modes is not None and cfg.V_modes is not None),
        "give U_modes or V_modes, not both",
        "U_modes",
    )
    if cfg.U_modes is not None:
        _check_mode_entries(cfg.U_modes, cfg.d, "U_modes")
    if cfg.V_modes is not None:
        _check_mode_entries(cfg.V_modes, cfg.d, "V_modes")
    _require(
        isinstance(cfg.lambda0, (int, float)) and math.isfinite(cfg.lambda0),
        "lambda0 must be a finite number",
        "lambda0",
    )
    _require(
        isinstance(cfg.tol, (int, float)) and cfg.tol > 0,
        "tol must be positive",
        "tol",
    )
    _require(
        isinstance(cfg.max_iter, int) and cfg.max_iter >= 1,
        "max_iter must be a positive integer",
        "max_iter",
    )
    _require(
        all(isinstance(m, int) and m >= 0 for m in cfg.m_list),
        "m_list entries must be non-negative integers",
        "m_list",
    )
    _require(isinstance(cfg.ramp, dict), "ramp must be an object", "ramp")
    _require(isinstance(cfg.outputs, dict), "outputs must be an object", "outputs")
    _require(
        all(isinstance(v, str) for v in cfg.outputs.values()),
        "outputs values must be path strings",
        "outputs",
    )
    _require(isinstance(cfg.seed, int) and cfg.seed >= 0,
             "seed must be a non-negative integer", "seed")
    return cfg


def config_from_dict(raw: dict) -> RunConfig:
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(
            f"unknown config fields: {sorted(unknown)}", field=sorted(unknown)[0]
        )
    for key in ("d", "N", "alpha", "omega"):
        if key not in raw:
            raise ConfigError(f"missing required field {key}", field=key)
    cfg = RunConfig(
        d=raw["d"],
        N=raw["N"],
        alpha=tuple(raw["alpha"]),
        omega=raw["omega"],
        tau=raw.get("tau"),
        K_max=raw.get("K_max"),
        U_modes=raw.get("U_modes"),
        V_modes=raw.get("V_modes"),
        lambda0=raw.get("lambda0", 0.0),
        tol=raw.get("tol", 1e-12),
        max_iter=raw.get("max_iter", 30),
        m_list=tuple(raw.get("m_list", ())),
        ramp=raw.get("ramp", {}),
        outputs=raw.get("outputs", {}),
        seed=raw.get("seed", 0),
    )
    return validate_config(cfg)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(raw)
