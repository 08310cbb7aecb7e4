"""Experiment configuration files.

A configuration is a JSON object::

    {
      "law": {"family": "poisson", "theta": {"kind": "constant", "theta": 1.0}},
      "n": 256, "a": 0,
      "m_grid": [1, 2, 4],
      "coupling": {"strategy": "blocked", "psi": 0.0625, "r": 1, "s": 2},
      "trials": 1000, "seed": 0, "emit": "json", "out": null
    }

Unknown keys are rejected at every level so that typos surface as errors
instead of silently falling back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .laws import ComponentLaw, law_from_dict

LAW_KEYS = {"family", "theta", "r", "q", "p", "size", "pieces"}
THETA_KEYS = {
    "constant": {"kind", "theta"},
    "sinusoid": {"kind", "theta", "terms"},
    "table": {"kind", "values", "theta"},
    "semigroup": {"kind", "p", "q", "theta", "size"},
}
COUPLING_KEYS = {"strategy", "psi", "r", "s", "k"}
EMIT = ("json", "csv")


class ConfigError(ValueError):
    """Malformed experiment configuration."""


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def validate_law(d: dict) -> None:
    _check_keys(d, LAW_KEYS, "law")
    th = d.get("theta")
    if th is not None:
        kind = th.get("kind") if isinstance(th, dict) else None
        if kind not in THETA_KEYS:
            raise ConfigError(f"unknown theta kind {kind!r}")
        _check_keys(th, THETA_KEYS[kind], "law.theta")


@dataclass
class ExperimentConfig:
    law: dict
    n: int = 100
    a: int = 0
    m_grid: list | None = None
    coupling: dict = field(default_factory=dict)
    trials: int = 1000
    seed: int = 0
    emit: str = "json"
    out: str | None = None

    def __post_init__(self):
        validate_law(self.law)
        _check_keys(self.coupling, COUPLING_KEYS, "coupling")
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError("n must be a positive integer")
        if not isinstance(self.a, int) or not 0 <= self.a < self.n:
            raise ConfigError("need 0 <= a < n")
        if self.emit not in EMIT:
            raise ConfigError(f"emit must be one of {EMIT}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.m_grid is not None and (not self.m_grid or any(int(m) < 1 for m in self.m_grid)):
            raise ConfigError("m_grid entries must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _check_keys(d, {f.name for f in fields(cls)}, "config")
        if "law" not in d:
            raise ConfigError("config needs a law")
        return cls(**d)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def build_law(self) -> ComponentLaw:
        try:
            return law_from_dict(self.law)
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"invalid law: {exc}") from exc
