"""Engine configuration: plain key=value files plus flag overrides.

Recognized keys (see README for the full reference)::

    data.<relation>      = path/to/file.csv
    pk.<relation>        = attribute
    fk.<relation>.<attr> = relation.attribute
    type.<relation>.<attr> = integer | float | date | categorical
    theta, k, join_mode, k_mcv, buckets, sigma, method, samples, seed,
    propagate, model_dir
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError

DEFAULTS = {
    "theta": 500_000,
    "k": 3,
    "k_mcv": 60,
    "buckets": 100,
    "samples": 1000,
    "sigma": "all",
    "method": "ps",
    "seed": 0,
    "join_mode": False,
    "propagate": True,
}


@dataclass
class EngineConfig:
    data: dict[str, str] = field(default_factory=dict)
    primary_keys: dict[str, str] = field(default_factory=dict)
    foreign_keys: list[tuple[str, str, str, str]] = field(default_factory=list)
    type_overrides: dict[tuple[str, str], str] = field(default_factory=dict)
    theta: int = DEFAULTS["theta"]
    k: int = DEFAULTS["k"]
    k_mcv: int = DEFAULTS["k_mcv"]
    buckets: int = DEFAULTS["buckets"]
    samples: int = DEFAULTS["samples"]
    sigma: object = DEFAULTS["sigma"]
    method: str = DEFAULTS["method"]
    seed: int = DEFAULTS["seed"]
    join_mode: bool = DEFAULTS["join_mode"]
    propagate: bool = DEFAULTS["propagate"]
    model_dir: str = "model"

    def validate(self) -> "EngineConfig":
        if not self.data:
            raise ConfigError("no data.<relation> entries configured")
        if self.theta < 1:
            raise ConfigError(f"theta must be >= 1, got {self.theta}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.method not in ("ve", "ps"):
            raise ConfigError(f"method must be 've' or 'ps', got {self.method!r}")
        if self.sigma != "all" and (not isinstance(self.sigma, int) or self.sigma < 1):
            raise ConfigError(f"sigma must be a positive integer or 'all', "
                              f"got {self.sigma!r}")
        return self

    def to_dict(self) -> dict:
        return {
            "data": dict(sorted(self.data.items())),
            "primary_keys": dict(sorted(self.primary_keys.items())),
            "foreign_keys": sorted(self.foreign_keys),
            "type_overrides": sorted([rel, attr, kind] for (rel, attr), kind
                                     in self.type_overrides.items()),
            "theta": self.theta, "k": self.k, "k_mcv": self.k_mcv,
            "buckets": self.buckets, "samples": self.samples,
            "sigma": self.sigma, "method": self.method, "seed": self.seed,
            "join_mode": self.join_mode, "propagate": self.propagate,
            "model_dir": self.model_dir,
        }

    @staticmethod
    def from_dict(payload: dict) -> "EngineConfig":
        return EngineConfig(
            data=dict(payload["data"]),
            primary_keys=dict(payload["primary_keys"]),
            foreign_keys=[tuple(fk) for fk in payload["foreign_keys"]],
            type_overrides={(rel, attr): kind for rel, attr, kind
                            in payload["type_overrides"]},
            theta=payload["theta"], k=payload["k"], k_mcv=payload["k_mcv"],
            buckets=payload["buckets"], samples=payload["samples"],
            sigma=payload["sigma"], method=payload["method"],
            seed=payload["seed"], join_mode=payload["join_mode"],
            propagate=payload["propagate"], model_dir=payload["model_dir"],
        )


def _parse_bool(text: str, key: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _parse_int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def parse_config(path: str | Path) -> EngineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = EngineConfig()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        apply_setting(cfg, key, value, where=f"{path}:{lineno}")
    return cfg


def apply_setting(cfg: EngineConfig, key: str, value: str, where: str = "flag"):
    parts = key.split(".")
    if parts[0] == "data" and len(parts) == 2:
        cfg.data[parts[1]] = value
    elif parts[0] == "pk" and len(parts) == 2:
        cfg.primary_keys[parts[1]] = value
    elif parts[0] == "fk" and len(parts) == 3:
        if "." not in value:
            raise ConfigError(f"{where}: fk value must be relation.attribute, "
                              f"got {value!r}")
        ref_rel, _, ref_attr = value.partition(".")
        cfg.foreign_keys.append((parts[1], parts[2], ref_rel, ref_attr))
    elif parts[0] == "type" and len(parts) == 3:
        if value not in ("integer", "float", "date", "categorical"):
            raise ConfigError(f"{where}: unknown type {value!r}")
        cfg.type_overrides[(parts[1], parts[2])] = value
    elif key == "theta":
        cfg.theta = _parse_int(value, key)
    elif key == "k":
        cfg.k = _parse_int(value, key)
    elif key == "k_mcv":
        cfg.k_mcv = _parse_int(value, key)
    elif key == "buckets":
        cfg.buckets = _parse_int(value, key)
    elif key == "samples":
        cfg.samples = _parse_int(value, key)
    elif key == "seed":
        cfg.seed = _parse_int(value, key)
    elif key == "sigma":
        cfg.sigma = "all" if value.lower() == "all" else _parse_int(value, key)
    elif key == "method":
        cfg.method = value.lower()
    elif key == "join_mode":
        cfg.join_mode = _parse_bool(value, key)
    elif key == "propagate":
        cfg.propagate = _parse_bool(value, key)
    elif key == "model_dir":
        cfg.model_dir = value
    else:
        raise ConfigError(f"{where}: unknown configuration key {key!r}")
