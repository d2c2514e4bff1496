"""Experiment configuration: one YAML file, flag overrides, stable hashing.

The config hash covers only fields that influence the scientific output
(model parameters, schedules, seeds).  Output paths, worker counts and
plot toggles are excluded so that re-running the same experiment into a
different directory produces byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .prior import Prior, make_prior, prior_by_name

MODES = ("theory", "simulate", "analyze", "oracle", "cavity-check", "pipeline")


@dataclass
class ChainConfig:
    burnin: int = 2000
    spacing: int = 10
    samples: int = 1
    init: str = "planted"


@dataclass
class CavityConfig:
    t0: float = 0.5
    eps: float = 1e-3
    f: str = "q12"
    q_cav: float | None = None  # None -> use the solved fixed point


@dataclass
class ExperimentConfig:
    mode: str = "pipeline"
    prior: object = "rademacher"  # name string or {"atoms": [...], "weights": [...]}
    lam: float = 0.5
    h: float = 0.0
    t: float = 1.0
    N: object = 1000              # int or list of ints
    replicas: int = 3
    instances: int = 100
    chain: ChainConfig = field(default_factory=ChainConfig)
    cavity: CavityConfig = field(default_factory=CavityConfig)
    seed: int = 1234
    nodes: int = 301
    tol: float = 1e-10
    n_check: int = 0
    out: str = "runs/out"
    plots: bool = False
    workers: int = 1
    analyze_in: str | None = None
    theory_path: str | None = None

    # -- resolution helpers -------------------------------------------------

    def resolve_prior(self) -> Prior:
        if isinstance(self.prior, str):
            return prior_by_name(self.prior)
        if isinstance(self.prior, dict):
            try:
                return make_prior(self.prior["atoms"], self.prior["weights"],
                                  label=self.prior.get("label", "custom"))
            except KeyError as e:
                raise ConfigError(f"prior dict missing key {e}") from e
        raise ConfigError(f"cannot interpret prior spec {self.prior!r}")

    def n_list(self) -> list[int]:
        if isinstance(self.N, (list, tuple)):
            return [int(v) for v in self.N]
        return [int(self.N)]

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        try:
            self.resolve_prior()
        except ConfigError:
            raise
        except Exception as e:
            raise ConfigError(f"bad prior spec: {e}") from e
        if self.lam <= 0:
            raise ConfigError("lambda must be > 0")
        if self.h < 0 or not 0.0 <= self.t <= 1.0:
            raise ConfigError("need h >= 0 and t in [0, 1]")
        if any(n < 2 for n in self.n_list()):
            raise ConfigError("N must be >= 2")
        if self.mode in ("simulate", "pipeline") and self.instances < 1:
            raise ConfigError("need at least one instance")
        if not 1 <= self.replicas <= 8:
            raise ConfigError("replicas must be in [1, 8]")
        if self.chain.burnin < 0 or self.chain.spacing < 1 or self.chain.samples < 1:
            raise ConfigError("chain schedule fields must be positive")
        if self.chain.init not in ("planted", "prior"):
            raise ConfigError("chain.init must be 'planted' or 'prior'")
        if self.cavity.f not in ("q12", "q1star"):
            raise ConfigError("cavity.f must be 'q12' or 'q1star'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    # -- hashing ------------------------------------------------------------

    _HASH_FIELDS = ("mode", "prior", "lam", "h", "t", "N", "replicas",
                    "instances", "chain", "cavity", "seed", "nodes", "tol",
                    "n_check")

    def hashed_dict(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in self._HASH_FIELDS}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def as_dict(self) -> dict:
        return asdict(self)

    # -- per-instance seed derivation ----------------------------------------

    def instance_seeds(self, n_per_N: int | None = None) -> list[tuple[int, int]]:
        """(disorder seed, chain seed) per instance, over all N grid points."""
        count = (n_per_N if n_per_N is not None else self.instances) * len(self.n_list())
        state = np.random.SeedSequence(self.seed).generate_state(2 * count, np.uint64)
        return [(int(state[2 * k]), int(state[2 * k + 1])) for k in range(count)]


_CHAIN_KEYS = {"burnin", "spacing", "samples", "init"}
_CAVITY_KEYS = {"t0", "eps", "f", "q_cav"}
_ALIASES = {"lambda": "lam"}


def _apply(cfg: ExperimentConfig, data: dict, source: str) -> None:
    for key, value in data.items():
        if value is None:
            continue
        key = _ALIASES.get(key, key)
        if key == "chain":
            if not isinstance(value, dict) or not set(value) <= _CHAIN_KEYS:
                raise ConfigError(f"bad chain section in {source}: {value!r}")
            for k, v in value.items():
                setattr(cfg.chain, k, v)
        elif key == "cavity":
            if not isinstance(value, dict) or not set(value) <= _CAVITY_KEYS:
                raise ConfigError(f"bad cavity section in {source}: {value!r}")
            for k, v in value.items():
                setattr(cfg.cavity, k, v)
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"unknown config key {key!r} in {source}")


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults <- YAML file <- overrides (flags win)."""
    cfg = ExperimentConfig()
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config file {path}: {e}") from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a mapping")
        _apply(cfg, data, str(path))
    if overrides:
        _apply(cfg, overrides, "command line")
    cfg.validate()
    return cfg
