#!/usr/bin/env python3
"""
Run Configuration
Resolves the settings of one CLI run from four layers, lowest to highest:
built-in defaults, a dotenv-style config file, DC2AC_* environment
variables, and command-line flags.
"""

import os
import json
import logging
import platform
from datetime import datetime, timezone
from dataclasses import dataclass, field, fields, asdict, replace
from typing import Dict, Any, Optional, Mapping

import psutil
from dotenv import dotenv_values

from dataset_generator import SamplerConfig
from training import TrainConfig

logger = logging.getLogger(__name__)

ENV_PREFIX = 'DC2AC_'
DEFAULT_CASE_URL = 'https://raw.githubusercontent.com/power-grid-lib/pglib-opf/master'
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')


class ConfigError(ValueError):
    """A configuration value is missing, malformed or out of range."""


def default_workers() -> int:
    return psutil.cpu_count(logical=True) or 1


@dataclass(frozen=True)
class RunConfig:
    command: str = ''
    seed: int = 0
    tol: float = 1e-8
    ac_tol: float = 1e-6
    workers: int = field(default_factory=default_workers)
    log_dir: str = 'logs'
    log_level: str = 'INFO'
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-3
    patience: int = 10
    global_lo: float = 0.7
    global_hi: float = 1.1
    local_range: float = 0.15
    case_url: str = DEFAULT_CASE_URL
    paths: Dict[str, Any] = field(default_factory=dict)
    sources: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls) if f.name not in ('command', 'paths', 'sources')]

    @classmethod
    def resolve(cls, command: str, flags: Optional[Mapping[str, Any]] = None,
                config_file: Optional[str] = None,
                environ: Optional[Mapping[str, str]] = None) -> 'RunConfig':
        """Merge the layers; None-valued flags count as not given."""
        environ = os.environ if environ is None else environ
        values: Dict[str, Any] = {}
        sources: Dict[str, str] = {}
        types = {f.name: f.type for f in fields(cls)}

        layers = []
        if config_file:
            if not os.path.exists(config_file):
                raise ConfigError(f"config file not found: {config_file}")
            layers.append(('file', {k: v for k, v in dotenv_values(config_file).items() if v is not None}))
        layers.append(('env', dict(environ)))

        for source, raw in layers:
            for key in cls.keys():
                env_key = ENV_PREFIX + key.upper()
                if env_key in raw and raw[env_key] != '':
                    values[key] = _coerce(key, raw[env_key], types[key])
                    sources[key] = source
            unknown = [k for k in raw if k.startswith(ENV_PREFIX) and k[len(ENV_PREFIX):].lower() not in cls.keys()]
            if source == 'file' and unknown:
                raise ConfigError(f"unknown keys in {config_file}: {', '.join(sorted(unknown))}")

        paths = {}
        for key, value in (flags or {}).items():
            if value is None:
                continue
            if key in cls.keys():
                values[key] = _coerce(key, value, types[key])
                sources[key] = 'flag'
            else:
                paths[key] = value

        return cls(command=command, paths=paths, sources=sources, **values).validate()

    def validate(self) -> 'RunConfig':
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not (self.tol > 0 and self.ac_tol > 0):
            raise ConfigError(f"solver tolerances must be positive, got tol={self.tol}, ac_tol={self.ac_tol}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.log_level.upper() not in LOG_LEVELS:
            raise ConfigError(f"log level must be one of {', '.join(LOG_LEVELS)}, got {self.log_level}")
        try:
            self.sampler_config()
            self.train_config()
        except ValueError as e:
            raise ConfigError(str(e))
        return self

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(global_lo=self.global_lo, global_hi=self.global_hi,
                             local_range=self.local_range, seed=self.seed).validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, seed=self.seed,
                           patience=self.patience, tol=self.tol, workers=self.workers).validate()

    def with_paths(self, **paths) -> 'RunConfig':
        return replace(self, paths={**self.paths, **paths})

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _coerce(key: str, value: Any, kind) -> Any:
    if isinstance(value, str):
        value = value.strip()
    try:
        if kind in (int, 'int'):
            number = float(value)
            if number != int(number):
                raise ValueError
            return int(number)
        if kind in (float, 'float'):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{ENV_PREFIX}{key.upper()}: expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return str(value)


def host_info() -> Dict[str, Any]:
    memory = psutil.virtual_memory()
    return {
        'hostname': platform.node(),
        'system': f"{platform.system()} {platform.release()}",
        'python': platform.python_version(),
        'cpu_count': psutil.cpu_count(),
        'memory_total': f"{memory.total / (1024 ** 3):.1f} GB",
    }


def write_manifest(path: str, config: RunConfig, inputs: Dict[str, str],
                   outputs: Dict[str, str], summary: Optional[Dict[str, Any]] = None) -> str:
    """JSON provenance record: resolved config, input/output hashes and host."""
    manifest = {
        'command': config.command,
        'created': datetime.now(timezone.utc).isoformat(timespec='seconds'),
        'config': config.to_dict(),
        'inputs': inputs,
        'outputs': outputs,
        'summary': summary or {},
        'host': host_info(),
    }
    with open(path, 'w') as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
    logger.info(f"Manifest written to {path}")
    return path
