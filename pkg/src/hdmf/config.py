"""Run configuration: TOML file, then ``HDMF_*`` environment variables, then flags."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigError
from .evaluation import DEFAULT_CUTOFFS
from .objective import HyperParams
from .training import DEFAULT_HIDDEN_SIZES, TrainConfig

ENV_PREFIX = "HDMF_"
PATH_KEYS = ("cache", "out")


@dataclass
class RunConfig:
    model: str = "hdmf"
    cache: str | None = None
    out: str = "run"
    seed: int = 0
    learning_rate: float = 0.002
    max_epochs: int = 500
    batch_pairs: int = 32
    early_stop_patience: int = 5
    eval_every: int = 1
    lambda_theta: float = 0.01
    lambda_e: float = 0.2
    hidden_sizes: list[int] = field(default_factory=lambda: list(DEFAULT_HIDDEN_SIZES))
    init_stddev: float = 0.1
    hybrid: bool = True
    untied_towers: bool = False
    binarize_ratings: bool = False
    clip_norm: float = 1e3
    convergence_tol: float = 1e-6
    latent_dim: int = 128
    lambda_mf: float = 0.01
    cutoffs: list[int] = field(default_factory=lambda: list(DEFAULT_CUTOFFS))
    blas: bool = False

    def train_config(self) -> TrainConfig:
        if self.model not in ("hdmf", "mf"):
            raise ConfigError(f"model must be 'hdmf' or 'mf', got {self.model!r}")
        try:
            return TrainConfig(
                learning_rate=self.learning_rate, max_epochs=self.max_epochs,
                batch_pairs=self.batch_pairs, early_stop_patience=self.early_stop_patience,
                eval_every=self.eval_every, seed=self.seed,
                hp=HyperParams(self.lambda_theta, self.lambda_e),
                hidden_sizes=tuple(self.hidden_sizes), init_stddev=self.init_stddev,
                hybrid=self.hybrid, untied_towers=self.untied_towers,
                binarize_ratings=self.binarize_ratings, clip_norm=self.clip_norm,
                convergence_tol=self.convergence_tol, latent_dim=self.latent_dim,
                lambda_mf=self.lambda_mf)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    kind = _TYPES[key]
    try:
        if kind.startswith("list"):
            if isinstance(value, str):
                value = [v for v in value.replace(" ", "").split(",") if v]
            return [int(v) for v in value]
        if kind == "bool":
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                    raise ValueError(value)
                return low in ("1", "true", "yes", "on")
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        return None if value is None else str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key!r}: {value!r}") from None


def load_run_config(path=None, env=None, overrides=None) -> RunConfig:
    """Merge defaults, a TOML file, ``HDMF_<KEY>`` variables and explicit overrides.

    Unknown keys in the file raise :class:`ConfigError`. Relative paths in
    the file resolve against the file's directory.
    """
    values: dict = {}
    if path is not None:
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        unknown = sorted(set(raw) - set(_TYPES))
        if unknown:
            raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
        for key, value in raw.items():
            value = _coerce(key, value)
            if key in PATH_KEYS and value is not None and not Path(value).is_absolute():
                value = str((path.parent / value).resolve())
            values[key] = value
    env = os.environ if env is None else env
    for key in _TYPES:
        var = ENV_PREFIX + key.upper()
        if var in env:
            values[key] = _coerce(key, env[var])
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    return dataclasses.replace(RunConfig(), **values)
