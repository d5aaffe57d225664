"""Run configuration and its flat YAML file format."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import yaml

from .env import STATE_MODES, ConfigurationError, NetworkConfig
from .llm import LlmBackendConfig

BACKENDS = ("llm", "surrogate", "random", "qlearn")
DEFAULT_CONFIG = "default_config.yaml"

_NETWORK_KEYS = {f.name for f in fields(NetworkConfig)}
_LLM_KEYS = {f"llm_{f.name}": f.name for f in fields(LlmBackendConfig)}


@dataclass(frozen=True)
class RunConfig:
    episodes: int = 200
    exploration_fraction: float = 0.4
    epsilon: float = 1.0
    state_mode: str = "continuous"
    backend: str = "surrogate"
    tau: float = 1.0
    k_good: int = 6
    k_bad: int = 5
    seed: int = 0
    out_dir: str = "runs/latest"
    independent_actions: bool = False
    pool_capacity: int | None = None
    warm_start_pool: str | None = None
    plots: bool = True
    q_learning_rate: float | None = None
    q_discount: float = 0.0
    q_bin_width: float = 1.0
    llm_reply_fixtures: tuple[str, ...] = ()
    sweep_min_rates: tuple[float, ...] = (4.0e5, 7.35e5, 1.1e6)
    sweep_num_bs: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    llm: LlmBackendConfig = field(default_factory=LlmBackendConfig)

    def __post_init__(self):
        for name in ("llm_reply_fixtures", "sweep_min_rates", "sweep_num_bs"):
            object.__setattr__(self, name, tuple(getattr(self, name) or ()))
        checks = [
            (self.episodes >= 1, "episodes must be >= 1"),
            (0.0 <= self.exploration_fraction <= 1.0, "exploration_fraction must lie in [0, 1]"),
            (0.0 <= self.epsilon <= 1.0, "epsilon must lie in [0, 1]"),
            (self.state_mode in STATE_MODES, f"state_mode must be one of {STATE_MODES}"),
            (self.backend in BACKENDS, f"backend must be one of {BACKENDS}"),
            (self.tau >= 0, "tau must be >= 0"),
            (self.k_good >= 0 and self.k_bad >= 0, "k_good and k_bad must be >= 0"),
            (self.q_bin_width > 0, "q_bin_width must be > 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)

    def with_overrides(self, **overrides) -> "RunConfig":
        """Replace run, ``network`` or ``llm_*`` keys by their flat names; None values are skipped."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return from_flat_dict({**to_flat_dict(self), **overrides})


def to_flat_dict(config: RunConfig) -> dict:
    out = {}
    for f in fields(RunConfig):
        if f.name in ("network", "llm"):
            continue
        value = getattr(config, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    out.update(config.network.to_dict())
    out.update({key: getattr(config.llm, name) for key, name in _LLM_KEYS.items()})
    return out


_FLOAT_KEYS = {f.name for cls in (RunConfig, NetworkConfig, LlmBackendConfig)
               for f in fields(cls) if str(f.type).startswith("float")}


def _coerce(key: str, value):
    # YAML 1.1 reads "5.0e5" (no exponent sign) as a string
    if isinstance(value, str) and key.removeprefix("llm_") in _FLOAT_KEYS:
        try:
            return float(value)
        except ValueError:
            raise ConfigurationError(f"{key} must be a number, got {value!r}") from None
    return value


def from_flat_dict(data: dict) -> RunConfig:
    data = {k: _coerce(k, v) for k, v in data.items()}
    run_keys = {f.name for f in fields(RunConfig)} - {"network", "llm"}
    unknown = set(data) - run_keys - _NETWORK_KEYS - set(_LLM_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    network = NetworkConfig.from_dict({k: v for k, v in data.items() if k in _NETWORK_KEYS})
    llm = LlmBackendConfig(**{name: data[key] for key, name in _LLM_KEYS.items() if key in data})
    return RunConfig(network=network, llm=llm, **{k: v for k, v in data.items() if k in run_keys})


def default_config_text() -> str:
    return resources.files("powericl").joinpath(DEFAULT_CONFIG).read_text()


def load_config(path: str | Path | None = None) -> RunConfig:
    """Read a flat YAML config; missing keys fall back to the packaged defaults."""
    data = yaml.safe_load(default_config_text()) or {}
    if path is not None:
        with open(path) as fh:
            data.update(yaml.safe_load(fh) or {})
    return from_flat_dict(data)


def save_config(config: RunConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_flat_dict(config), fh, sort_keys=False)
