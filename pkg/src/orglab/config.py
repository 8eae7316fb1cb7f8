"""Plain-text key=value experiment configuration.

One file drives a whole experiment: environment shape, reward table,
learner hyperparameters, and logging switches. Lines are ``key = value``;
blank lines and ``#`` comments are ignored. Unknown keys are errors so
typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .env import OrgConfig, RewardParams

__all__ = ["ConfigError", "ExperimentConfig", "parse_kv_text",
           "load_config", "config_to_text"]


class ConfigError(ValueError):
    """A malformed or inconsistent configuration file."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a training run needs besides the master seed."""

    # environment
    open_mode: bool = False
    n_employees: int = 5
    delta: float = 0.1
    epsilon: float = 0.0
    horizon: int = 50
    initial_level: int = 2
    # reward table
    reward_self: float = 0.5
    reward_balance: float = 0.25
    reward_group: float = 0.0
    w_group: float = 1.0
    w_balance: float = 0.5
    level_multipliers: tuple = (3.0, 3.5, 4.0, 4.5, 5.0)
    hire_cost: float = 1.0
    manager_beta: float = 0.9
    # learners
    variant: str = "lia2c"
    gamma: float = 0.95
    actor_lr: float = 3e-3
    critic_lr: float = 3e-3
    ed_lr: float = 3e-3
    entropy_weight: float = 0.01
    hidden: tuple = (64, 64)
    latent_dim: int = 16
    theta_source: str = "decoder"
    max_grad_norm: float = 5.0
    # run shape
    total_steps: int = 200_000
    n_seeds: int = 1
    checkpoint_every: int = 100     # episodes between snapshots (0 = final only)
    eval_episodes: int = 20
    eval_greedy: bool = False
    # logging
    trace: bool = False
    log_predictions: bool = False
    log_embeddings: bool = False

    def __post_init__(self):
        if self.total_steps <= 0:
            raise ConfigError("total_steps must be positive")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")
        if self.variant not in ("lia2c", "lia2c-wokld", "ia2cdm"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.theta_source not in ("decoder", "posterior", "decoder-sample"):
            raise ConfigError(f"unknown theta_source {self.theta_source!r}")

    @property
    def episodes(self) -> int:
        return -(-self.total_steps // self.horizon)

    def reward_params(self) -> RewardParams:
        return RewardParams(
            individual=(self.reward_self, self.reward_balance,
                        self.reward_group, 0.0, 0.0, 0.0),
            w_group=self.w_group, w_balance=self.w_balance,
            level_multipliers=tuple(self.level_multipliers),
            hire_cost=self.hire_cost, manager_beta=self.manager_beta)

    def env_config(self) -> OrgConfig:
        try:
            return OrgConfig(
                open_mode=self.open_mode, n_employees=self.n_employees,
                delta=self.delta, epsilon=self.epsilon, horizon=self.horizon,
                initial_level=self.initial_level, rewards=self.reward_params())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def parse_kv_text(text: str) -> dict:
    """Parse ``key = value`` lines into a string-to-string mapping."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False, "on": True, "off": False}


def _coerce(name: str, value: str, target_type):
    try:
        if target_type is bool:
            word = value.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(f"not a boolean: {value!r}")
            return _BOOL_WORDS[word]
        if target_type is int:
            return int(value)
        if target_type is float:
            return float(value)
        if target_type is tuple:
            parts = [p.strip() for p in value.split(",") if p.strip()]
            numbers = tuple(float(p) for p in parts)
            return (tuple(int(n) for n in numbers)
                    if all(n == int(n) for n in numbers) else numbers)
        return value
    except ValueError as exc:
        raise ConfigError(f"key {name!r}: {exc}") from exc


def from_mapping(mapping: dict) -> ExperimentConfig:
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    typed = {}
    for key, value in mapping.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        declared = known[key]
        base = {"bool": bool, "int": int, "float": float, "tuple": tuple,
                "str": str}.get(declared, str)
        typed[key] = _coerce(key, value, base)
    try:
        return ExperimentConfig(**typed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a key=value file, apply overrides, and build the config."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            mapping = parse_kv_text(handle.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if overrides:
        mapping.update({k: str(v) for k, v in overrides.items()})
    return from_mapping(mapping)


def config_to_text(config: ExperimentConfig) -> str:
    """Serialize back to the key=value format (round-trips load_config)."""
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            rendered = ",".join(repr(v) for v in value)
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        else:
            rendered = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"
