"""Flat key=value run configuration with defaults and seed precedence.

Every hyperparameter of the pipeline lives here. Files are plain text,
one ``key = value`` per line, ``#`` starts a comment; unknown keys are
rejected. The seed resolves as: command-line flag > OFCL_SEED environment
variable > config file > default.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .boundaries import MarginConfig
from .errors import ParseError, UsageError
from .features import make_backbone
from .knowledge import ClusterParams
from .stream import StreamSpec
from .training import TokenConfig, TrainConfig

SEED_ENV_VAR = "OFCL_SEED"


@dataclass(frozen=True)
class RunConfig:
    # stream (ignored when an episode manifest is supplied)
    episodes: str = ""  # manifest path; empty generates synthetically
    input_dim: int = 16
    base_classes: int = 6
    base_samples_per_class: int = 50
    tasks: int = 3
    n_way: int = 3
    k_shot: int = 5
    test_per_class: int = 20
    separation: float = 3.0
    spread: float = 0.5
    # backbone
    backbone_kind: str = "projection"
    embedding_dim: int = 16
    # token augmentation
    tokens_per_task: int = 25
    token_length: int = 5
    top_k: int = 5
    lambda_key: float = 0.5
    # boundaries
    margin: float = 0.5
    alpha: float = 8.0
    beta: float = 8.0
    lambda_radius: float = 0.2
    sigma: float = 0.1
    # unknown clustering
    epsilon: float = 0.55
    min_pts: int = 5
    # training
    gamma: float = 0.5
    epochs: int = 20
    batch_size: int = 25
    learning_rate: float = 0.03
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_opt: float = 1e-8
    # evaluation
    tpr_target: float = 0.95
    # master seed; every RNG stream derives from it
    seed: int = 7

    def stream_spec(self) -> StreamSpec:
        return StreamSpec(
            input_dim=self.input_dim,
            num_base_classes=self.base_classes,
            base_samples_per_class=self.base_samples_per_class,
            num_tasks=self.tasks,
            n_way=self.n_way,
            k_shot=self.k_shot,
            test_per_class=self.test_per_class,
            cluster_separation=self.separation,
            cluster_spread=self.spread,
            seed=self.seed,
        )

    def backbone(self):
        return make_backbone(self.backbone_kind, self.input_dim, self.embedding_dim, self.seed)

    def margin_config(self) -> MarginConfig:
        return MarginConfig(
            m=self.margin,
            alpha=self.alpha,
            beta=self.beta,
            lambda_r=self.lambda_radius,
            sigma=self.sigma,
        )

    def cluster_params(self) -> ClusterParams:
        return ClusterParams(epsilon=self.epsilon, min_pts=self.min_pts)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            eps_opt=self.epsilon_opt,
            seed=self.seed,
        )

    def token_config(self) -> TokenConfig:
        return TokenConfig(
            tokens_per_task=self.tokens_per_task,
            token_length=self.token_length,
            select_k=self.top_k,
            lambda_key=self.lambda_key,
        )


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def parse_config_file(path) -> dict:
    """Read raw key/value strings from a config file."""
    raw = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError("expected 'key = value'", line=lineno)
            key, value = (part.strip() for part in text.split("=", 1))
            if key not in _FIELDS:
                raise ParseError(f"unknown config key {key!r}", line=lineno)
            if key in raw:
                raise ParseError(f"duplicate config key {key!r}", line=lineno)
            raw[key] = value
    return raw


def _coerce(key: str, value):
    if isinstance(value, str):
        ftype = _FIELDS[key].type
        try:
            if ftype == "int":
                return int(value)
            if ftype == "float":
                return float(value)
        except ValueError as exc:
            raise UsageError(f"config key {key!r}: {exc}") from exc
    return value


def resolve_config(path=None, overrides=None, env=None) -> RunConfig:
    """Merge defaults, file, environment and explicit overrides into a config."""
    env = os.environ if env is None else env
    values = {}
    if path:
        for key, value in parse_config_file(path).items():
            values[key] = _coerce(key, value)
    if SEED_ENV_VAR in env:
        try:
            values["seed"] = int(env[SEED_ENV_VAR])
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV_VAR} must be an integer: {exc}") from exc
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise UsageError(f"unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return RunConfig(**values)
