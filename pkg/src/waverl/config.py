"""Experiment configuration: desk-scale defaults, full-scale overrides,
JSON round-tripping, and validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError

ABLATIONS = ("full", "no_td", "no_y", "plain_sac")


@dataclass
class ExperimentConfig:
    # environment
    env: str = "veltrack"
    env_params: dict = field(default_factory=dict)
    episode_len: int = 0  # 0 -> environment default
    obs_noise_sigma: float = 0.0
    mean_period: float = 60.0
    period_std: float = 20.0
    min_period: int = 10

    # representation
    window: int = 64           # context window length L (power of two)
    latent_dim: int = 5        # task representation width D
    levels: int = 2            # wavelet decomposition depth M
    keep_fraction: float = 0.5
    filter_length: int = 2
    alpha_y: float = 0.9       # weight of the wavelet TD term against the AR term
    kl_weight: float = 1e-3
    recon_weight: float = 1.0  # transition/reward reconstruction through z
    decoder_hidden: tuple = (128, 128)
    encoder_hidden: tuple = (200, 200, 200)
    encoder_grads: str = "all"  # "all" | "kl_only"
    reward_norm: bool = True

    # policy
    rl_hidden: tuple = (300, 300, 300)
    gamma: float = 0.99
    target_entropy_factor: float = 1.0

    # optimization
    lr: float = 3e-4
    soft_tau: float = 5e-3
    batch_repr: int = 256
    batch_policy: int = 256
    repr_steps: int = 200
    policy_steps: int = 200

    # schedule of the run
    epochs: int = 20
    steps_per_epoch: int = 800
    initial_transitions: int = 200
    buffer_capacity: int = 100_000
    eval_trajectories: int = 2
    checkpoint_every: int = 10

    # bookkeeping
    seed: int = 0
    ablation: str = "full"
    out_dir: str = "runs/default"
    dump_transitions: bool = False

    def validate(self):
        if self.env not in ("veltrack", "oscdamp", "glucosim"):
            raise ConfigError(f"unknown env '{self.env}'")
        if self.window < 2 or self.window & (self.window - 1):
            raise ConfigError(f"window must be a power of two >= 2, got {self.window}")
        if self.levels < 1 or self.window < 2**self.levels:
            raise ConfigError(f"need window >= 2^levels, got {self.window} < 2**{self.levels}")
        if not (0.0 < self.keep_fraction <= 1.0):
            raise ConfigError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        if not (0.0 <= self.gamma < 1.0):
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        for name in ("lr", "soft_tau"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("batch_repr", "batch_policy", "epochs", "steps_per_epoch",
                     "eval_trajectories", "buffer_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.repr_steps < 0 or self.policy_steps < 0 or self.initial_transitions < 0:
            raise ConfigError("step counts must be non-negative")
        if self.alpha_y < 0:
            raise ConfigError(f"alpha_y must be >= 0, got {self.alpha_y}")
        if self.kl_weight < 0:
            raise ConfigError(f"kl_weight must be >= 0, got {self.kl_weight}")
        if self.recon_weight < 0:
            raise ConfigError(f"recon_weight must be >= 0, got {self.recon_weight}")
        if self.mean_period <= 0 or self.period_std < 0 or self.period_std >= self.mean_period:
            raise ConfigError("need mean_period > period_std >= 0")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}")
        if self.encoder_grads not in ("all", "kl_only"):
            raise ConfigError("encoder_grads must be 'all' or 'kl_only'")
        episode_len = self.resolved_episode_len()
        if episode_len < self.window + 2:
            raise ConfigError(
                f"episode_len {episode_len} too short for window {self.window}"
            )
        return self

    def resolved_episode_len(self):
        if self.episode_len:
            return self.episode_len
        return {"veltrack": 800, "oscdamp": 800, "glucosim": 200}[self.env]

    def with_overrides(self, **kwargs):
        data = asdict(self)
        data.update(kwargs)
        return ExperimentConfig(**_coerce(data))

    def paper_scale(self):
        """Full-scale counts: large buffer and long phase schedules."""
        return self.with_overrides(
            buffer_capacity=10_000_000,
            repr_steps=200,
            policy_steps=2000,
            batch_repr=256,
            batch_policy=256,
            epochs=200,
            initial_transitions=200 if self.env != "glucosim" else 400,
        )

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**_coerce(data)).validate()


def _coerce(data):
    data = dict(data)
    for key in ("encoder_hidden", "rl_hidden", "decoder_hidden"):
        if key in data and data[key] is not None:
            data[key] = tuple(int(x) for x in data[key])
    return data


def desk_config(**overrides):
    """Small configuration that trains in seconds-to-minutes on a CPU."""
    base = ExperimentConfig(
        window=32,
        encoder_hidden=(64, 64),
        rl_hidden=(64, 64),
        batch_repr=64,
        batch_policy=64,
        repr_steps=50,
        policy_steps=60,
        epochs=20,
        steps_per_epoch=800,
        initial_transitions=400,
        buffer_capacity=60_000,
    )
    return base.with_overrides(**overrides).validate()
