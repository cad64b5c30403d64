"""Strict run configuration: nested JSON sections with defaults, unknown keys
rejected by name so config errors are actionable."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Raised for schema violations; carries the offending key paths."""

    def __init__(self, keys):
        self.keys = list(keys)
        super().__init__("invalid config keys: " + ", ".join(self.keys))


@dataclass
class DataConfig:
    dir: str = "data"
    train_cams: list = field(default_factory=lambda: [0, 1])
    eval_cam: int = 2


@dataclass
class ModelConfig:
    n_gaussians: int = 1500
    sh_degree: int = 1
    t: int = 4
    s: int = 2
    lstm_hidden: int = 64
    feature_dim: int = 64
    branch_dim: int = 32
    fusion_hidden: int = 128
    decoder_hidden: int = 128
    clothes_latent_dim: int = 16
    frame_latent_dim: int = 8
    pe_bands: int = 4
    dx_clamp: float = 0.1
    skin_hidden: int = 64
    color_hidden: int = 64
    dir_bands: int = 2


@dataclass
class LossConfig:
    lambda_mask: float = 0.1
    lambda_percep: float = 0.01
    lambda_skin: float = 1.0
    # L2 penalty on the motion deltas: static placement error must live in the
    # canonical Gaussians, not in the (faster-learning) deformation head, or
    # the head saturates its clamp and loses input sensitivity
    lambda_deform: float = 0.01
    mask_l1: bool = True
    skin_samples: int = 512
    skin_decay_frac: float = 0.3
    skin_decay_factor: float = 0.1
    percep_seed: int = 1234


@dataclass
class OptimConfig:
    iterations: int = 20000
    lr_networks: float = 1e-3
    lr_positions: float = 1.6e-4
    lr_gaussians: float = 5e-3
    lr_latents: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 2000


@dataclass
class AblationConfig:
    no_lstm: bool = False
    no_clothes_latent: bool = False
    no_part_segmentation: bool = False


@dataclass
class OutputConfig:
    dir: str = "out"
    background: list = field(default_factory=lambda: [0.0, 0.0, 0.0])


_SECTIONS = {
    "data": DataConfig,
    "model": ModelConfig,
    "loss": LossConfig,
    "optim": OptimConfig,
    "ablation": AblationConfig,
    "output": OutputConfig,
}


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError(["<root: not an object>"])
        bad = []
        kwargs = {}
        for key, value in doc.items():
            if key not in _SECTIONS:
                bad.append(key)
                continue
            section_cls = _SECTIONS[key]
            fields = {f.name: f.type for f in dataclasses.fields(section_cls)}
            if not isinstance(value, dict):
                bad.append(key)
                continue
            sec_kwargs = {}
            for k, v in value.items():
                if k not in fields:
                    bad.append(f"{key}.{k}")
                else:
                    sec_kwargs[k] = v
            kwargs[key] = section_cls(**sec_kwargs)
        if bad:
            raise ConfigError(bad)
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self, indent=1) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def validate(self):
        if self.optim.iterations < 0:
            raise ConfigError(["optim.iterations"])
        for name in ("t", "s", "n_gaussians", "lstm_hidden", "feature_dim"):
            if getattr(self.model, name) < 1:
                raise ConfigError([f"model.{name}"])
        for name in ("lambda_mask", "lambda_percep", "lambda_skin",
                     "lambda_deform"):
            if getattr(self.loss, name) < 0:
                raise ConfigError([f"loss.{name}"])
        if self.model.sh_degree not in (0, 1, 2, 3):
            raise ConfigError(["model.sh_degree"])
        return self
