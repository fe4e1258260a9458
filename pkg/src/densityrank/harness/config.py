"""Line-oriented `key = value` experiment configs with sections.

The raw text is kept verbatim for the run manifest, so a config diff is
always a plain text diff.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from ..models.common import TrainConfig

REGIMES = ("base", "ldt10", "ldt1", "ut")
FAMILIES = ("flow", "ar", "encoder")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "synth"  # synth | cifar10
    path: str = ""  # cifar10 batch directory or file
    seed: int = 21
    n: int = 4000
    side: int = 8
    levels: int = 4
    contrast: float = 3.0
    eval_seed: int = 22
    eval_n: int = 200
    train_tiers: tuple = ()  # restrict training split to these tiers (synth)

    def __post_init__(self):
        if self.kind not in ("synth", "cifar10"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "cifar10" and not self.path:
            raise ConfigError("cifar10 dataset needs a path")


@dataclass(frozen=True)
class ModelSpec:
    family: str = "flow"
    layers: int = 8          # flow coupling layers
    hidden: int = 256        # conditioner / masked / encoder width
    n_hidden: int = 2        # ar hidden layers
    feature_dim: int = 16    # encoder output dim
    arch: str = "mlp"        # encoder arch

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    regime: str = "base"
    ldt_fraction: float = 0.10
    checkpoint_epochs: tuple = ()
    bins: int = 10
    per_bin: int = 8
    seed: int = 0
    dequant_seed: int = 1234
    noise_variance: float = 0.0064
    noise_seed: int = 5
    perturb_train_tier: int = 2
    perturb_simple_tier: int = 1

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}")
        if not 0.0 < self.ldt_fraction <= 1.0:
            raise ConfigError("ldt_fraction must lie in (0, 1]")
        if list(self.checkpoint_epochs) != sorted(self.checkpoint_epochs):
            raise ConfigError("checkpoint_epochs must be sorted ascending")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    raw_text: str = ""

    @property
    def checkpoint_epochs(self):
        eps = self.experiment.checkpoint_epochs
        return tuple(eps) if eps else (self.train.epochs,)


def _coerce(value: str, target_type):
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    if target_type is tuple:
        value = value.strip()
        return tuple(int(v) for v in value.split(",")) if value else ()
    return value


_SECTION_TYPES = {
    "dataset": DatasetSpec,
    "model": ModelSpec,
    "train": TrainConfig,
    "experiment": ExperimentSpec,
}


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e

    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        if not parser.has_section(section):
            kwargs[section] = cls()
            continue
        fields = {f.name: f.type for f in cls.__dataclass_fields__.values()}
        types = {
            name: type(getattr(cls(), name))
            for name in fields
        }
        values = {}
        for key, raw in parser.items(section):
            if key not in fields:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                values[key] = _coerce(raw, types[key])
            except ValueError as e:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from e
        try:
            kwargs[section] = cls(**values)
        except ValueError as e:
            raise ConfigError(str(e)) from e
    return ExperimentConfig(raw_text=text, **kwargs)


def parse_config_file(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
