"""
Author: qianye
Date: 2025-06-08 20:32:52
LastEditTime: 2025-10-14 10:27:51
Description: experiment configuration
"""

# coding:utf-8
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from qfluentwidgets import ConfigItem, ConfigSerializer, ConfigValidator, RangeValidator

from .exception_handler import ConfigError
from .setting import DEFAULT_EVAL_FRACTION
from .utils import getBundledConfigFolder


class NumberValidator(RangeValidator):
    """ finite number in [min, max]; `open` excludes the bounds """

    def __init__(self, min=-math.inf, max=math.inf, open=False, integer=False):
        super().__init__(min, max)
        self.open = open
        self.integer = integer

    def validate(self, value) -> bool:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            return False
        if self.integer and int(value) != value:
            return False
        if self.open:
            return self.min < value < self.max
        return super().validate(value)

    def __repr__(self):
        lo, hi = ("(", ")") if self.open else ("[", "]")
        return f"{lo}{self.min}, {self.max}{hi}"


class DimsValidator(ConfigValidator):
    """ list of at least `minLength` positive integers """

    def __init__(self, minLength=2):
        self.minLength = minLength

    def validate(self, value) -> bool:
        return (
            isinstance(value, (list, tuple))
            and len(value) >= self.minLength
            and all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value)
        )

    def __repr__(self):
        return f"list of >= {self.minLength} positive integers"


class NormsValidator(ConfigValidator):
    """ non-negative, strictly increasing, starting at 0 """

    def validate(self, value) -> bool:
        if not isinstance(value, (list, tuple)) or not value:
            return False
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 for v in value):
            return False
        return value[0] == 0 and all(a < b for a, b in zip(value, value[1:]))

    def __repr__(self):
        return "non-negative strictly increasing numbers starting at 0"


class TupleSerializer(ConfigSerializer):
    """ tuples are JSON lists """

    def serialize(self, value):
        return list(value) if isinstance(value, tuple) else value

    def deserialize(self, value):
        return tuple(value) if isinstance(value, list) else value


def _item(group: str, name: str, default, validator: ConfigValidator = None, serializer: ConfigSerializer = None):
    """ dataclass field backed by a ConfigItem, which carries the JSON key, validator and serializer """
    if isinstance(default, tuple) and serializer is None:
        serializer = TupleSerializer()
    return field(default=default, metadata={"item": ConfigItem(group, name, default, validator, serializer)})


class ConfigGroup:
    """ JSON (de)serialization and validation shared by every config dataclass """

    group = ""

    def validate(self):
        for f in fields(self):
            value = getattr(self, f.name)
            item = f.metadata.get("item")
            if isinstance(value, ConfigGroup):
                value.validate()
            elif item is not None and not item.validator.validate(value):
                raise ConfigError(f"invalid value {value!r} for '{item.key}', expected {item.validator!r}")
        return self

    @staticmethod
    def _key(f) -> str:
        item = f.metadata.get("item")
        return item.name if item is not None else f.name

    def to_dict(self) -> Dict[str, Any]:
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            item = f.metadata.get("item")
            if isinstance(value, ConfigGroup):
                value = value.to_dict()
            elif item is not None:
                value = item.serializer.serialize(value)
            data[self._key(f)] = value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        if not isinstance(data, dict):
            raise ConfigError(f"'{cls.group}' must be a JSON object")

        known = {cls._key(f): f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown key(s) in '{cls.group}': {', '.join(sorted(unknown))}")

        kwargs = {}
        for key, value in data.items():
            f = known[key]
            item = f.metadata.get("item")
            kwargs[f.name] = item.serializer.deserialize(value) if item is not None else value

        return cls(**kwargs)


@dataclass(frozen=True)
class ArchConfig(ConfigGroup):
    """
    Block widths, each `[in, ..., out]`

    shared: p -> h; encoder: h + c -> ... -> latent; decoder: latent + c -> ... -> p;
    predictor: h -> ... -> c, with c = 1 for binary tasks and c = l otherwise
    """

    group = "arch"

    shared_dims: Tuple[int, ...] = _item(group, "shared_dims", (30, 15), DimsValidator())
    encoder_dims: Tuple[int, ...] = _item(group, "encoder_dims", (16, 8, 5), DimsValidator())
    decoder_dims: Tuple[int, ...] = _item(group, "decoder_dims", (6, 8, 15, 30), DimsValidator())
    predictor_dims: Tuple[int, ...] = _item(group, "predictor_dims", (15, 15, 1), DimsValidator())
    latent_dim: int = _item(group, "latent_dim", 5, NumberValidator(1, integer=True))

    @property
    def condition_dim(self) -> int:
        return self.predictor_dims[-1]

    @property
    def input_dim(self) -> int:
        return self.shared_dims[0]

    def checkWidths(self, p: Optional[int] = None, n_classes: Optional[int] = None) -> "ArchConfig":
        """ the width invariants between blocks, optionally against a dataset """
        self.validate()
        h, c, k = self.shared_dims[-1], self.condition_dim, self.latent_dim
        rules = [
            (self.encoder_dims[0] == h + c, f"encoder input {self.encoder_dims[0]} != shared output {h} + condition {c}"),
            (self.encoder_dims[-1] == k, f"encoder output {self.encoder_dims[-1]} != latent_dim {k}"),
            (self.decoder_dims[0] == k + c, f"decoder input {self.decoder_dims[0]} != latent_dim {k} + condition {c}"),
            (self.decoder_dims[-1] == self.input_dim, f"decoder output {self.decoder_dims[-1]} != input width {self.input_dim}"),
            (self.predictor_dims[0] == h, f"predictor input {self.predictor_dims[0]} != shared output {h}"),
        ]
        if p is not None:
            rules.append((self.input_dim == p, f"shared input {self.input_dim} != encoded width p={p}"))
        if n_classes is not None:
            expected = 1 if n_classes == 2 else n_classes
            rules.append((c == expected, f"condition width {c} != {expected} for {n_classes} classes"))

        for ok, message in rules:
            if not ok:
                raise ConfigError(f"inconsistent architecture: {message}")
        return self


@dataclass(frozen=True)
class TrainingConfig(ConfigGroup):
    """ loss weights and optimizer schedule; lambda1 KL, lambda2 predictor, lambda3 reconstruction """

    group = "train"

    lambda1: float = _item(group, "lambda1", 1.0, NumberValidator(0))
    lambda2: float = _item(group, "lambda2", 0.1, NumberValidator(0))
    lambda3: float = _item(group, "lambda3", 0.001, NumberValidator(0))
    learning_rate: float = _item(group, "lr", 0.001, NumberValidator(0, open=True))
    epochs: int = _item(group, "epochs", 100, NumberValidator(1, integer=True))
    batch_size: int = _item(group, "batch_size", 30, NumberValidator(1, integer=True))
    seed: int = _item(group, "seed", 0, NumberValidator(0, integer=True))


@dataclass(frozen=True)
class PosthocConfig(ConfigGroup):
    """ predictor stage uses lr/epochs/batch_size only; cVAE stage uses lambda1 (KL) and lambda3 """

    group = "posthoc"

    predictor: TrainingConfig = field(default_factory=lambda: TrainingConfig(0.0, 1.0, 0.0, epochs=100))
    cvae: TrainingConfig = field(default_factory=lambda: TrainingConfig(0.001, 0.0, 1.0, epochs=30))

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("'posthoc' must be a JSON object")
        unknown = set(data) - {"predictor", "cvae"}
        if unknown:
            raise ConfigError(f"unknown key(s) in 'posthoc': {', '.join(sorted(unknown))}")
        defaults = cls()
        return cls(
            predictor=_mergeTraining(defaults.predictor, data.get("predictor", {}), "posthoc.predictor"),
            cvae=_mergeTraining(defaults.cvae, data.get("cvae", {}), "posthoc.cvae"),
        )


@dataclass(frozen=True)
class PerturbationSpec(ConfigGroup):
    """ latent offsets of the synthetic study: `repeats` random directions per norm """

    group = "synth"

    norms: Tuple[float, ...] = _item(group, "norms", (0.0, 0.5, 1.0, 2.0, 3.0, 5.0), NormsValidator())
    repeats: int = _item(group, "repeats", 10, NumberValidator(1, integer=True))
    seed: int = _item(group, "seed", 0, NumberValidator(0, integer=True))


@dataclass(frozen=True)
class SynthConfig(ConfigGroup):

    group = "synth"

    n: int = _item(group, "n", 10000, NumberValidator(3, integer=True))
    norms: Tuple[float, ...] = _item(group, "norms", (0.0, 0.5, 1.0, 2.0, 3.0, 5.0), NormsValidator())
    repeats: int = _item(group, "repeats", 10, NumberValidator(1, integer=True))

    def perturbation(self, seed: int) -> PerturbationSpec:
        return PerturbationSpec(tuple(float(v) for v in self.norms), self.repeats, seed)


def _mergeTraining(base: TrainingConfig, data: Dict[str, Any], group: str) -> TrainingConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"'{group}' must be a JSON object")
    merged = base.to_dict()
    unknown = set(data) - set(merged)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{group}': {', '.join(sorted(unknown))}")
    merged.update(data)
    return TrainingConfig.from_dict(merged)


BUILTIN_DATASETS = ("breast_cancer", "synthetic")


@dataclass(frozen=True)
class ExperimentConfig(ConfigGroup):
    """
    One experiment: dataset source, architecture, joint and post-hoc training,
    evaluation fraction, seed and output directory
    """

    group = "experiment"

    dataset: str = _item(group, "dataset", "breast_cancer")
    csv_path: Optional[str] = _item(group, "csv_path", None)
    schema_path: Optional[str] = _item(group, "schema_path", None)
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainingConfig = field(default_factory=TrainingConfig)
    posthoc: PosthocConfig = field(default_factory=PosthocConfig)
    eval_fraction: float = _item(group, "eval_fraction", DEFAULT_EVAL_FRACTION, NumberValidator(0, 1, open=True))
    seed: int = _item(group, "seed", 0, NumberValidator(0, integer=True))
    out_dir: str = _item(group, "out_dir", "runs/default")
    synth: SynthConfig = field(default_factory=SynthConfig)

    @property
    def isBuiltin(self) -> bool:
        return self.dataset in BUILTIN_DATASETS

    def validate(self):
        super().validate()
        if not isinstance(self.dataset, str) or not self.dataset:
            raise ConfigError("'dataset' must be a non-empty name")
        if not self.isBuiltin:
            for key in ("csv_path", "schema_path"):
                path = getattr(self, key)
                if not path:
                    raise ConfigError(f"dataset '{self.dataset}' needs '{key}' (not bundled)")
                if not Path(path).is_file():
                    raise ConfigError(f"'{key}' does not exist: {path}")
        return self

    def trainingConfig(self) -> TrainingConfig:
        """ joint training config carrying the experiment seed """
        return replace(self.train, seed=self.seed)

    def withOverrides(self, seed: Optional[int] = None, out_dir: Optional[str] = None,
                      csv_path: Optional[str] = None, schema_path: Optional[str] = None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = seed
        if out_dir is not None:
            changes["out_dir"] = str(out_dir)
        if csv_path is not None:
            changes["csv_path"] = str(csv_path)
        if schema_path is not None:
            changes["schema_path"] = str(schema_path)
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")

        data = dict(data)
        nested = {}
        defaults = cls()
        if "arch" in data:
            nested["arch"] = ArchConfig.from_dict(data.pop("arch"))
        if "train" in data:
            nested["train"] = _mergeTraining(defaults.train, data.pop("train"), "train")
        if "posthoc" in data:
            nested["posthoc"] = PosthocConfig.from_dict(data.pop("posthoc"))
        if "synth" in data:
            synth = data.pop("synth")
            if not isinstance(synth, dict):
                raise ConfigError("'synth' must be a JSON object")
            nested["synth"] = SynthConfig.from_dict({**defaults.synth.to_dict(), **synth})

        base = super(ExperimentConfig, cls).from_dict(data)
        return replace(base, **nested)


def _resolve(path: Optional[str], folder: Path) -> Optional[str]:
    if not path:
        return path
    p = Path(path)
    return str(p if p.is_absolute() else (folder / p))


def load_config(path) -> ExperimentConfig:
    """ read an experiment config; relative data paths are resolved against the file's folder """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file does not exist: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e

    config = ExperimentConfig.from_dict(data)
    folder = path.resolve().parent
    return replace(config,
                   csv_path=_resolve(config.csv_path, folder),
                   schema_path=_resolve(config.schema_path, folder))


# Architecture rows, predictor/generator columns read as (decoder, predictor) so
# that widths chain: decoder [latent + c, ..., p], predictor [h, ..., c]
ARCH_PRESETS: Dict[str, ArchConfig] = {
    "adult": ArchConfig((29, 15), (16, 8, 5), (6, 8, 15, 29), (15, 15, 1), 5),
    "student": ArchConfig((85, 50), (51, 20, 10), (11, 20, 50, 85), (50, 50, 1), 10),
    "titanic": ArchConfig((57, 20), (21, 10, 5), (6, 10, 20, 57), (20, 20, 1), 5),
    "heloc": ArchConfig((35, 15), (16, 8, 5), (6, 8, 15, 35), (15, 15, 1), 5),
    "oulad": ArchConfig((127, 200), (201, 100, 10), (11, 100, 200, 127), (200, 200, 1), 10),
    "breast_cancer": ArchConfig((30, 15), (16, 8, 5), (6, 8, 15, 30), (15, 15, 1), 5),
    "mnist": ArchConfig((784, 400, 40), (50, 400, 20), (30, 400, 784), (40, 10), 20),
    "synthetic": ArchConfig((8, 16), (19, 16, 4), (7, 16, 16, 8), (16, 16, 3), 4),
}

# joint training: lambda1, lambda2, lambda3, lr, epochs, batch size
TRAIN_PRESETS: Dict[str, TrainingConfig] = {
    "adult": TrainingConfig(1, 1, 0.001, 0.001, 250, 128),
    "student": TrainingConfig(1, 0.1, 0.01, 0.001, 50, 30),
    "titanic": TrainingConfig(1, 1, 0.001, 0.001, 100, 30),
    "heloc": TrainingConfig(0.1, 1, 0.01, 0.001, 200, 64),
    "oulad": TrainingConfig(1, 1, 0.01, 0.001, 40, 128),
    "breast_cancer": TrainingConfig(1, 0.1, 0.001, 0.001, 100, 30),
    "mnist": TrainingConfig(1, 8, 0.2, 0.001, 100, 30),
    # predictor weight offsets the sum-reduced cVAE term over a 64-row batch
    "synthetic": TrainingConfig(0.05, 250, 1, 0.001, 40, 64),
}

# post-hoc stages: (predictor lr, epochs, batch), (cVAE reconstruction weight, KL weight, lr, epochs, batch).
# breast_cancer and synthetic predictor stages use the epoch count of their joint schedule.
POSTHOC_PRESETS: Dict[str, PosthocConfig] = {
    name: PosthocConfig(
        predictor=TrainingConfig(0.0, 1.0, 0.0, pLr, pEpochs, pBatch),
        cvae=TrainingConfig(kl, 0.0, rec, cLr, cEpochs, cBatch),
    )
    for name, (pLr, pEpochs, pBatch), (rec, kl, cLr, cEpochs, cBatch) in [
        ("adult", (0.001, 50, 128), (1, 0.001, 0.001, 10, 128)),
        ("student", (0.001, 50, 30), (1, 0.01, 0.001, 50, 30)),
        ("titanic", (0.001, 80, 30), (1, 0.001, 0.001, 20, 30)),
        ("heloc", (0.001, 100, 64), (0.1, 0.01, 0.001, 100, 64)),
        ("oulad", (0.001, 150, 128), (0.1, 0.01, 0.001, 40, 128)),
        ("breast_cancer", (0.001, 100, 30), (1, 0.001, 0.001, 30, 30)),
        ("synthetic", (0.001, 40, 64), (1, 0.05, 0.001, 40, 64)),
    ]
}


def builtin_config(name: str) -> ExperimentConfig:
    """ defaults for a named dataset; CSV-backed datasets still need `csv_path`/`schema_path` """
    if name not in TRAIN_PRESETS or name not in POSTHOC_PRESETS:
        raise ConfigError(
            f"no bundled config named '{name}', choose from {', '.join(sorted(POSTHOC_PRESETS))}")

    return ExperimentConfig(
        dataset=name,
        arch=ARCH_PRESETS[name],
        train=TRAIN_PRESETS[name],
        posthoc=POSTHOC_PRESETS[name],
        out_dir=f"runs/{name}",
    )


def bundled_config_path(name: str) -> Path:
    return getBundledConfigFolder() / f"{name}.json"
