"""Experiment configuration: one serializable object per run.

Every run report embeds its full config, and a config loaded back from JSON
compares equal to the one that wrote it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .landmarks import DEFAULT_MAGNIFICATION, PATTERN_NAMES
from .losses import CENTER_MODES, LossWeights
from .model import ModelConfig

F1_AVERAGES = ("macro", "micro")


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the generated dataset, used when no path is given."""

    n_subjects: int = 10
    samples_per_subject: int = 6
    n_classes: int = 5
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.samples_per_subject < 1:
            raise ValueError("samples_per_subject must be >= 1")
        if not 2 <= self.n_classes <= len(PATTERN_NAMES):
            raise ValueError(
                f"n_classes must be in [2, {len(PATTERN_NAMES)}]"
            )
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "samples_per_subject": self.samples_per_subject,
            "n_classes": self.n_classes,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient descent with momentum, plus a plateau early stop.

    Training halts once the epoch-mean loss has not improved by more than
    plateau_tol for plateau_patience consecutive epochs.
    """

    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 300
    batch_size: int = 16
    plateau_patience: int = 25
    plateau_tol: float = 1e-4

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.plateau_patience < 1:
            raise ValueError("plateau_patience must be >= 1")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "momentum": self.momentum,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "plateau_patience": self.plateau_patience,
            "plateau_tol": self.plateau_tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class AugmentConfig:
    """Crop-style jitter applied to training samples only.

    copies is the number of jittered duplicates added per training sample;
    zero disables augmentation.
    """

    copies: int = 0
    max_scale: float = 0.05
    max_shift: float = 3.0

    def __post_init__(self):
        if self.copies < 0:
            raise ValueError("copies must be >= 0")
        if self.max_scale < 0 or self.max_scale >= 1:
            raise ValueError("max_scale must be in [0, 1)")
        if self.max_shift < 0:
            raise ValueError("max_shift must be >= 0")

    def to_dict(self) -> dict:
        return {
            "copies": self.copies,
            "max_scale": self.max_scale,
            "max_shift": self.max_shift,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs: data source, model, losses, optimizer, seed."""

    dataset: str | None = None
    synth: SynthSpec | None = field(default_factory=SynthSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    magnification: float = DEFAULT_MAGNIFICATION
    center_rate: float = 0.5
    center_mode: str = "ema"
    f1_average: str = "macro"

    def __post_init__(self):
        if self.dataset is None and self.synth is None:
            raise ValueError("config needs a dataset path or a synth spec")
        if self.magnification <= 0:
            raise ValueError("magnification must be > 0")
        if not 0.0 < self.center_rate <= 1.0:
            raise ValueError("center_rate must be in (0, 1]")
        if self.center_mode not in CENTER_MODES:
            raise ValueError(f"center_mode must be one of {CENTER_MODES}")
        if self.f1_average not in F1_AVERAGES:
            raise ValueError(f"f1_average must be one of {F1_AVERAGES}")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "synth": self.synth.to_dict() if self.synth else None,
            "model": self.model.to_dict(),
            "loss_weights": self.loss_weights.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "augment": self.augment.to_dict(),
            "seed": self.seed,
            "magnification": self.magnification,
            "center_rate": self.center_rate,
            "center_mode": self.center_mode,
            "f1_average": self.f1_average,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        if known.get("synth") is not None:
            known["synth"] = SynthSpec.from_dict(known["synth"])
        if "model" in known:
            known["model"] = ModelConfig.from_dict(known["model"])
        if "loss_weights" in known:
            known["loss_weights"] = LossWeights.from_dict(known["loss_weights"])
        if "optimizer" in known:
            known["optimizer"] = OptimizerConfig.from_dict(known["optimizer"])
        if "augment" in known:
            known["augment"] = AugmentConfig.from_dict(known["augment"])
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValueError(f"unknown config fields: {unknown}")
        return cls(**known)


def dumps_config(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_config(config) + "\n")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))
