"""Shared fixtures: small configurations that keep the unit tests fast."""

import pytest

from megraph.config import ExperimentConfig, OptimizerConfig, SynthSpec
from megraph.model import ModelConfig


@pytest.fixture
def tiny_model_config():
    """Smallest legal full-variant model."""
    return ModelConfig(
        variant="full",
        channels=4,
        n_actions=2,
        relation_channels=3,
        n_classes=3,
    )


@pytest.fixture
def tiny_experiment(tiny_model_config):
    """Three subjects, three classes, a few epochs; runs in seconds."""
    return ExperimentConfig(
        synth=SynthSpec(
            n_subjects=3,
            samples_per_subject=3,
            n_classes=3,
            noise_sigma=1.0,
            seed=0,
        ),
        model=tiny_model_config,
        optimizer=OptimizerConfig(
            lr=0.02, momentum=0.9, epochs=3, batch_size=4
        ),
        seed=0,
    )
