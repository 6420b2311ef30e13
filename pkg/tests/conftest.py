import numpy as np
import pytest

from stmdplus.params import ClassifierParams, PipelineParams
from stmdplus.synth import SequenceSpec, generate_sequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return PipelineParams()


@pytest.fixture
def classifier():
    return ClassifierParams()


def make_sequence(**overrides):
    """Synthetic sequence built from spec keys, e.g. make_sequence(frames=50, background="uniform:128")."""
    return generate_sequence(SequenceSpec(**overrides))


@pytest.fixture
def small_target_sequence():
    # static white background, black 5x5 target moving right at 250 px/s
    return make_sequence(
        background="uniform:255",
        view_w=160,
        view_h=48,
        bg_velocity=0,
        target_velocity=250,
        start_x=30,
        start_y=24,
        frames=260,
    )


@pytest.fixture
def sequence_factory():
    return make_sequence
