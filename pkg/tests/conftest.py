import numpy as np
import pytest

from ncsched.plant import GenerationConfig, PlantModel, generate_random_ncs


@pytest.fixture
def small_plant() -> PlantModel:
    return generate_random_ncs(GenerationConfig(n_subsystems=3), np.random.default_rng(7))


def diagonal_plant(blocks, gains=None, noise=0.01) -> PlantModel:
    """Uncoupled plant from a list of square diagonal blocks, one input each."""
    from ncsched.plant import block_diag
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    gains = gains or [np.ones((b.shape[0], 1)) for b in blocks]
    n = sum(b.shape[0] for b in blocks)
    return PlantModel(A=block_diag(blocks), B_blocks=tuple(gains), W=np.eye(n), R=np.eye(len(blocks)),
                      noise_cov=tuple(noise * np.eye(b.shape[0]) for b in blocks))


TINY_INI = """
[system]
n_subsystems = 2
n_channels = 1

[dqn]
hidden = 16
learning_rate = 0.001
batch_size = 8
replay_size = 500
warmup = 10

[training]
epochs = 2
horizon = 50

[control]
refresh_period = 50
window = 100

[evaluation]
episodes = 2
horizon = 50
calibration_steps = 100
"""


@pytest.fixture
def tiny_cfg():
    from ncsched.harness.config import loads_config
    return loads_config(TINY_INI)
