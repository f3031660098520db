import numpy as np
import pytest
import torch

from semlink.data import synth_generate

torch.set_num_threads(max(1, torch.get_num_threads()))


@pytest.fixture(scope="session")
def small_corpus():
    """102-image synthetic corpus (6 per class), shared across tests."""
    return synth_generate(n_per_class=6, seed=123)


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
