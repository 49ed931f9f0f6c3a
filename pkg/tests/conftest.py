import numpy as np
import pytest

from speechdecomp.codebook import train_codebook
from speechdecomp.synthetic import training_material


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def codebooks():
    """Small unvoiced (8) and noise (4) codebooks trained on synthetic AR material."""
    rng = np.random.default_rng(0)
    cb_u = train_codebook(training_material(rng, "unvoiced"), 14, 8, kind="unvoiced")
    cb_c = train_codebook(training_material(rng, "noise"), 14, 4, kind="noise")
    return cb_u, cb_c
