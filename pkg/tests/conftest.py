import numpy as np
import pytest

from shuttlekit.corpus import generate_corpus
from shuttlekit.dynamics import AeroParams

CORPUS_SEED = 1234


@pytest.fixture(scope="session")
def params():
    return AeroParams()


@pytest.fixture(scope="session")
def corpus_records():
    """Accepted records with trajectories; enough launches for 20+ hits."""
    records, stats = generate_corpus(4096, seed=CORPUS_SEED,
                                     include_trajectory=True)
    assert len(records) >= 20, f"only {len(records)} accepted"
    return records


@pytest.fixture(scope="session")
def records20(corpus_records):
    return corpus_records[:20]


@pytest.fixture()
def rng():
    return np.random.default_rng(99)
