import numpy as np
import pytest

from tkgode.data import QuadrupleStore, generate_synthetic_tkg
from tkgode.encoder import GraphHistory


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_store():
    # 5 entities, 2 relations, 6 timestamps of random facts
    return generate_synthetic_tkg(5, 2, 6, "random", seed=1)


@pytest.fixture
def tiny_history(tiny_store):
    return GraphHistory(tiny_store, time_span=1.0)


def make_store(events, n_ent, n_rel, T, train_end=None, valid_end=None):
    train_end = T if train_end is None else train_end
    valid_end = train_end if valid_end is None else valid_end
    return QuadrupleStore(np.asarray(events, dtype=np.int64).reshape(-1, 4),
                          n_ent, n_rel, T, train_end, valid_end)
