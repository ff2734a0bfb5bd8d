import numpy as np
import pytest

from attnhawkes.domain import EventSequence
from attnhawkes.model import ModelParams, param_shapes


def random_params(cfg, rng, scale=0.5):
    return ModelParams(**{n: rng.normal(0.0, scale, size=s) for n, s in param_shapes(cfg).items()})


def random_sequence(rng, length, num_types, horizon):
    times = np.sort(rng.uniform(horizon * 0.01, horizon, size=length))
    assert len(np.unique(times)) == length
    types = rng.integers(0, num_types, size=length)
    return EventSequence(times=times, types=types, horizon=horizon, num_types=num_types)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
