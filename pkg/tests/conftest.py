"""Shared helpers: random models and random datasets for property sweeps."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mdplearn.builtin import random_model
from mdplearn.models import ActionSet, Alphabet, Dataset, Model, Observation, UniformScheduler
from mdplearn.sim import sample_trace, simulate

LABEL_POOL = ["a", "b", "c", "d"]
ACTION_POOL = ["u", "v", "w"]


def degenerate_posterior_model() -> Model:
    """A model with an observation whose likelihood is representable but whose
    posteriors are not.

    Under ``["x", "m", "y"]`` almost all forward mass reaches state 1, which
    can never emit the final ``"y"``; the only consistent branch goes through
    state 2 with subnormal probability.  The sequence likelihood is a plain
    (if tiny) double, yet forward and backward supports barely overlap, so the
    normalized posterior denominators cannot be resolved at double precision.
    """
    alphabet = Alphabet(["x", "m", "y"])
    actions = ActionSet(["go"])
    x, m, y = (alphabet.index(s) for s in ("x", "m", "y"))
    iota = np.zeros((len(alphabet), 3))
    iota[x, 0] = 1.0
    tau = np.zeros((1, 3, len(alphabet), 3))
    # 1.0 + 1e-310 rounds to 1.0, so the row still sums to one in doubles.
    tau[0, 0, m, 1] = 1.0
    tau[0, 0, m, 2] = 1e-310
    tau[0, 1, m, 1] = 1.0
    tau[0, 2, y, 2] = 1.0
    return Model(alphabet, actions, iota, tau)


def make_random_model(
    rng: np.random.Generator,
    max_states: int = 4,
    max_labels: int = 3,
    max_actions: int = 2,
) -> Model:
    n_states = int(rng.integers(1, max_states + 1))
    n_labels = int(rng.integers(1, max_labels + 1))
    n_actions = int(rng.integers(1, max_actions + 1))
    return random_model(
        n_states,
        LABEL_POOL[:n_labels],
        ACTION_POOL[:n_actions],
        seed=int(rng.integers(2**31)),
    )


def sample_dataset(
    model: Model,
    rng: np.random.Generator,
    count: int,
    max_length: int = 5,
) -> Dataset:
    """Traces of mixed lengths drawn from the model under uniform actions."""
    system = simulate(model, int(rng.integers(2**31)))
    scheduler = UniformScheduler(model.actions)
    observations = []
    for _ in range(count):
        length = int(rng.integers(1, max_length + 1))
        observations.append(sample_trace(system, scheduler, length, rng))
    return Dataset.from_observations(observations)


def permute_model(model: Model, perm) -> Model:
    p = np.asarray(perm)
    return Model(model.alphabet, model.actions, model.iota[:, p], model.tau[:, p][:, :, :, p])


def random_observation(model: Model, rng: np.random.Generator, length: int) -> Observation:
    """Uniformly random symbols from the model's vocabulary (may be impossible)."""
    labels = [str(rng.choice(model.alphabet.symbols)) for _ in range(length)]
    actions = [str(rng.choice(model.actions.symbols)) for _ in range(length - 1)]
    return Observation(labels, actions)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
