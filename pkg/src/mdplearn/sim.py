"""Trace generation against live or recorded systems.

A SystemHandle hides whether labels come from a simulated model or from a
recorded dataset: ``init()`` starts a fresh trace and returns its first
label, ``step(action)`` returns the next one.  Samplers drive a handle with
a scheduler and a trace-length distribution.
"""

from collections.abc import Iterable
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .models import Dataset, Model, Observation, Scheduler

# Hard cap on sampled trace lengths; geometric tails beyond this are clipped.
MAX_TRACE_LENGTH = 10_000


class ProtocolError(RuntimeError):
    """A SystemHandle was driven out of order (step before init, or past a
    recorded trace)."""


@runtime_checkable
class SystemHandle(Protocol):
    """Label source for one trace at a time; re-init starts the next trace."""

    def init(self) -> str: ...

    def step(self, action: str) -> str: ...


def _sample_index(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-transform draw from a nonnegative weight vector."""
    cumulative = np.cumsum(probabilities)
    total = cumulative[-1]
    if not total > 0.0:  # also catches nan
        raise ValueError(f"weight vector has no positive mass (sum {total})")
    u = rng.random() * total
    return int(np.searchsorted(cumulative, u, side="right"))


class SimulatedSystem:
    """SystemHandle that samples runs of a model with its own seeded stream.

    The hidden state is internal; only labels escape.  Unavailable actions
    behave like any other row: a Dirac (err, s) row emits ``err`` and leaves
    the state where it was.
    """

    def __init__(self, model: Model, seed: int | np.random.SeedSequence):
        self.model = model
        self._rng = np.random.default_rng(seed)
        self._state: int | None = None
        S = model.n_states
        L = model.n_labels
        self._iota_flat = model.iota.reshape(L * S)
        self._tau_flat = model.tau.reshape(model.n_actions, S, L * S)

    def init(self) -> str:
        joint = _sample_index(self._iota_flat, self._rng)
        label, self._state = divmod(joint, self.model.n_states)
        return self.model.alphabet.symbols[label]

    def step(self, action: str) -> str:
        if self._state is None:
            raise ProtocolError("step() before init()")
        a = self.model.actions.index(action)
        joint = _sample_index(self._tau_flat[a, self._state], self._rng)
        label, self._state = divmod(joint, self.model.n_states)
        return self.model.alphabet.symbols[label]


def simulate(model: Model, seed: int | np.random.SeedSequence) -> SimulatedSystem:
    """Fresh simulated handle for the model, deterministic in the seed."""
    return SimulatedSystem(model, seed)


class ReplaySystem:
    """SystemHandle that serves recorded observations in order.

    Each ``init()`` moves to the next recorded trace.  Actions must match
    the recording, and stepping past the end of a trace (or initializing
    past the last one) is a protocol error.
    """

    def __init__(self, observations: Iterable[Observation]):
        self._observations = list(observations)
        self._trace = -1
        self._pos: int | None = None

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "ReplaySystem":
        expanded = []
        for obs, count in dataset:
            expanded.extend([obs] * count)
        return cls(expanded)

    def init(self) -> str:
        self._trace += 1
        if self._trace >= len(self._observations):
            raise ProtocolError("no recorded traces left to replay")
        self._pos = 0
        return self._observations[self._trace].labels[0]

    def step(self, action: str) -> str:
        if self._pos is None:
            raise ProtocolError("step() before init()")
        obs = self._observations[self._trace]
        if self._pos >= len(obs.actions):
            raise ProtocolError(
                f"recorded trace {self._trace} has only {obs.length} labels"
            )
        expected = obs.actions[self._pos]
        if action != expected:
            raise ProtocolError(
                f"replay expected action {expected!r} at step {self._pos + 1}, got {action!r}"
            )
        self._pos += 1
        return obs.labels[self._pos]


@dataclass(frozen=True)
class LengthSampler:
    """Trace-length distribution: fixed, geometric, or offset + geometric.

    Geometric draws use inverse transform on one uniform variate:
    P(T = offset + k) = (1-p)^(k-1) * p for k >= 1, clipped at
    MAX_TRACE_LENGTH.
    """

    offset: int
    p: float | None

    @classmethod
    def fixed(cls, length: int) -> "LengthSampler":
        if length < 1:
            raise ValueError(f"trace length must be >= 1, got {length}")
        return cls(offset=length, p=None)

    @classmethod
    def geometric(cls, p: float) -> "LengthSampler":
        return cls.shifted_geometric(0, p)

    @classmethod
    def shifted_geometric(cls, offset: int, p: float) -> "LengthSampler":
        if not 0.0 < p <= 1.0:
            raise ValueError(f"geometric parameter must lie in (0, 1], got {p}")
        if offset < 0:
            raise ValueError(f"offset must be >= 0, got {offset}")
        return cls(offset=offset, p=p)

    def sample(self, rng: np.random.Generator) -> int:
        if self.p is None:
            return self.offset
        if self.p == 1.0:
            k = 1
        else:
            u = rng.random()
            k = 1 + int(np.floor(np.log1p(-u) / np.log1p(-self.p)))
        return min(self.offset + k, MAX_TRACE_LENGTH)


def sample_length(sampler: LengthSampler, rng: np.random.Generator) -> int:
    return sampler.sample(rng)


def sample_trace(
    system: SystemHandle,
    scheduler: Scheduler,
    length: int,
    rng: np.random.Generator,
) -> Observation:
    """Drive one trace of the given length out of the system."""
    labels = [system.init()]
    actions: list[str] = []
    for _ in range(length - 1):
        dist = scheduler.action_distribution(labels, actions)
        a = _sample_index(np.asarray(dist, dtype=np.float64), rng)
        action = scheduler.actions.symbols[a]
        actions.append(action)
        labels.append(system.step(action))
    return Observation(labels, actions)


def passive_sample(
    system: SystemHandle,
    scheduler: Scheduler,
    length_sampler: LengthSampler,
    count: int,
    rng: np.random.Generator,
) -> Dataset:
    """Draw ``count`` traces with scheduler-chosen actions; aggregate them."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    observations = []
    for _ in range(count):
        length = length_sampler.sample(rng)
        observations.append(sample_trace(system, scheduler, length, rng))
    return Dataset.from_observations(observations)
