"""Model quality metrics and bounded reachability queries."""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._stats import sequence_log_likelihoods
from .models import Dataset, Model


class MeanLogLikelihood(NamedTuple):
    """Per-sequence mean log-likelihood plus the number of zero-likelihood
    sequences (multiplicity-weighted)."""

    value: float
    zero_sequences: int


def mean_log_likelihood(
    model: Model, dataset: Dataset, skip_zero: bool = False
) -> MeanLogLikelihood:
    """Multiplicity-weighted mean log-likelihood per sequence, in nats.

    By default any impossible sequence makes the value -inf (the count says
    how many there were).  With ``skip_zero`` the mean is taken over the
    possible sequences only; it is nan when none remain.
    """
    if dataset.num_sequences < 1:
        raise ValueError("dataset must contain at least one observation")
    lls = sequence_log_likelihoods(model, dataset)
    weights = np.array(dataset.counts, dtype=np.float64)
    finite = np.isfinite(lls)
    zero_count = int(weights[~finite].sum())
    if skip_zero:
        if not finite.any():
            return MeanLogLikelihood(float("nan"), zero_count)
        value = float((weights[finite] * lls[finite]).sum() / weights[finite].sum())
        return MeanLogLikelihood(value, zero_count)
    if zero_count:
        return MeanLogLikelihood(float("-inf"), zero_count)
    value = float((weights * lls).sum() / weights.sum())
    return MeanLogLikelihood(value, zero_count)


class KlEstimate(NamedTuple):
    """Empirical KL divergence estimate plus the number of test sequences the
    hypothesis assigns zero probability (multiplicity-weighted)."""

    value: float
    zero_sequences: int


def kl_estimate(true_model: Model, hypothesis: Model, test: Dataset) -> KlEstimate:
    """Mean of ln L(true, o) - ln L(hyp, o) over the test multiset.

    Zero exactly when the hypothesis is the true model; +inf (with a count)
    when the hypothesis cannot generate some test sequence.  Every test
    sequence must be possible under the true model.
    """
    if test.num_sequences < 1:
        raise ValueError("test dataset must contain at least one observation")
    lls_true = sequence_log_likelihoods(true_model, test)
    if not np.isfinite(lls_true).all():
        bad = int(np.argmin(np.isfinite(lls_true)))
        raise ValueError(
            f"test sequence {str(test.sequences[bad])!r} is impossible under the true model"
        )
    lls_hyp = sequence_log_likelihoods(hypothesis, test)
    weights = np.array(test.counts, dtype=np.float64)
    finite = np.isfinite(lls_hyp)
    zero_count = int(weights[~finite].sum())
    if zero_count:
        return KlEstimate(float("inf"), zero_count)
    value = float((weights * (lls_true - lls_hyp)).sum() / weights.sum())
    return KlEstimate(value, zero_count)


def _value_iteration(
    model: Model, goal_mass: np.ndarray, carry: np.ndarray, steps: int
) -> np.ndarray:
    """Optimal hit probability within ``steps`` further emissions.

    goal_mass[a, s] is the one-step probability of emitting the target after
    action a in state s; carry[a, s, u] the probability of emitting a
    non-terminating label and reaching state u.
    """
    V = np.zeros(model.n_states)
    for _ in range(steps):
        V = np.max(goal_mass + carry @ V, axis=0)
    return V


def bounded_reachability(
    model: Model, goal: str, horizon: int, strict: bool = False
) -> float:
    """Maximum probability, over all schedulers, of emitting ``goal`` within
    the first ``horizon`` labels (strictly fewer when ``strict``).

    The initial emission counts as step 1.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    g = model.alphabet.index(goal)
    allowed = horizon - 1 if strict else horizon
    if allowed < 1:
        return 0.0
    goal_mass = model.tau[:, :, g, :].sum(axis=2)  # (A, S)
    keep = np.ones(model.n_labels, dtype=bool)
    keep[g] = False
    carry = model.tau[:, :, keep, :].sum(axis=2)  # (A, S, S)
    V = _value_iteration(model, goal_mass, carry, allowed - 1)
    initial_goal = float(model.iota[g, :].sum())
    return initial_goal + float(model.iota[keep, :].sum(axis=0) @ V)


def bounded_until(model: Model, avoid: str, goal: str, horizon: int) -> float:
    """Maximum probability of reaching ``goal`` within ``horizon`` emissions
    while never emitting ``avoid`` first."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if avoid == goal:
        raise ValueError("avoid and goal labels must differ")
    g = model.alphabet.index(goal)
    av = model.alphabet.index(avoid)
    goal_mass = model.tau[:, :, g, :].sum(axis=2)
    keep = np.ones(model.n_labels, dtype=bool)
    keep[g] = False
    keep[av] = False
    carry = model.tau[:, :, keep, :].sum(axis=2)
    V = _value_iteration(model, goal_mass, carry, horizon - 1)
    initial_goal = float(model.iota[g, :].sum())
    return initial_goal + float(model.iota[keep, :].sum(axis=0) @ V)


@dataclass
class MetricsRow:
    """Evaluation results for one model, ready for tabular reports."""

    model_id: str
    train_ll: MeanLogLikelihood | None = None
    test_ll: MeanLogLikelihood | None = None
    kl: KlEstimate | None = None
    reachability: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        def fmt(x: float) -> float | str:
            return x if math.isfinite(x) else repr(x)

        doc: dict = {"model": self.model_id}
        if self.train_ll is not None:
            doc["train_ll_per_seq"] = fmt(self.train_ll.value)
            doc["train_zero_sequences"] = self.train_ll.zero_sequences
        if self.test_ll is not None:
            doc["test_ll_per_seq"] = fmt(self.test_ll.value)
            doc["test_zero_sequences"] = self.test_ll.zero_sequences
        if self.kl is not None:
            doc["kl"] = fmt(self.kl.value)
            doc["kl_zero_sequences"] = self.kl.zero_sequences
        for query, value in self.reachability.items():
            doc[query] = value
        return doc
