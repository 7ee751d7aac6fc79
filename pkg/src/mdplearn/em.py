"""Baum-Welch parameter learning for labelled MDPs and Markov chains.

Each iteration runs forward-backward over the dataset and re-estimates iota
and tau from the posteriors; iteration stops once the total log-likelihood
improves by at most epsilon, or after max_iterations.  Likelihood never
decreases along the way.  State/action pairs with zero posterior mass keep
their previous transition row, so states the data never visits are frozen
rather than divided by zero.
"""

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ._stats import SufficientStats, collect_stats, group_by_length
from .inference import Posteriors
from .models import Dataset, Model


class AllSequencesSkippedError(ValueError):
    """Every sequence in the dataset had zero likelihood; nothing to learn from."""


SKIP = "skip"
SMOOTH = "smooth"


@dataclass(frozen=True)
class EmConfig:
    """Stopping rule and zero-likelihood handling for Baum-Welch runs.

    epsilon is the minimum total log-likelihood gain (in nats, over the whole
    dataset) required to continue iterating.  The smoothing policy mixes
    every row of the starting hypothesis with a uniform floor before the
    loop, so that no observation is assigned zero probability at the start;
    the default policy skips zero-likelihood sequences and counts them.
    """

    epsilon: float = 0.01
    max_iterations: int = 300
    zero_likelihood_policy: str = SKIP
    floor: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.zero_likelihood_policy not in (SKIP, SMOOTH):
            raise ValueError(
                f"zero_likelihood_policy must be {SKIP!r} or {SMOOTH!r}, "
                f"got {self.zero_likelihood_policy!r}"
            )
        if self.zero_likelihood_policy == SMOOTH and not 0.0 < self.floor <= 1e-3:
            raise ValueError(f"floor must lie in (0, 1e-3], got {self.floor}")


@dataclass
class EmReport:
    """Record of one Baum-Welch run.

    ``log_likelihood_trace[0]`` is the starting hypothesis's total
    log-likelihood; each later entry follows one update.  ``iterations`` is
    the number of updates performed.  Skipped counts are per evaluation
    (multiplicity-weighted); frozen counts are states whose outgoing rows
    were all left unchanged by an update.
    """

    iterations: int = 0
    log_likelihood_trace: list[float] = field(default_factory=list)
    skipped_sequences: list[int] = field(default_factory=list)
    frozen_states: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "log_likelihood_trace": [
                ll if math.isfinite(ll) else repr(ll) for ll in self.log_likelihood_trace
            ],
            "skipped_sequences": self.skipped_sequences,
            "frozen_states": self.frozen_states,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def smooth_model(model: Model, floor: float) -> Model:
    """Mix iota and every tau row with a uniform distribution of mass floor."""
    if not 0.0 < floor <= 1e-3:
        raise ValueError(f"floor must lie in (0, 1e-3], got {floor}")
    L, S = model.iota.shape
    iota = (1.0 - floor) * model.iota + floor / (L * S)
    tau = (1.0 - floor) * model.tau + floor / (L * S)
    return Model(model.alphabet, model.actions, iota, tau)


def _mstep(model: Model, stats: SufficientStats) -> tuple[Model, int]:
    """Re-estimate iota and tau from expected statistics.

    Rows with zero posterior mass are copied from the current model.
    Returns the new model and the number of frozen states.
    """
    if stats.effective_sequences <= 0.0:
        raise AllSequencesSkippedError(
            "all sequences have zero likelihood under the current hypothesis"
        )
    iota = stats.iota_numerator / stats.effective_sequences
    den = stats.tau_denominator
    visited = den > 0.0
    safe_den = np.where(visited, den, 1.0)
    tau = np.where(
        visited[:, :, None, None],
        stats.tau_numerator / safe_den[:, :, None, None],
        model.tau,
    )
    frozen = int(np.sum(~visited.any(axis=0)))
    return Model(model.alphabet, model.actions, iota, tau), frozen


def update(
    model: Model, dataset: Dataset, posteriors: Sequence[Posteriors | None]
) -> Model:
    """One re-estimation step from precomputed per-sequence posteriors.

    ``posteriors`` aligns with ``dataset.sequences``; None marks a skipped
    sequence.  Equivalent to one iteration of mdp_bw on the same inputs.
    """
    if len(posteriors) != dataset.num_unique:
        raise ValueError(
            f"need one posterior entry per unique sequence "
            f"({dataset.num_unique}), got {len(posteriors)}"
        )
    L, A, S = model.n_labels, model.n_actions, model.n_states
    iota_num = np.zeros((L, S))
    tau_num = np.zeros((A, S, L, S))
    tau_den = np.zeros((A, S))
    r_eff = 0.0
    for (obs, count), post in zip(dataset, posteriors):
        if post is None:
            continue
        r_eff += count
        labels, actions = post.label_ids, post.action_ids
        iota_num[labels[0]] += count * post.gamma[:, 0]
        for t in range(obs.length - 1):
            tau_num[actions[t], :, labels[t + 1], :] += count * post.xi_core[t]
            tau_den[actions[t]] += count * post.gamma[:, t]
    stats = SufficientStats(
        log_likelihood=0.0,
        effective_sequences=r_eff,
        skipped_sequences=0,
        skipped_indices=np.array([], dtype=np.intp),
        iota_numerator=iota_num,
        tau_numerator=tau_num,
        tau_denominator=tau_den,
        sequence_log_likelihoods=np.array([]),
    )
    new_model, _ = _mstep(model, stats)
    return new_model


def mdp_bw(
    dataset: Dataset, hyp0: Model, config: EmConfig = EmConfig()
) -> tuple[Model, EmReport]:
    """Iterate forward-backward and re-estimation until convergence.

    Returns the final hypothesis together with an EmReport.  The trace of
    total log-likelihoods is nondecreasing; sequences the hypothesis cannot
    generate are skipped and counted (they stay skipped for the whole run,
    since re-estimation never grows the support).
    """
    if dataset.num_sequences < 1:
        raise ValueError("dataset must contain at least one observation")
    hyp = hyp0
    if config.zero_likelihood_policy == SMOOTH:
        hyp = smooth_model(hyp, config.floor)
    stats = collect_stats(hyp, dataset)
    if stats.effective_sequences <= 0.0:
        raise AllSequencesSkippedError(
            "all sequences have zero likelihood under the starting hypothesis"
        )
    report = EmReport(
        log_likelihood_trace=[stats.log_likelihood],
        skipped_sequences=[stats.skipped_sequences],
    )
    for i in range(1, config.max_iterations + 1):
        hyp, frozen = _mstep(hyp, stats)
        stats = collect_stats(hyp, dataset)
        report.iterations = i
        report.log_likelihood_trace.append(stats.log_likelihood)
        report.skipped_sequences.append(stats.skipped_sequences)
        report.frozen_states.append(frozen)
        gain = report.log_likelihood_trace[-1] - report.log_likelihood_trace[-2]
        if gain <= config.epsilon:
            break
    return hyp, report


def mc_bw(
    dataset: Dataset, hyp0: Model, config: EmConfig = EmConfig()
) -> tuple[Model, EmReport]:
    """Baum-Welch for labelled Markov chains: the single-action case of mdp_bw."""
    if hyp0.n_actions != 1:
        raise ValueError(
            f"mc_bw needs a single-action hypothesis, got {hyp0.n_actions} actions"
        )
    action = hyp0.actions.symbols[0]
    for obs, _ in dataset:
        for a in obs.actions:
            if a != action:
                raise ValueError(
                    f"chain observations may only use action {action!r}, found {a!r}"
                )
    return mdp_bw(dataset, hyp0, config)
