"""Active trace collection that balances state/action visit counts.

The learner tracks how much posterior mass each (state, action) pair has
received, prefers the actions a state has tried least, and weights that
preference by its current belief over hidden states while a trace unfolds.
New traces are appended to the dataset and the hypothesis is re-fit, which
closes the loop.
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import em
from ._stats import collect_stats
from .evaluate import mean_log_likelihood
from .models import ActionSet, Dataset, Model, Observation, Scheduler, UniformScheduler
from .sim import LengthSampler, SystemHandle, _sample_index, sample_trace


@dataclass
class ActionCountMatrix:
    """Mutable (state, action) visit-mass matrix.

    Entries are expected numbers of times an action was taken from a hidden
    state, so rows of a freshly built matrix sum to posterior step counts
    rather than integers.
    """

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.counts.ndim != 2:
            raise ValueError(f"counts must be 2-d (S, A), got shape {self.counts.shape}")

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "ActionCountMatrix":
        return cls(np.zeros((n_states, n_actions)))

    def copy(self) -> "ActionCountMatrix":
        return ActionCountMatrix(self.counts.copy())


def action_counts(model: Model, dataset: Dataset) -> ActionCountMatrix:
    """Expected visit mass of every (state, action) pair over the dataset.

    Sums the smoothed posteriors gamma(s, t) over the steps where each
    action was taken (the final label of a sequence has no following action
    and contributes nothing).  Zero-likelihood sequences are skipped.
    """
    stats = collect_stats(model, dataset)
    if stats.effective_sequences <= 0.0:
        raise em.AllSequencesSkippedError(
            "all sequences have zero likelihood under the model"
        )
    return ActionCountMatrix(stats.tau_denominator.T.copy())


def opposite_rows(counts: np.ndarray) -> np.ndarray:
    """Per-state action distributions favouring the least-used actions.

    Each row is (1 - share of that action's count) renormalized over the
    remaining actions; an all-zero row falls back to uniform, and a single
    action always gets probability 1.
    """
    counts = np.asarray(counts, dtype=np.float64)
    S, A = counts.shape
    if A == 1:
        return np.ones((S, 1))
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        rows = (1.0 - counts / totals) / (A - 1)
    rows = np.where(totals > 0.0, rows, 1.0 / A)
    return rows


@dataclass(frozen=True)
class MemorylessScheduler:
    """State-indexed action distributions (one row per hidden state)."""

    rows: np.ndarray

    def distribution_for_state(self, state: int) -> np.ndarray:
        return self.rows[state]


def opposite_scheduler(counts: ActionCountMatrix) -> MemorylessScheduler:
    """Count-balancing memoryless scheduler over hidden states."""
    return MemorylessScheduler(rows=opposite_rows(counts.counts))


@dataclass
class BeliefScheduler:
    """Observation scheduler mixing per-state preferences by current belief.

    For a prefix, the belief is the normalized forward vector under the
    model; the action distribution is the belief-weighted average of the
    count-balancing rows.  The count matrix is read live at every call.  An
    impossible prefix yields the uniform distribution.
    """

    model: Model
    count_matrix: ActionCountMatrix
    actions: ActionSet = field(init=False)

    def __post_init__(self):
        self.actions = self.model.actions

    def action_distribution(
        self, labels: Sequence[str], actions: Sequence[str]
    ) -> np.ndarray:
        model = self.model
        belief = model.iota[model.alphabet.index(labels[0]), :].copy()
        total = belief.sum()
        for a, l in zip(actions, labels[1:]):
            if total <= 0.0:
                break
            belief /= total
            belief = belief @ model.tau[model.actions.index(a), :, model.alphabet.index(l), :]
            total = belief.sum()
        if total <= 0.0:
            return np.full(model.n_actions, 1.0 / model.n_actions)
        return (belief / total) @ opposite_rows(self.count_matrix.counts)


def belief_scheduler(model: Model, counts: ActionCountMatrix) -> BeliefScheduler:
    return BeliefScheduler(model=model, count_matrix=counts)


@dataclass(frozen=True)
class ActiveTrace:
    """One actively sampled observation; ``belief_collapsed`` flags a trace
    whose prefix became impossible under the hypothesis mid-run."""

    observation: Observation
    belief_collapsed: bool


def active_sample(
    system: SystemHandle,
    model: Model,
    counts: ActionCountMatrix,
    length: int,
    rng: np.random.Generator,
) -> ActiveTrace:
    """Draw one trace, steering each step by belief-mixed count balancing.

    At every step the current belief (normalized forward vector under
    ``model``) mixes the count-balancing rows into an action distribution;
    after observing the next label, the belief mass is added into the chosen
    action's column of ``counts`` (mutated in place) and the belief is
    advanced.  If the belief collapses (the hypothesis cannot explain the
    prefix), action choice falls back to uniform, counting stops, and the
    trace is flagged.
    """
    if length < 1:
        raise ValueError(f"trace length must be >= 1, got {length}")
    if counts.counts.shape != (model.n_states, model.n_actions):
        raise ValueError(
            f"counts shape {counts.counts.shape} does not match the model's "
            f"({model.n_states}, {model.n_actions})"
        )
    labels = [system.init()]
    actions: list[str] = []
    raw = model.iota[model.alphabet.index(labels[0]), :].copy()
    total = raw.sum()
    collapsed = total <= 0.0
    belief = raw / total if not collapsed else None
    for _ in range(length - 1):
        if collapsed:
            dist = np.full(model.n_actions, 1.0 / model.n_actions)
        else:
            dist = belief @ opposite_rows(counts.counts)
        a = _sample_index(dist, rng)
        action = model.actions.symbols[a]
        actions.append(action)
        label = system.step(action)
        labels.append(label)
        if not collapsed:
            counts.counts[:, a] += belief
            raw = belief @ model.tau[a, :, model.alphabet.index(label), :]
            total = raw.sum()
            if total <= 0.0:
                collapsed = True
                belief = None
            else:
                belief = raw / total
    return ActiveTrace(Observation(labels, actions), collapsed)


@dataclass(frozen=True)
class ActiveSchedule:
    """Outer-loop shape: how many rounds, traces per round, and trace lengths."""

    iterations: int
    length_sampler: LengthSampler
    sequences_per_iteration: int = 1

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.sequences_per_iteration < 1:
            raise ValueError(
                f"sequences_per_iteration must be >= 1, got {self.sequences_per_iteration}"
            )


BALANCED = "balanced"
UNIFORM = "uniform"


@dataclass(frozen=True)
class CurvePoint:
    """One learning-curve row (per-sequence nats; None where no test set)."""

    strategy: str
    iteration: int
    dataset_size: int
    train_ll_per_seq: float
    test_ll_per_seq: float | None
    skipped_traces: int


@dataclass
class ActiveLearnResult:
    model: Model
    dataset: Dataset
    report: em.EmReport
    curve: list[CurvePoint]
    collapsed_traces: int


def active_learn(
    system: SystemHandle,
    hyp0: Model,
    data0: Dataset,
    schedule: ActiveSchedule,
    config: em.EmConfig = em.EmConfig(),
    *,
    strategy: str = BALANCED,
    test_data: Dataset | None = None,
    rng: np.random.Generator | None = None,
    cold_start: bool = False,
) -> ActiveLearnResult:
    """Alternate data collection and re-fitting for ``schedule.iterations`` rounds.

    Round k builds the count matrix from the current data and hypothesis,
    draws new traces (count-balanced for the ``balanced`` strategy, plain
    uniform for the ``uniform`` baseline), and re-fits with Baum-Welch, warm
    starting from the current hypothesis unless ``cold_start`` restarts from
    ``hyp0``.  With zero iterations this is exactly a single fit on data0.
    """
    if strategy not in (BALANCED, UNIFORM):
        raise ValueError(f"strategy must be {BALANCED!r} or {UNIFORM!r}, got {strategy!r}")
    if rng is None:
        rng = np.random.default_rng(0)
    model, report = em.mdp_bw(data0, hyp0, config)
    dataset = data0
    collapsed_total = 0
    curve = [_curve_point(strategy, 0, model, dataset, test_data, report)]
    uniform = UniformScheduler(hyp0.actions)
    for iteration in range(1, schedule.iterations + 1):
        fresh: list[Observation] = []
        if strategy == BALANCED:
            counts = action_counts(model, dataset)
            for _ in range(schedule.sequences_per_iteration):
                length = schedule.length_sampler.sample(rng)
                trace = active_sample(system, model, counts, length, rng)
                collapsed_total += trace.belief_collapsed
                fresh.append(trace.observation)
        else:
            for _ in range(schedule.sequences_per_iteration):
                length = schedule.length_sampler.sample(rng)
                fresh.append(sample_trace(system, uniform, length, rng))
        dataset = dataset.extended(fresh)
        start = hyp0 if cold_start else model
        model, report = em.mdp_bw(dataset, start, config)
        curve.append(_curve_point(strategy, iteration, model, dataset, test_data, report))
    return ActiveLearnResult(
        model=model,
        dataset=dataset,
        report=report,
        curve=curve,
        collapsed_traces=collapsed_total,
    )


def _curve_point(
    strategy: str,
    iteration: int,
    model: Model,
    dataset: Dataset,
    test_data: Dataset | None,
    report: em.EmReport,
) -> CurvePoint:
    train = mean_log_likelihood(model, dataset, skip_zero=True)
    test_value = None
    if test_data is not None:
        test_value = mean_log_likelihood(model, test_data).value
    return CurvePoint(
        strategy=strategy,
        iteration=iteration,
        dataset_size=dataset.num_sequences,
        train_ll_per_seq=train.value,
        test_ll_per_seq=test_value,
        skipped_traces=train.zero_sequences,
    )
