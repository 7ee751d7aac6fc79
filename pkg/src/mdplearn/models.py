"""Core domain types for labelled Markov decision processes.

A labelled MDP has hidden states, a label alphabet and an action set.  Runs
alternate observable labels and chosen actions; the state sequence itself is
never observed.  Labelled Markov chains are the single-action special case.
"""

import json
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Protocol, runtime_checkable

import numpy as np

ERR_LABEL = "err"

# Tolerance for stochasticity checks in validate_model.
ROW_SUM_TOLERANCE = 1e-9


class VocabularyError(KeyError):
    """A symbol falls outside a model's alphabet or action set."""


class DatasetParseError(ValueError):
    """A dataset file line could not be parsed; carries the line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def _check_symbols(symbols: tuple[str, ...], kind: str) -> None:
    if not symbols:
        raise ValueError(f"{kind} must not be empty")
    seen = set()
    for sym in symbols:
        if not isinstance(sym, str) or not sym:
            raise ValueError(f"{kind} symbols must be non-empty strings, got {sym!r}")
        if any(ch.isspace() for ch in sym):
            raise ValueError(f"{kind} symbol {sym!r} contains whitespace")
        if sym.startswith("#"):
            raise ValueError(f"{kind} symbol {sym!r} starts with '#'")
        if sym in seen:
            raise ValueError(f"duplicate {kind} symbol {sym!r}")
        seen.add(sym)


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of observable labels.  Always contains the reserved ``err``."""

    symbols: tuple[str, ...]

    def __init__(self, symbols: Iterable[str]):
        syms = tuple(symbols)
        if ERR_LABEL not in syms:
            syms = syms + (ERR_LABEL,)
        _check_symbols(syms, "alphabet")
        object.__setattr__(self, "symbols", syms)

    @cached_property
    def _lookup(self) -> dict[str, int]:
        return {sym: i for i, sym in enumerate(self.symbols)}

    def index(self, symbol: str) -> int:
        try:
            return self._lookup[symbol]
        except KeyError:
            raise VocabularyError(f"label {symbol!r} not in alphabet {self.symbols}") from None

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[str]:
        return iter(self.symbols)

    def __contains__(self, symbol: object) -> bool:
        return symbol in self._lookup


@dataclass(frozen=True)
class ActionSet:
    """Ordered set of action symbols."""

    symbols: tuple[str, ...]

    def __init__(self, symbols: Iterable[str]):
        syms = tuple(symbols)
        _check_symbols(syms, "action set")
        object.__setattr__(self, "symbols", syms)

    @cached_property
    def _lookup(self) -> dict[str, int]:
        return {sym: i for i, sym in enumerate(self.symbols)}

    def index(self, symbol: str) -> int:
        try:
            return self._lookup[symbol]
        except KeyError:
            raise VocabularyError(f"action {symbol!r} not in action set {self.symbols}") from None

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[str]:
        return iter(self.symbols)

    def __contains__(self, symbol: object) -> bool:
        return symbol in self._lookup


@dataclass(frozen=True)
class Model:
    """Labelled MDP with hidden states ``0..n_states-1``.

    Attributes
    ----------
    alphabet : Alphabet
        Observable labels; index order fixes the label axis of the arrays.
    actions : ActionSet
        Action symbols; index order fixes the action axis.
    iota : ndarray, shape (L, S)
        Initial joint distribution over (label, state).
    tau : ndarray, shape (A, S, L, S)
        ``tau[a, s, l, t]`` is the probability, after action ``a`` in state
        ``s``, of emitting label ``l`` and moving to state ``t``.  A row that
        is Dirac on ``(err, s)`` realises the unavailable-action convention:
        the action leaves the state unchanged and emits ``err``.

    Arrays are copied and frozen at construction.  Stochasticity is not
    enforced here; ``validate_model`` reports violations.
    """

    alphabet: Alphabet
    actions: ActionSet
    iota: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        iota = np.array(self.iota, dtype=np.float64)
        tau = np.array(self.tau, dtype=np.float64)
        L, A = len(self.alphabet), len(self.actions)
        if iota.ndim != 2 or iota.shape[0] != L:
            raise ValueError(f"iota must have shape (L, S) with L={L}, got {iota.shape}")
        S = iota.shape[1]
        if S < 1:
            raise ValueError("model needs at least one state")
        if tau.shape != (A, S, L, S):
            raise ValueError(f"tau must have shape {(A, S, L, S)}, got {tau.shape}")
        iota.setflags(write=False)
        tau.setflags(write=False)
        object.__setattr__(self, "iota", iota)
        object.__setattr__(self, "tau", tau)

    @property
    def n_states(self) -> int:
        return self.iota.shape[1]

    @property
    def n_labels(self) -> int:
        return len(self.alphabet)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def to_json_dict(self) -> dict:
        """Sparse JSON form: only nonzero probability entries are listed."""
        iota_entries = []
        for l, s in zip(*np.nonzero(self.iota)):
            iota_entries.append(
                {"label": self.alphabet.symbols[l], "state": int(s), "p": float(self.iota[l, s])}
            )
        tau_entries = []
        for a, s, l, t in zip(*np.nonzero(self.tau)):
            tau_entries.append(
                {
                    "action": self.actions.symbols[a],
                    "from": int(s),
                    "label": self.alphabet.symbols[l],
                    "to": int(t),
                    "p": float(self.tau[a, s, l, t]),
                }
            )
        return {
            "labels": list(self.alphabet.symbols),
            "actions": list(self.actions.symbols),
            "n_states": self.n_states,
            "iota": iota_entries,
            "tau": tau_entries,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "Model":
        alphabet = Alphabet(doc["labels"])
        actions = ActionSet(doc["actions"])
        S = int(doc["n_states"])
        iota = np.zeros((len(alphabet), S))
        for entry in doc["iota"]:
            iota[alphabet.index(entry["label"]), int(entry["state"])] = float(entry["p"])
        tau = np.zeros((len(actions), S, len(alphabet), S))
        for entry in doc["tau"]:
            a = actions.index(entry["action"])
            l = alphabet.index(entry["label"])
            tau[a, int(entry["from"]), l, int(entry["to"])] = float(entry["p"])
        return cls(alphabet, actions, iota, tau)

    @classmethod
    def from_json(cls, text: str) -> "Model":
        return cls.from_json_dict(json.loads(text))


def write_model(model: Model, path) -> None:
    with open(path, "w") as fh:
        fh.write(model.to_json())
        fh.write("\n")


def read_model(path) -> Model:
    with open(path) as fh:
        return Model.from_json(fh.read())


@dataclass(frozen=True)
class Violation:
    """One stochasticity defect found by validate_model."""

    where: str
    deviation: float
    message: str

    def __str__(self) -> str:
        return self.message


def validate_model(model: Model, tolerance: float = ROW_SUM_TOLERANCE) -> list[Violation]:
    """Check all probability constraints; return one Violation per defect.

    An empty list means the model is a well-formed labelled MDP: entries in
    [0, 1], iota sums to 1 and every tau row sums to 1, all within tolerance.
    """
    violations = []

    def check_entries(arr: np.ndarray, where: str) -> None:
        if np.any(np.isnan(arr)):
            violations.append(Violation(where, float("nan"), f"{where}: contains NaN"))
            return
        low, high = float(arr.min()), float(arr.max())
        if low < -tolerance:
            violations.append(
                Violation(where, -low, f"{where}: negative entry {low:.3e}")
            )
        if high > 1 + tolerance:
            violations.append(
                Violation(where, high - 1, f"{where}: entry {high:.3e} exceeds 1")
            )

    check_entries(model.iota, "iota")
    total = float(model.iota.sum())
    if abs(total - 1.0) > tolerance and not np.isnan(total):
        violations.append(
            Violation("iota", abs(total - 1.0), f"iota: sums to {total!r}, deviation {abs(total - 1.0):.3e}")
        )
    for a, action in enumerate(model.actions):
        for s in range(model.n_states):
            where = f"tau[{action}][{s}]"
            row = model.tau[a, s]
            check_entries(row, where)
            row_sum = float(row.sum())
            if abs(row_sum - 1.0) > tolerance and not np.isnan(row_sum):
                violations.append(
                    Violation(
                        where,
                        abs(row_sum - 1.0),
                        f"{where}: row sums to {row_sum!r}, deviation {abs(row_sum - 1.0):.3e}",
                    )
                )
    return violations


@dataclass(frozen=True)
class Observation:
    """One run: labels ``l_1 .. l_T`` interleaved with actions ``a_1 .. a_{T-1}``."""

    labels: tuple[str, ...]
    actions: tuple[str, ...] = ()

    def __init__(self, labels: Iterable[str], actions: Iterable[str] = ()):
        labels = tuple(labels)
        actions = tuple(actions)
        if len(labels) < 1:
            raise ValueError("observation needs at least one label")
        if len(actions) != len(labels) - 1:
            raise ValueError(
                f"need exactly len(labels)-1 actions, got {len(labels)} labels and {len(actions)} actions"
            )
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "actions", actions)

    @property
    def length(self) -> int:
        return len(self.labels)

    def tokens(self) -> list[str]:
        out = [self.labels[0]]
        for action, label in zip(self.actions, self.labels[1:]):
            out.append(action)
            out.append(label)
        return out

    def __str__(self) -> str:
        return " ".join(self.tokens())

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Observation":
        if len(tokens) % 2 == 0:
            raise ValueError(f"need an odd number of tokens, got {len(tokens)}")
        return cls(labels=tuple(tokens[0::2]), actions=tuple(tokens[1::2]))


@dataclass(frozen=True)
class Dataset:
    """Multiset of observations; duplicates are aggregated into counts."""

    sequences: tuple[Observation, ...]
    counts: tuple[int, ...]

    def __init__(self, sequences: Iterable[Observation], counts: Iterable[int]):
        sequences = tuple(sequences)
        counts = tuple(int(c) for c in counts)
        if len(sequences) != len(counts):
            raise ValueError("sequences and counts must have equal length")
        if any(c < 1 for c in counts):
            raise ValueError("multiplicities must be >= 1")
        if len(set(sequences)) != len(sequences):
            raise ValueError("sequences must be unique; use from_observations to aggregate")
        object.__setattr__(self, "sequences", sequences)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_observations(cls, observations: Iterable[Observation]) -> "Dataset":
        """Aggregate duplicates; unique sequences keep first-seen order."""
        counter: dict[Observation, int] = {}
        for obs in observations:
            counter[obs] = counter.get(obs, 0) + 1
        return cls(tuple(counter.keys()), tuple(counter.values()))

    @property
    def num_sequences(self) -> int:
        """Total number of observations, counting multiplicity (R)."""
        return sum(self.counts)

    @property
    def num_unique(self) -> int:
        return len(self.sequences)

    def __iter__(self) -> Iterator[tuple[Observation, int]]:
        return iter(zip(self.sequences, self.counts))

    def __len__(self) -> int:
        return self.num_sequences

    def extended(self, observations: Iterable[Observation]) -> "Dataset":
        """New dataset with extra observations merged in."""
        counter: dict[Observation, int] = dict(zip(self.sequences, self.counts))
        for obs in observations:
            counter[obs] = counter.get(obs, 0) + 1
        return Dataset(tuple(counter.keys()), tuple(counter.values()))


def write_dataset(dataset: Dataset, path) -> None:
    """One observation per line, repeated per multiplicity."""
    with open(path, "w") as fh:
        for obs, count in dataset:
            line = str(obs) + "\n"
            for _ in range(count):
                fh.write(line)


def read_dataset(path) -> Dataset:
    """Parse a dataset file.  ``#`` starts a comment, blank lines are skipped."""
    observations = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                observations.append(Observation.from_tokens(tokens))
            except ValueError as exc:
                raise DatasetParseError(str(exc), lineno) from None
    return Dataset.from_observations(observations)


@runtime_checkable
class Scheduler(Protocol):
    """Maps an observation prefix to a distribution over actions."""

    actions: ActionSet

    def action_distribution(
        self, labels: Sequence[str], actions: Sequence[str]
    ) -> np.ndarray: ...


@dataclass(frozen=True)
class UniformScheduler:
    """Ignores the prefix; picks every action with equal probability."""

    actions: ActionSet

    def action_distribution(
        self, labels: Sequence[str], actions: Sequence[str]
    ) -> np.ndarray:
        n = len(self.actions)
        return np.full(n, 1.0 / n)
