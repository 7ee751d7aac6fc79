"""Forward-backward inference over the hidden states of a labelled MDP.

All recursions run with per-step rescaling so that long observations cannot
underflow: each forward column is normalized to sum 1 and the normalizer is
kept as the column's scale factor.  The backward pass divides by the same
factors, which makes ``sum_s alpha[s, t] * beta[s, t] == 1`` for every t of
a positive-likelihood observation, and the log-likelihood is the sum of the
log scale factors.
"""

from dataclasses import dataclass

import numpy as np

from .models import Model, Observation


class ZeroLikelihoodError(ValueError):
    """The observation has probability zero under the model."""


# Posterior columns whose normalizer falls below this cannot be resolved at
# double precision (the forward and backward supports barely overlap); such
# observations are treated like zero-likelihood ones.  Terms lost to underflow
# below the floor are < 5e-324 / 1e-250, so posteriors that pass are exact to
# far better than 1e-15.
_DENOM_FLOOR = 1e-250


def _encode(model: Model, observation: Observation) -> tuple[np.ndarray, np.ndarray]:
    labels = np.array([model.alphabet.index(l) for l in observation.labels], dtype=np.intp)
    actions = np.array([model.actions.index(a) for a in observation.actions], dtype=np.intp)
    return labels, actions


@dataclass(frozen=True)
class TrellisPair:
    """Scaled forward/backward matrices for one observation.

    ``alpha`` and ``beta`` have shape (S, T); ``scale[t]`` is the raw column
    sum that normalized forward column t.  Unscaled quantities (which may
    underflow for long observations) can be reconstructed via
    ``alpha_unscaled``/``beta_unscaled``.  If the observation is impossible,
    ``scale`` contains a zero, ``log_likelihood`` is ``-inf``, and the
    matrices past the failing step are zero.
    """

    alpha: np.ndarray
    beta: np.ndarray
    scale: np.ndarray
    observation: Observation

    @property
    def log_likelihood(self) -> float:
        if np.any(self.scale <= 0.0):
            return float("-inf")
        return float(np.log(self.scale).sum())

    def alpha_unscaled(self) -> np.ndarray:
        return self.alpha * np.cumprod(self.scale)[None, :]

    def beta_unscaled(self) -> np.ndarray:
        # beta[:, t] was divided by scale[t+1] * ... * scale[T-1].
        suffix = np.cumprod(self.scale[::-1])[::-1]
        factors = np.append(suffix[1:], 1.0)
        return self.beta * factors[None, :]


def forward(model: Model, observation: Observation) -> tuple[np.ndarray, np.ndarray]:
    """Scaled forward matrix and per-step scale factors.

    Returns ``(alpha, scale)`` with alpha of shape (S, T): column t is the
    joint probability of the first t+1 labels and the hidden state, divided
    by ``prod(scale[:t+1])``.  A zero scale marks the step at which the
    observation became impossible.
    """
    labels, actions = _encode(model, observation)
    T = observation.length
    S = model.n_states
    alpha = np.zeros((S, T))
    scale = np.zeros(T)
    col = model.iota[labels[0], :].copy()
    for t in range(T):
        if t > 0:
            col = col @ model.tau[actions[t - 1], :, labels[t], :]
        c = col.sum()
        scale[t] = c
        if c <= 0.0:
            break
        col = col / c
        alpha[:, t] = col
    return alpha, scale


def backward(
    model: Model, observation: Observation, scale: np.ndarray | None = None
) -> np.ndarray:
    """Scaled backward matrix, using the forward pass's scale factors.

    Pass ``scale`` to reuse an existing forward run; otherwise it is
    recomputed.  Column T-1 is all ones; earlier columns divide by the
    matching forward scale so that alpha * beta stays normalized.
    """
    if scale is None:
        _, scale = forward(model, observation)
    labels, actions = _encode(model, observation)
    T = observation.length
    S = model.n_states
    beta = np.zeros((S, T))
    beta[:, T - 1] = 1.0
    safe = np.where(scale > 0.0, scale, 1.0)
    # Entries can overflow to inf for observations at the edge of double
    # precision (posteriors() detects and rejects those).
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T - 2, -1, -1):
            beta[:, t] = (
                model.tau[actions[t], :, labels[t + 1], :] @ beta[:, t + 1]
            ) / safe[t + 1]
    return beta


def forward_backward(model: Model, observation: Observation) -> TrellisPair:
    alpha, scale = forward(model, observation)
    beta = backward(model, observation, scale)
    return TrellisPair(alpha=alpha, beta=beta, scale=scale, observation=observation)


def log_likelihood(model: Model, observation: Observation) -> float:
    """Log probability of the observation; ``-inf`` if impossible."""
    _, scale = forward(model, observation)
    if np.any(scale <= 0.0):
        return float("-inf")
    return float(np.log(scale).sum())


@dataclass(frozen=True)
class Posteriors:
    """State and transition posteriors of one observation.

    ``gamma[s, t]`` is the posterior probability of being in state s at step
    t.  The transition posterior is stored compactly: ``xi_core[t, s, u]``
    is the posterior mass of moving s -> u at step t, which belongs to the
    action/label pair actually observed there; ``xi`` materializes the full
    per-action tensor over (s, label, u) with zeros elsewhere.
    """

    gamma: np.ndarray
    xi_core: np.ndarray
    observation: Observation
    label_ids: np.ndarray
    action_ids: np.ndarray
    action_symbols: tuple[str, ...]
    n_labels: int

    def xi(self, action: str) -> np.ndarray:
        a = self.action_symbols.index(action)
        T = self.observation.length
        S = self.gamma.shape[0]
        dense = np.zeros((T - 1, S, self.n_labels, S))
        for t in range(T - 1):
            if self.action_ids[t] == a:
                dense[t, :, self.label_ids[t + 1], :] = self.xi_core[t]
        return dense


def posteriors(
    model: Model, observation: Observation, trellis: TrellisPair | None = None
) -> Posteriors:
    """Smoothed posteriors gamma and xi from a forward-backward run.

    Raises ZeroLikelihoodError if the observation is impossible under the
    model.
    """
    if trellis is None:
        trellis = forward_backward(model, observation)
    if trellis.log_likelihood == float("-inf"):
        raise ZeroLikelihoodError(
            f"observation {str(observation)!r} has zero likelihood"
        )
    labels, actions = _encode(model, observation)
    T = observation.length
    alpha, beta, scale = trellis.alpha, trellis.beta, trellis.scale
    with np.errstate(invalid="ignore"):
        product = alpha * beta
    denom = product.sum(axis=0)
    if not (np.isfinite(denom).all() and (denom > _DENOM_FLOOR).all()):
        raise ZeroLikelihoodError(
            f"observation {str(observation)!r} has a likelihood too close to "
            f"zero to resolve its posteriors at double precision"
        )
    gamma = product / denom[None, :]
    xi_core = np.zeros((T - 1, model.n_states, model.n_states))
    for t in range(T - 1):
        step = model.tau[actions[t], :, labels[t + 1], :]
        xi_core[t] = (
            alpha[:, t][:, None] * step * beta[:, t + 1][None, :]
        ) / (scale[t + 1] * denom[t])
    return Posteriors(
        gamma=gamma,
        xi_core=xi_core,
        observation=observation,
        label_ids=labels,
        action_ids=actions,
        action_symbols=model.actions.symbols,
        n_labels=model.n_labels,
    )
