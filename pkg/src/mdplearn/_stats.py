"""Vectorized forward-backward statistics over whole datasets.

Internal engine behind EM, action counting and dataset-level likelihood:
unique sequences are grouped by length and processed as dense batches, with
the same per-step rescaling as the single-sequence inference code.  Results
are multiplicity-weighted.  Zero-likelihood sequences are excluded from all
accumulators ("skip and count"); their indices are reported.
"""

from dataclasses import dataclass

import numpy as np

from .inference import _DENOM_FLOOR
from .models import Dataset, Model


@dataclass
class _LengthGroup:
    length: int
    label_ids: np.ndarray  # (R, T) int
    action_ids: np.ndarray  # (R, T-1) int
    weights: np.ndarray  # (R,) float multiplicities
    indices: np.ndarray  # (R,) positions in dataset.sequences


def group_by_length(model: Model, dataset: Dataset) -> list[_LengthGroup]:
    by_length: dict[int, list[tuple[int, list[int], list[int], int]]] = {}
    for i, (obs, count) in enumerate(dataset):
        labels = [model.alphabet.index(l) for l in obs.labels]
        actions = [model.actions.index(a) for a in obs.actions]
        by_length.setdefault(obs.length, []).append((i, labels, actions, count))
    groups = []
    for length in sorted(by_length):
        entries = by_length[length]
        groups.append(
            _LengthGroup(
                length=length,
                label_ids=np.array([e[1] for e in entries], dtype=np.intp),
                action_ids=np.array([e[2] for e in entries], dtype=np.intp).reshape(
                    len(entries), length - 1
                ),
                weights=np.array([e[3] for e in entries], dtype=np.float64),
                indices=np.array([e[0] for e in entries], dtype=np.intp),
            )
        )
    return groups


def _batch_forward(
    model: Model, group: _LengthGroup
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Scaled forward pass for one length group.

    Returns (alpha, scale, lls): alpha (T, R, S) with normalized columns,
    scale (T, R), and per-sequence log-likelihoods with -inf for impossible
    sequences (whose alpha rows are zero from the failing step on).
    """
    labels, actions = group.label_ids, group.action_ids
    R, T = labels.shape
    S = model.n_states
    alpha = np.zeros((T, R, S))
    scale = np.zeros((T, R))
    col = model.iota[labels[:, 0], :].copy()
    dead = np.zeros(R, dtype=bool)
    for t in range(T):
        if t > 0:
            step = model.tau[actions[:, t - 1], :, labels[:, t], :]  # (R, S, S)
            col = np.einsum("rs,rsu->ru", col, step)
        c = col.sum(axis=1)
        scale[t] = c
        dead |= c <= 0.0
        c_safe = np.where(dead, 1.0, c)
        col = col / c_safe[:, None]
        col[dead] = 0.0
        alpha[t] = col
    with np.errstate(divide="ignore"):
        lls = np.where(dead, -np.inf, np.sum(np.log(np.where(scale > 0, scale, 1.0)), axis=0))
    return alpha, scale, lls


def sequence_log_likelihoods(model: Model, dataset: Dataset) -> np.ndarray:
    """Log-likelihood of every unique sequence, aligned with dataset.sequences."""
    out = np.zeros(dataset.num_unique)
    for group in group_by_length(model, dataset):
        _, _, lls = _batch_forward(model, group)
        out[group.indices] = lls
    return out


@dataclass
class SufficientStats:
    """Multiplicity-weighted expected statistics of a dataset under a model.

    ``iota_numerator[l, s]`` sums gamma(s, 1) over sequences starting with
    label l; ``tau_numerator[a, s, l, u]`` sums the xi transition posteriors
    and ``tau_denominator[a, s]`` the matching gamma mass over steps where
    action a was taken.  ``effective_sequences`` is the weighted number of
    sequences with positive likelihood; the rest are counted in
    ``skipped_sequences`` and listed in ``skipped_indices``.
    """

    log_likelihood: float
    effective_sequences: float
    skipped_sequences: int
    skipped_indices: np.ndarray
    iota_numerator: np.ndarray  # (L, S)
    tau_numerator: np.ndarray  # (A, S, L, S)
    tau_denominator: np.ndarray  # (A, S)
    sequence_log_likelihoods: np.ndarray


def _backward_accumulate(
    model: Model,
    labels: np.ndarray,
    actions_: np.ndarray,
    w: np.ndarray,
    alpha: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray] | np.ndarray:
    """Backward sweep with posterior accumulation for one length group.

    Returns (iota_num, tau_num_alss, tau_den) contributions on success, or a
    boolean mask of sequences whose posteriors degenerated at double
    precision (the caller drops them and retries).

    The backward vectors are renormalized to sum 1 per column instead of
    sharing the forward scale factors: gamma and xi are ratios in which any
    per-column rescaling of beta cancels, and keeping every factor <= 1
    rules out overflow on sequences whose scale factors underflow.
    """
    L, A, S = model.n_labels, model.n_actions, model.n_states
    T = labels.shape[1]
    iota_num = np.zeros((L, S))
    tau_num_alss = np.zeros((A, L, S, S))  # indexed (a, l, s, u) for scatter-adds
    tau_den = np.zeros((A, S))
    beta = np.full_like(alpha[0], 1.0 / S)  # (R, S), column T-1
    gamma = None
    for t in range(T - 2, -1, -1):
        step = model.tau[actions_[:, t], :, labels[:, t + 1], :]  # (R, S, S)
        raw = np.einsum("rsu,ru->rs", step, beta)
        raw_sum = raw.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            beta_t = raw / raw_sum[:, None]
            product = alpha[t] * beta_t
            denom = product.sum(axis=1)
            # beta is divided by raw_sum before entering the xi products: the
            # small magnitudes cancel first, so entries that would flush to
            # zero as bare step*beta products survive.
            scaled_beta = beta / raw_sum[:, None]
            joint = alpha[t][:, :, None] * (step * scaled_beta[:, None, :])
            xi_total = joint.sum(axis=(1, 2))
        ok = (
            np.isfinite(denom) & (denom > _DENOM_FLOOR)
            & np.isfinite(xi_total) & (xi_total > _DENOM_FLOOR)
        )
        if not ok.all():
            return ~ok
        gamma = product / denom[:, None]
        xi = joint / xi_total[:, None, None]
        np.add.at(
            tau_num_alss,
            (actions_[:, t], labels[:, t + 1]),
            xi * w[:, None, None],
        )
        np.add.at(tau_den, actions_[:, t], gamma * w[:, None])
        beta = beta_t
    if gamma is None:  # length-1 group: gamma(., 1) is the normalized alpha
        gamma = alpha[0]
    np.add.at(iota_num, labels[:, 0], gamma * w[:, None])
    return iota_num, tau_num_alss, tau_den


def collect_stats(model: Model, dataset: Dataset) -> SufficientStats:
    """Full E-step statistics for the dataset (forward and backward passes).

    Sequences whose smoothed posteriors cannot be resolved at double
    precision (likelihood within a few hundred orders of magnitude of the
    underflow threshold) are skipped and counted exactly like
    zero-likelihood ones.
    """
    L, A, S = model.n_labels, model.n_actions, model.n_states
    iota_num = np.zeros((L, S))
    tau_num_alss = np.zeros((A, L, S, S))
    tau_den = np.zeros((A, S))
    total_ll = 0.0
    r_eff = 0.0
    skipped = 0
    skipped_indices = []
    seq_lls = np.zeros(dataset.num_unique)

    for group in group_by_length(model, dataset):
        alpha, _, lls = _batch_forward(model, group)
        seq_lls[group.indices] = lls
        alive = np.isfinite(lls)
        while alive.any():
            idx = np.flatnonzero(alive)
            result = _backward_accumulate(
                model,
                group.label_ids[idx],
                group.action_ids[idx],
                group.weights[idx],
                alpha[:, idx, :],
            )
            if isinstance(result, tuple):
                iota_num += result[0]
                tau_num_alss += result[1]
                tau_den += result[2]
                break
            alive[idx[result]] = False
        gone = ~alive
        if gone.any():
            skipped += int(group.weights[gone].sum())
            skipped_indices.extend(group.indices[gone].tolist())
        w = group.weights[alive]
        total_ll += float((w * lls[alive]).sum())
        r_eff += float(w.sum())

    return SufficientStats(
        log_likelihood=total_ll,
        effective_sequences=r_eff,
        skipped_sequences=skipped,
        skipped_indices=np.array(sorted(skipped_indices), dtype=np.intp),
        iota_numerator=iota_num,
        tau_numerator=np.transpose(tau_num_alss, (0, 2, 1, 3)),
        tau_denominator=tau_den,
        sequence_log_likelihoods=seq_lls,
    )
