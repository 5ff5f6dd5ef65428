"""Posterior inference and EM fitting for switching dynamics models.

The first observation of every sequence is conditioned on and never scored;
modes are attached to steps 1..T.  All recursions run in the log domain with
per-step normalization, so the forward pass also yields the log-likelihood
log p(y_1..y_T | y_0, params).  The routines are generic over any emission
dynamics implementing ``log_emission_seq`` and ``m_step``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (InsufficientDataError, ModelParams, NumericalError,
                   check_distribution)


@dataclass(frozen=True)
class Posterior:
    """Smoothed mode marginals and pairwise marginals of one sequence.

    gamma[t, s] = Pr(z_{t+1} = s | data); xi[t, i, j] = Pr(z_{t+1} = i,
    z_{t+2} = j | data) in step indices 0..T-1; loglik is the evidence of
    the scored steps.
    """
    gamma: np.ndarray
    xi: np.ndarray
    loglik: float


@dataclass(frozen=True)
class SegmentationResult:
    """Most probable mode path and its joint log-probability."""
    path: np.ndarray
    log_joint: float


@dataclass(frozen=True)
class EmConfig:
    """EM driver settings.

    ``tol`` is the relative log-likelihood change that stops the iteration
    (an infinite value stops after a single iteration); ``restarts``
    independent initializations are run and the best final log-likelihood
    wins.  ``seed`` drives every random draw the fit makes.
    """
    tol: float = 1e-5
    max_iters: int = 100
    seed: int = 0
    restarts: int = 5

    def __post_init__(self):
        if not (self.tol > 0.0):
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def _logsumexp(arr: np.ndarray, axis: int) -> np.ndarray:
    """Max-shifted logsumexp that maps all -inf slices to -inf, never NaN."""
    mx = arr.max(axis=axis)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = safe + np.log(np.exp(arr - np.expand_dims(safe, axis)).sum(axis=axis))
    return out


def _seq_values(model: ModelParams, seq) -> np.ndarray:
    values = getattr(seq, "values", None)
    if values is None:
        values = np.asarray(seq, dtype=float)
    layout = getattr(seq, "layout", None)
    if layout is not None and layout != model.layout:
        raise ValueError("sequence layout does not match the model layout")
    if values.ndim != 2 or values.shape[1] != model.layout.width:
        raise ValueError(
            f"expected (T+1, {model.layout.width}) values, got {values.shape}")
    if values.shape[0] < 2:
        raise ValueError("sequence needs at least one step after the "
                         "conditioning observation")
    return values


def _emission_log_matrix(model: ModelParams, values: np.ndarray) -> np.ndarray:
    out = np.empty((values.shape[0] - 1, model.n_modes))
    for s, dyn in enumerate(model.emissions):
        out[:, s] = dyn.log_emission_seq(values)
    if np.any(np.isnan(out)):
        raise NumericalError("emission log-density evaluated to NaN")
    return out


def _forward_backward_batch(log_init, log_trans, log_b):
    """Scaled forward-backward over a (B, T, S) stack of emission logs."""
    B, T, S = log_b.shape
    log_alpha = np.empty_like(log_b)
    loglik = np.zeros(B)

    a = log_init[None, :] + log_b[:, 0, :]
    c = _logsumexp(a, axis=1)
    if not np.all(np.isfinite(c)):
        raise NumericalError("total probability underflow in the forward pass")
    log_alpha[:, 0, :] = a - c[:, None]
    loglik += c
    for t in range(1, T):
        m = log_alpha[:, t - 1, :, None] + log_trans[None, :, :]
        a = _logsumexp(m, axis=1) + log_b[:, t, :]
        c = _logsumexp(a, axis=1)
        if not np.all(np.isfinite(c)):
            raise NumericalError("total probability underflow in the forward pass")
        log_alpha[:, t, :] = a - c[:, None]
        loglik += c

    log_beta = np.empty_like(log_b)
    log_beta[:, T - 1, :] = 0.0
    b = np.zeros((B, S))
    for t in range(T - 2, -1, -1):
        m = log_trans[None, :, :] + (log_b[:, t + 1, :] + b)[:, None, :]
        b = _logsumexp(m, axis=2)
        b = b - b.max(axis=1, keepdims=True)
        log_beta[:, t, :] = b

    g = log_alpha + log_beta
    g = g - _logsumexp(g, axis=2)[:, :, None]
    gamma = np.exp(g)

    if T > 1:
        x = (log_alpha[:, :-1, :, None] + log_trans[None, None, :, :]
             + (log_b[:, 1:, :] + log_beta[:, 1:, :])[:, :, None, :])
        flat = x.reshape(B, T - 1, S * S)
        flat = flat - _logsumexp(flat, axis=2)[:, :, None]
        xi = np.exp(flat).reshape(B, T - 1, S, S)
    else:
        xi = np.zeros((B, 0, S, S))
    return gamma, xi, loglik


def forward_backward(model: ModelParams, seq) -> Posterior:
    """Smoothed posteriors of one sequence under the model.

    Accepts an ObservationSequence (layout-checked) or a raw (T+1, width)
    array.  Raises NumericalError if every mode path underflows.
    """
    values = _seq_values(model, seq)
    with np.errstate(divide="ignore"):
        log_init = np.log(model.init)
        log_trans = np.log(model.trans)
    log_b = _emission_log_matrix(model, values)[None, :, :]
    gamma, xi, loglik = _forward_backward_batch(log_init, log_trans, log_b)
    return Posterior(gamma=gamma[0], xi=xi[0], loglik=float(loglik[0]))


def viterbi(model: ModelParams, seq) -> SegmentationResult:
    """Most probable mode path; ties break toward the lower mode index."""
    values = _seq_values(model, seq)
    with np.errstate(divide="ignore"):
        log_init = np.log(model.init)
        log_trans = np.log(model.trans)
    log_b = _emission_log_matrix(model, values)
    T, S = log_b.shape

    delta = log_init + log_b[0]
    back = np.zeros((T, S), dtype=int)
    for t in range(1, T):
        m = delta[:, None] + log_trans
        back[t] = np.argmax(m, axis=0)
        delta = m[back[t], np.arange(S)] + log_b[t]
    log_joint = float(np.max(delta))
    if not np.isfinite(log_joint):
        raise NumericalError("all mode paths have zero probability")
    path = np.empty(T, dtype=int)
    path[T - 1] = int(np.argmax(delta))
    for t in range(T - 2, -1, -1):
        path[t] = back[t + 1][path[t + 1]]
    return SegmentationResult(path=path, log_joint=log_joint)


def _e_step(model: ModelParams, values_list):
    """Posteriors for every sequence, batched over equal lengths."""
    with np.errstate(divide="ignore"):
        log_init = np.log(model.init)
        log_trans = np.log(model.trans)
    by_len: dict[int, list[int]] = {}
    for i, values in enumerate(values_list):
        by_len.setdefault(values.shape[0], []).append(i)
    posts: list[Posterior | None] = [None] * len(values_list)
    for _, idxs in sorted(by_len.items()):
        stack = np.stack([_emission_log_matrix(model, values_list[i])
                          for i in idxs])
        gamma, xi, loglik = _forward_backward_batch(log_init, log_trans, stack)
        for k, i in enumerate(idxs):
            posts[i] = Posterior(gamma=gamma[k], xi=xi[k], loglik=float(loglik[k]))
    return posts


def _hard_chunk_init(template: ModelParams, values_list, rng, diagonal):
    """First M-step from random contiguous chunk labels.

    Each sequence's steps are split into S contiguous chunks and every chunk
    gets a mode label drawn uniformly; the resulting one-hot responsibilities
    drive ordinary M-step updates.
    """
    S = template.n_modes
    gammas, first_counts = [], np.zeros(S)
    pair_counts = np.zeros((S, S))
    for values in values_list:
        T = values.shape[0] - 1
        labels = np.concatenate([
            np.full(len(chunk), rng.integers(S))
            for chunk in np.array_split(np.arange(T), min(S, T))])
        g = np.zeros((T, S))
        g[np.arange(T), labels] = 1.0
        gammas.append(g)
        first_counts[labels[0]] += 1.0
        np.add.at(pair_counts, (labels[:-1], labels[1:]), 1.0)
    init = first_counts / first_counts.sum()
    trans = np.empty((S, S))
    for i in range(S):
        row_sum = pair_counts[i].sum()
        trans[i] = pair_counts[i] / row_sum if row_sum > 0 else np.full(S, 1.0 / S)
    posts = [Posterior(gamma=g, xi=np.zeros((g.shape[0] - 1, S, S)), loglik=0.0)
             for g in gammas]
    emissions = _update_emissions(template, values_list, posts, rng,
                                  rescue_counts=np.zeros(S, dtype=int),
                                  diagonal=diagonal)
    return template.replace(init=init, trans=trans, emissions=emissions)


def _rescue_dynamics(dyn, values_list, rng):
    """Refit a starved mode on a random data window with unit weights."""
    for _ in range(3):
        values = values_list[rng.integers(len(values_list))]
        T = values.shape[0] - 1
        span = min(T, 50)
        start = int(rng.integers(T - span + 1))
        window = values[start:start + span + 1]
        try:
            return dyn.m_step([window], [np.ones(span)])
        except (InsufficientDataError, NumericalError):
            continue
    raise NumericalError("could not refit a starved mode from data windows")


def _update_emissions(model, values_list, posts, rng, rescue_counts, diagonal):
    new = []
    for s, dyn in enumerate(model.emissions):
        weights = [p.gamma[:, s] for p in posts]
        try:
            new.append(dyn.m_step(values_list, weights, diagonal=diagonal))
        except InsufficientDataError:
            rescue_counts[s] += 1
            if rescue_counts[s] > 3:
                raise NumericalError(
                    f"mode {s} still starved of responsibility after 3 rescues")
            new.append(_rescue_dynamics(dyn, values_list, rng))
    return tuple(new)


def _m_step(model, values_list, posts, rng, rescue_counts, diagonal):
    S = model.n_modes
    init = np.zeros(S)
    for p in posts:
        init += p.gamma[0]
    init /= init.sum()

    trans = np.array(model.trans)
    pair = np.zeros((S, S))
    for p in posts:
        if p.xi.shape[0]:
            pair += p.xi.sum(axis=0)
    for i in range(S):
        row_sum = pair[i].sum()
        if row_sum > 0.0:
            trans[i] = pair[i] / row_sum
        # A mode with no outgoing mass keeps its previous row.

    emissions = _update_emissions(model, values_list, posts, rng,
                                  rescue_counts, diagonal)
    return model.replace(init=check_distribution(init, "updated initial"),
                         trans=trans, emissions=emissions)


def _em_single(values_list, template, config, rng, initialize, diagonal):
    if initialize == "chunks":
        params = _hard_chunk_init(template, values_list, rng, diagonal)
    elif initialize == "params":
        params = template
    else:
        raise ValueError(f"unknown initialization {initialize!r}")
    rescue_counts = np.zeros(template.n_modes, dtype=int)
    trace = []
    prev = None
    for _ in range(config.max_iters):
        posts = _e_step(params, values_list)
        ll = float(sum(p.loglik for p in posts))
        trace.append(ll)
        params = _m_step(params, values_list, posts, rng, rescue_counts, diagonal)
        if prev is not None:
            rel = abs(ll - prev) / (abs(ll) + 1e-12)
            if rel < config.tol:
                break
        elif math.isinf(config.tol):
            break
        prev = ll
    final_posts = _e_step(params, values_list)
    trace.append(float(sum(p.loglik for p in final_posts)))
    return params, np.array(trace)


def em_fit(sequences, template: ModelParams, config: EmConfig = EmConfig(),
           *, initialize: str = "chunks", diagonal: bool = False):
    """Fit model parameters by EM with random restarts.

    Parameters
    ----------
    sequences : list of ObservationSequence (or raw (T+1, width) arrays)
        Training data; layouts must match the template's.
    template : ModelParams
        Provides the mode count, layout, and emission structure.  With
        ``initialize="params"`` its numeric values are the starting point;
        with the default ``"chunks"`` every restart starts from a first
        M-step over random contiguous chunk labels.
    config : EmConfig
        Convergence and restart settings.

    Returns
    -------
    (ModelParams, np.ndarray)
        The best parameters over all restarts, and their log-likelihood
        trace.  ``trace[k]`` is the log-likelihood of the parameters
        entering iteration k; the last entry scores the returned parameters.
    """
    values_list = [_seq_values(template, s) for s in sequences]
    if not values_list:
        raise ValueError("em_fit needs at least one sequence")
    children = np.random.SeedSequence(config.seed).spawn(config.restarts)
    best = None
    for child in children:
        rng = np.random.default_rng(child)
        params, trace = _em_single(values_list, template, config, rng,
                                   initialize, diagonal)
        if best is None or trace[-1] > best[1][-1]:
            best = (params, trace)
    return best
