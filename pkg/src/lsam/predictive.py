"""Posterior predictive simulation and model-fit metrics.

Response times are drawn by exact inversion of the overall survival
function, which has a closed-form inverse because the total hazard is
piecewise constant.  Outcomes are then drawn from the hazard ratio at the
simulated time.  Fit is assessed with per-cell predictive p-values and with
per-item log-loss and ROC AUC computed from the outcome prediction
probabilities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from lsam.model import (
    OUTCOME_SIGNS,
    DomainError,
    ModelState,
    ResponseDataset,
    TimeGrid,
    outcome_index,
)

__all__ = [
    "PredictiveSample",
    "invert_survival",
    "prob_positive_at",
    "simulate_cell",
    "simulate_response_arrays",
    "draw_predictive",
    "bayesian_pvalue",
    "misfit_flags",
    "log_loss",
    "roc_auc",
    "item_metric_table",
]

_PROB_FLOOR = 1e-12


def _cell_rates(state: ModelState, k: int, i: int) -> np.ndarray:
    d = float(np.linalg.norm(state.resp_pos[k] - state.item_pos[i]))
    scale = np.exp(state.traits[k] + OUTCOME_SIGNS * d)
    return state.baselines[i] * scale[:, None]  # (2, J)


def invert_survival(
    state: ModelState, grid: TimeGrid, k: int, i: int, u: float
) -> float:
    """Time t with S(t) = u, or s_J when u falls below the survival mass
    remaining at the upper cut (the censored branch).

    The total hazard is constant within each interval, so -log(u) is matched
    against the running total of hazard increments and inverted linearly
    inside the interval where it lands.
    """
    if not 0.0 < u < 1.0:
        raise DomainError(f"survival value {u} outside (0, 1)")
    target = -np.log(u)
    g = _cell_rates(state, k, i).sum(axis=0)  # (J,)
    increments = g * grid.widths
    cum = np.cumsum(increments)
    if target > cum[-1]:
        return grid.upper
    j = int(np.searchsorted(cum, target, side="left"))
    prev = 0.0 if j == 0 else float(cum[j - 1])
    return float(grid.cuts[j] + (target - prev) / g[j])


def prob_positive_at(
    state: ModelState, grid: TimeGrid, k: int, i: int, t: float
) -> float:
    """P(Y = +1 | T = t): the positive share of the total hazard at t.

    The two outcome probabilities sum to one exactly.
    """
    rates = _cell_rates(state, k, i)
    j = grid.segment_of(t)
    return float(rates[1, j] / rates[:, j].sum())


def simulate_cell(
    state: ModelState, grid: TimeGrid, k: int, i: int, rng: np.random.Generator
) -> tuple[float, int | None]:
    """Draw one (time, outcome) pair for cell (k, i).

    Returns (s_J, None) when the drawn time is censored at the upper cut.
    """
    u = rng.random()
    if u <= 0.0:
        return grid.upper, None
    g = _cell_rates(state, k, i).sum(axis=0)
    cum = np.cumsum(g * grid.widths)
    target = -np.log(u)
    if target > cum[-1]:
        return grid.upper, None
    j = int(np.searchsorted(cum, target, side="left"))
    prev = 0.0 if j == 0 else float(cum[j - 1])
    t = float(grid.cuts[j] + (target - prev) / g[j])
    p_pos = prob_positive_at(state, grid, k, i, t)
    return t, (1 if rng.random() < p_pos else -1)


def simulate_response_arrays(
    state: ModelState, grid: TimeGrid, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate every cell at once.

    Returns (times, outcomes, prob_pos), all (n, p).  Censored cells carry
    time s_J, outcome 0 and NaN prediction probability.
    """
    D = state.distances()
    scale = np.exp(state.traits[:, None, :] + OUTCOME_SIGNS * D[:, :, None])
    rates = state.baselines[None, :, :, :] * scale[:, :, :, None]  # (n, p, 2, J)
    g = rates.sum(axis=2)  # (n, p, J)
    cum = np.cumsum(g * grid.widths, axis=-1)

    u = rng.random((state.n, state.p))
    with np.errstate(divide="ignore"):
        target = -np.log(u)
    j = (target[..., None] > cum).sum(axis=-1)  # (n, p) in 0..J
    censored = j >= grid.J
    jc = np.minimum(j, grid.J - 1)

    prev = np.where(
        jc == 0, 0.0, np.take_along_axis(cum, np.maximum(jc - 1, 0)[..., None], -1)[..., 0]
    )
    g_at = np.take_along_axis(g, jc[..., None], -1)[..., 0]
    times = grid.cuts[jc] + (target - prev) / g_at
    times = np.where(censored, grid.upper, times)

    pos_at = np.take_along_axis(rates[:, :, 1, :], jc[..., None], -1)[..., 0]
    prob_pos = pos_at / g_at
    outcomes = np.where(rng.random((state.n, state.p)) < prob_pos, 1, -1).astype(np.int8)
    outcomes[censored] = 0
    prob_pos = np.where(censored, np.nan, prob_pos)
    return times, outcomes, prob_pos


@dataclass
class PredictiveSample:
    """Simulated (time, outcome) pairs per cell per retained draw.

    times and outcomes have shape (L, n, p); outcome 0 marks a predictive
    time censored at the upper cut, which carries no outcome.  prob_pos holds
    P(Y = +1 | T = simulated time) under the generating draw (NaN when
    censored) and feeds the log-loss and AUC metrics.
    """

    times: np.ndarray
    outcomes: np.ndarray
    prob_pos: np.ndarray
    draw_indices: np.ndarray
    upper: float

    @property
    def size(self) -> int:
        return self.times.shape[0]


def draw_predictive(
    states: Sequence[ModelState],
    grid: TimeGrid,
    size: int = 1000,
    seed: int | np.random.SeedSequence = 0,
) -> PredictiveSample:
    """Simulate one dataset per posterior draw.

    When more than ``size`` draws are available, a uniform subsample without
    replacement is used.  Each draw simulates from its own deterministic
    substream, so results do not depend on evaluation order.
    """
    states = list(states)
    master = (
        seed
        if isinstance(seed, np.random.SeedSequence)
        else np.random.SeedSequence(seed)
    )
    pick_rng = np.random.default_rng(master.spawn(1)[0])
    if len(states) > size:
        idx = np.sort(pick_rng.choice(len(states), size=size, replace=False))
    else:
        idx = np.arange(len(states))
    streams = master.spawn(len(idx))
    n, p = states[0].n, states[0].p
    times = np.empty((len(idx), n, p))
    outcomes = np.empty((len(idx), n, p), dtype=np.int8)
    prob_pos = np.empty((len(idx), n, p))
    for row, (di, ss) in enumerate(zip(idx, streams)):
        rng = np.random.default_rng(ss)
        times[row], outcomes[row], prob_pos[row] = simulate_response_arrays(
            states[int(di)], grid, rng
        )
    return PredictiveSample(
        times=times,
        outcomes=outcomes,
        prob_pos=prob_pos,
        draw_indices=np.asarray(idx, dtype=int),
        upper=grid.upper,
    )


def bayesian_pvalue(pred: PredictiveSample, data: ResponseDataset) -> np.ndarray:
    """(n, p) predictive p-values: share of simulated times >= the observed one.

    Censored predictive times enter at the upper cut.  Cells without a record
    are NaN.
    """
    n, p = pred.times.shape[1:]
    obs = np.full((n, p), np.nan)
    obs[data.respondents, data.items] = data.times
    with np.errstate(invalid="ignore"):
        pvals = (pred.times >= obs[None, :, :]).mean(axis=0)
    return np.where(np.isnan(obs), np.nan, pvals)


def misfit_flags(
    pvalues: np.ndarray, lo: float = 0.05, hi: float = 0.95
) -> np.ndarray:
    """Boolean mask of cells whose p-value signals misfit (outside [lo, hi])."""
    with np.errstate(invalid="ignore"):
        return (pvalues < lo) | (pvalues > hi)


def _item_eval_mask(pred: PredictiveSample, data: ResponseDataset, i: int):
    obs_outcome = np.zeros(pred.times.shape[1], dtype=np.int8)
    has_record = np.zeros(pred.times.shape[1], dtype=bool)
    on_item = data.items == i
    obs_outcome[data.respondents[on_item]] = data.outcomes[on_item]
    has_record[data.respondents[on_item]] = True
    usable = has_record & (obs_outcome != 0)
    return usable, obs_outcome


def log_loss(pred: PredictiveSample, data: ResponseDataset, i: int) -> np.ndarray:
    """Per-draw log-loss of the outcome predictions for item i.

    Only respondents with an uncensored observed outcome enter; the divisor
    is their count.  Predictive draws censored at the upper cut carry no
    outcome probability and drop out of the sum.  Zero probabilities for an
    observed outcome are clamped at 1e-12 with a warning.
    """
    usable, obs_outcome = _item_eval_mask(pred, data, i)
    count = int(usable.sum())
    if count == 0:
        return np.full(pred.size, np.nan)
    p_pos = pred.prob_pos[:, usable, i]  # (L, N)
    obs = obs_outcome[usable]
    p_obs = np.where(obs == 1, p_pos, 1.0 - p_pos)
    if np.nanmin(p_obs, initial=1.0) < _PROB_FLOOR:
        warnings.warn(
            "prediction probability of an observed outcome underflowed; "
            "clamping at 1e-12",
            RuntimeWarning,
        )
        p_obs = np.maximum(p_obs, _PROB_FLOOR)
    contrib = np.where(np.isnan(p_obs), 0.0, -np.log(np.where(np.isnan(p_obs), 1.0, p_obs)))
    return contrib.sum(axis=1) / count


def roc_auc(pred: PredictiveSample, data: ResponseDataset, i: int) -> np.ndarray:
    """Per-draw Mann-Whitney AUC of the positive-outcome scores for item i.

    Positive observed outcomes are the positive class; ties count one half.
    Draws (or items) without both classes among scorable respondents are NaN.
    """
    usable, obs_outcome = _item_eval_mask(pred, data, i)
    labels = obs_outcome[usable] == 1
    out = np.full(pred.size, np.nan)
    if labels.sum() == 0 or (~labels).sum() == 0:
        return out
    scores = pred.prob_pos[:, usable, i]  # (L, N)
    for row in range(pred.size):
        s = scores[row]
        ok = ~np.isnan(s)
        y = labels[ok]
        n_pos = int(y.sum())
        n_neg = int((~y).sum())
        if n_pos == 0 or n_neg == 0:
            continue
        ranks = rankdata(s[ok], method="average")
        out[row] = (ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return out


def item_metric_table(pred: PredictiveSample, data: ResponseDataset) -> list[dict]:
    """Per-item fit summary: p-value misfit counts, log-loss and AUC bands."""
    pvals = bayesian_pvalue(pred, data)
    flags = misfit_flags(pvals)
    rows = []
    for i in range(data.p):
        col = pvals[:, i]
        have = ~np.isnan(col)
        ll = log_loss(pred, data, i)
        auc = roc_auc(pred, data, i)
        rows.append(
            {
                "item": i,
                "cells": int(have.sum()),
                "pvalues_outside": int(flags[have, i].sum()),
                "log_loss_mean": float(np.nanmean(ll)) if np.any(~np.isnan(ll)) else None,
                "log_loss_q025": float(np.nanquantile(ll, 0.025)) if np.any(~np.isnan(ll)) else None,
                "log_loss_q975": float(np.nanquantile(ll, 0.975)) if np.any(~np.isnan(ll)) else None,
                "auc_mean": float(np.nanmean(auc)) if np.any(~np.isnan(auc)) else None,
                "auc_q025": float(np.nanquantile(auc, 0.025)) if np.any(~np.isnan(auc)) else None,
                "auc_q975": float(np.nanquantile(auc, 0.975)) if np.any(~np.isnan(auc)) else None,
            }
        )
    return rows
