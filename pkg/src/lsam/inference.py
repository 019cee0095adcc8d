"""Priors, full-conditional and Metropolis updates, and the MCMC runner.

The sampler is Metropolis-within-Gibbs.  Baseline hazards and the trait
variance have conjugate full conditionals and are drawn exactly; traits,
positions and the embedding scale use Gaussian random-walk proposals (on the
log scale for the scale parameter).  One iteration scans the blocks in the
fixed order: baselines, trait variance, traits, respondent positions, item
positions, scale.  Proposal step sizes adapt by Robbins-Monro during burn-in
only, one scalar step per block, targeting the configured acceptance rate.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

from lsam.model import (
    OUTCOME_SIGNS,
    IndicatorTables,
    ModelState,
    NumericalError,
    ResponseDataset,
    TimeGrid,
    distance_matrix,
    log_likelihood,
)

__all__ = [
    "PriorConfig",
    "ChainConfig",
    "ChainDraws",
    "PosteriorDraws",
    "vague_lambda_shape",
    "log_prior",
    "lambda_full_conditional",
    "sigma2_full_conditional",
    "gibbs_update_lambda",
    "gibbs_update_sigma2",
    "mh_update_theta",
    "mh_update_positions",
    "mh_update_gamma",
    "initial_state",
    "run_chain",
    "run_chains",
    "gelman_rubin",
    "psrf",
    "diagnostics_report",
]

# Gamma draws with very small shapes can underflow to exactly zero; baselines
# must stay strictly positive.
_BASELINE_FLOOR = 1e-290


def vague_lambda_shape(grid: TimeGrid) -> np.ndarray:
    """Vague per-interval shape J / (s_J * (J - j + 0.5)) for j = 1..J."""
    J = grid.J
    j = np.arange(1, J + 1)
    return J / (grid.upper * (J - j + 0.5))


@dataclass
class PriorConfig:
    """Hyperparameters of the independent priors.

    ``lambda_shape_tilde`` may be set explicitly (one value per interval);
    when None the vague default derived from the grid is used.
    """

    a_sigma: float = 1e-4
    b_sigma: float = 1e-4
    mu_gamma: float = 0.0
    tau_gamma: float = 2.0
    lambda_rate: float = 0.5
    lambda_shape_tilde: np.ndarray | None = None

    def lambda_tilde(self, grid: TimeGrid) -> np.ndarray:
        if self.lambda_shape_tilde is not None:
            lt = np.asarray(self.lambda_shape_tilde, dtype=float)
            if lt.shape != (grid.J,):
                raise ValueError("lambda_shape_tilde must have one entry per interval")
            return lt
        return vague_lambda_shape(grid)


def _gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x


def _invgamma_logpdf(x, shape, scale):
    return shape * np.log(scale) - gammaln(shape) - (shape + 1) * np.log(x) - scale / x


def _normal_logpdf(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def log_prior(state: ModelState, prior: PriorConfig, grid: TimeGrid) -> float:
    """Joint log prior density of a parameter configuration.

    The scale parameter's log-normal prior includes the change-of-variables
    term, i.e. this is the density of gamma itself, not of log gamma.
    """
    lt = prior.lambda_tilde(grid)
    lam_block = _gamma_logpdf(state.baselines, 0.5 * lt, prior.lambda_rate).sum()
    trait_block = _normal_logpdf(state.traits, 0.0, state.sigma2).sum()
    sigma_block = _invgamma_logpdf(state.sigma2, prior.a_sigma, prior.b_sigma)
    g2 = state.gamma**2
    pos_block = (
        _normal_logpdf(state.resp_pos, 0.0, g2).sum()
        + _normal_logpdf(state.item_pos, 0.0, g2).sum()
    )
    gamma_block = _normal_logpdf(
        math.log(state.gamma), prior.mu_gamma, prior.tau_gamma**2
    ) - math.log(state.gamma)
    return float(lam_block + trait_block + sigma_block + pos_block + gamma_block)


def lambda_full_conditional(
    state: ModelState,
    data: ResponseDataset,
    grid: TimeGrid,
    indicators: IndicatorTables,
    prior: PriorConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Gamma(shape, rate) parameters of the baseline full conditional, (p, 2, J).

    shape = 0.5 * lambda_tilde_j + event count; rate = prior rate plus the
    exposure-weighted sum of exp(trait + c * dist) over all respondents with
    any exposure in the interval (both accumulators accrue exposure for every
    observation, censored ones included).
    """
    D = distance_matrix(state.resp_pos, state.item_pos)
    scale = np.exp(state.traits[:, None, :] + OUTCOME_SIGNS * D[:, :, None])
    rate = prior.lambda_rate + np.einsum(
        "kij,kic->icj", indicators.exposure_cells, scale
    )
    shape = 0.5 * prior.lambda_tilde(grid) + indicators.event_counts
    return shape, rate


def sigma2_full_conditional(
    traits: np.ndarray, prior: PriorConfig
) -> tuple[float, float]:
    """Inv-Gamma(shape, scale) parameters of the trait-variance full conditional.

    All 2n trait entries are exchangeable draws from N(0, sigma2), so
    shape = a + n and scale = b + sum(theta^2) / 2.
    """
    n = traits.shape[0]
    return prior.a_sigma + n, prior.b_sigma + 0.5 * float((traits**2).sum())


def gamma_log_acceptance(
    current: float,
    proposal: float,
    sum_sq_positions: float,
    coord_count: int,
    prior: PriorConfig,
) -> float:
    """Log MH acceptance ratio for a log-normal random walk on the scale.

    Target is the product of the position priors and the log-normal prior on
    the scale; the final log(proposal/current) term is the asymmetric-proposal
    correction of the log-scale walk.
    """

    def log_target(g: float) -> float:
        return (
            -coord_count * math.log(g)
            - sum_sq_positions / (2.0 * g**2)
            - math.log(g)
            - (math.log(g) - prior.mu_gamma) ** 2 / (2.0 * prior.tau_gamma**2)
        )

    return log_target(proposal) - log_target(current) + math.log(proposal / current)


class LikelihoodWorkspace:
    """Incremental per-cell caches so block updates touch only what changed.

    Cached arrays (n respondents, p items, J intervals):

    * ``dist`` (n, p) with ``exp_dist`` and its reciprocal,
    * ``exp_traits`` (n, 2),
    * ``cum`` (n, p, 2): baseline cumulative hazard at each cell's recorded
      time (zero where no record exists).

    The MH ratio of every block equals the full log-posterior difference; the
    delta helpers below are exercised against full recomputation in the test
    suite and, when ``check()`` is called, the cached log likelihood is
    compared with a fresh evaluation.
    """

    def __init__(
        self,
        state: ModelState,
        data: ResponseDataset,
        grid: TimeGrid,
        indicators: IndicatorTables | None = None,
    ) -> None:
        self.state = state.copy()
        self.data = data
        self.grid = grid
        self.ind = indicators if indicators is not None else IndicatorTables(data, grid)
        self._refresh_positions()
        self._refresh_traits()
        self._refresh_cum()

    def _refresh_positions(self) -> None:
        self.dist = distance_matrix(self.state.resp_pos, self.state.item_pos)
        self.exp_dist = np.exp(self.dist)
        self.inv_exp_dist = 1.0 / self.exp_dist

    def _refresh_traits(self) -> None:
        self.exp_traits = np.exp(self.state.traits)

    def _refresh_cum(self) -> None:
        self.cum = np.einsum(
            "kij,icj->kic", self.ind.exposure_cells, self.state.baselines
        )

    def loglik(self) -> float:
        surv = float(
            (self.exp_traits[:, None, 0] * self.inv_exp_dist * self.cum[:, :, 0]).sum()
            + (self.exp_traits[:, None, 1] * self.exp_dist * self.cum[:, :, 1]).sum()
        )
        event = float(
            (self.ind.event_counts * np.log(self.state.baselines)).sum()
            + (self.ind.trait_event_counts * self.state.traits).sum()
            + (self.ind.outcome_matrix * self.dist).sum()
        )
        return event - surv

    def log_posterior(self, prior: PriorConfig) -> float:
        return self.loglik() + log_prior(self.state, prior, self.grid)

    def check(self, atol: float = 1e-8) -> None:
        """Compare the cached log likelihood against a fresh evaluation."""
        fresh = log_likelihood(self.state, self.data, self.grid, self.ind)
        cached = self.loglik()
        if not math.isclose(fresh, cached, rel_tol=1e-10, abs_tol=atol):
            raise NumericalError(
                f"workspace cache drifted: cached {cached!r} vs fresh {fresh!r}"
            )

    # -- conjugate blocks ---------------------------------------------------

    def update_lambda(self, prior: PriorConfig, rng: np.random.Generator) -> None:
        shape, rate = lambda_full_conditional(
            self.state, self.data, self.grid, self.ind, prior
        )
        if np.any(rate <= 0) or not np.all(np.isfinite(rate)):
            raise NumericalError("nonpositive or nonfinite rate in baseline update")
        self.state.baselines = (
            np.maximum(rng.standard_gamma(shape), _BASELINE_FLOOR) / rate
        )
        self._refresh_cum()

    def update_sigma2(self, prior: PriorConfig, rng: np.random.Generator) -> None:
        shape, scale = sigma2_full_conditional(self.state.traits, prior)
        self.state.sigma2 = float(scale / rng.standard_gamma(shape))

    # -- Metropolis blocks ----------------------------------------------------

    def trait_loglik_delta(self, cidx: int, proposal: np.ndarray) -> np.ndarray:
        """Per-respondent log-likelihood change for new column-cidx traits."""
        exp_d = self.inv_exp_dist if cidx == 0 else self.exp_dist
        weight = (exp_d * self.cum[:, :, cidx]).sum(axis=1)
        cur = self.state.traits[:, cidx]
        return self.ind.trait_event_counts[:, cidx] * (proposal - cur) - (
            np.exp(proposal) - np.exp(cur)
        ) * weight

    def update_traits(
        self, prior: PriorConfig, step: float, rng: np.random.Generator
    ) -> np.ndarray:
        """One random-walk proposal per trait entry; returns (n, 2) accept flags.

        Rows are conditionally independent given everything else, so all
        respondents are proposed and accepted jointly per outcome column.
        """
        n = self.state.n
        accepted = np.zeros((n, 2), dtype=bool)
        for cidx in (0, 1):
            cur = self.state.traits[:, cidx]
            prop = cur + step * rng.standard_normal(n)
            d_lik = self.trait_loglik_delta(cidx, prop)
            d_prior = -(prop**2 - cur**2) / (2.0 * self.state.sigma2)
            acc = np.log(rng.random(n)) < d_lik + d_prior
            self.state.traits[acc, cidx] = prop[acc]
            accepted[:, cidx] = acc
        self._refresh_traits()
        return accepted

    def _position_delta(
        self, new_dist: np.ndarray, row_axis: int
    ) -> np.ndarray:
        """Log-likelihood change per respondent (axis 1 sums) or item (axis 0)."""
        sum_axis = 1 - row_axis
        d_event = (self.ind.outcome_matrix * (new_dist - self.dist)).sum(axis=sum_axis)
        new_exp = np.exp(new_dist)
        neg = (1.0 / new_exp - self.inv_exp_dist) * self.cum[:, :, 0]
        pos = (new_exp - self.exp_dist) * self.cum[:, :, 1]
        if row_axis == 0:
            d_surv = (
                self.exp_traits[:, 0] * neg.sum(axis=1)
                + self.exp_traits[:, 1] * pos.sum(axis=1)
            )
        else:
            d_surv = (self.exp_traits[:, None, 0] * neg).sum(axis=0) + (
                self.exp_traits[:, None, 1] * pos
            ).sum(axis=0)
        return d_event - d_surv

    def respondent_loglik_delta(self, new_resp_pos: np.ndarray) -> np.ndarray:
        new_dist = distance_matrix(new_resp_pos, self.state.item_pos)
        return self._position_delta(new_dist, row_axis=0)

    def item_loglik_delta(self, new_item_pos: np.ndarray) -> np.ndarray:
        new_dist = distance_matrix(self.state.resp_pos, new_item_pos)
        return self._position_delta(new_dist, row_axis=1)

    def update_positions(
        self,
        prior: PriorConfig,
        step_resp: float,
        step_item: float,
        rng: np.random.Generator,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Row-wise random walks for both position matrices.

        Respondent rows touch only their own row of cells and item rows only
        their own column, so each side is proposed and accepted per row.
        Returns (respondent flags (n,), item flags (p,)).
        """
        st = self.state
        g2 = st.gamma**2

        prop_z = st.resp_pos + step_resp * rng.standard_normal(st.resp_pos.shape)
        new_dist = distance_matrix(prop_z, st.item_pos)
        d_lik = self._position_delta(new_dist, row_axis=0)
        d_prior = -((prop_z**2).sum(axis=1) - (st.resp_pos**2).sum(axis=1)) / (2 * g2)
        acc_z = np.log(rng.random(st.n)) < d_lik + d_prior
        if acc_z.any():
            st.resp_pos[acc_z] = prop_z[acc_z]
            self.dist[acc_z] = new_dist[acc_z]
            self.exp_dist[acc_z] = np.exp(new_dist[acc_z])
            self.inv_exp_dist[acc_z] = 1.0 / self.exp_dist[acc_z]

        prop_w = st.item_pos + step_item * rng.standard_normal(st.item_pos.shape)
        new_dist = distance_matrix(st.resp_pos, prop_w)
        d_lik = self._position_delta(new_dist, row_axis=1)
        d_prior = -((prop_w**2).sum(axis=1) - (st.item_pos**2).sum(axis=1)) / (2 * g2)
        acc_w = np.log(rng.random(st.p)) < d_lik + d_prior
        if acc_w.any():
            st.item_pos[acc_w] = prop_w[acc_w]
            self.dist[:, acc_w] = new_dist[:, acc_w]
            self.exp_dist[:, acc_w] = np.exp(new_dist[:, acc_w])
            self.inv_exp_dist[:, acc_w] = 1.0 / self.exp_dist[:, acc_w]

        return acc_z, acc_w

    def update_gamma(
        self, prior: PriorConfig, step: float, rng: np.random.Generator
    ) -> bool:
        st = self.state
        proposal = math.exp(math.log(st.gamma) + step * rng.standard_normal())
        ss = float((st.resp_pos**2).sum() + (st.item_pos**2).sum())
        coords = (st.n + st.p) * st.d
        log_r = gamma_log_acceptance(st.gamma, proposal, ss, coords, prior)
        if math.log(rng.random()) < log_r:
            st.gamma = proposal
            return True
        return False


# -- public single-step operations (convenience wrappers) --------------------


def gibbs_update_lambda(
    state: ModelState,
    data: ResponseDataset,
    grid: TimeGrid,
    indicators: IndicatorTables,
    prior: PriorConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw all baseline hazards from their Gamma full conditionals."""
    ws = LikelihoodWorkspace(state, data, grid, indicators)
    ws.update_lambda(prior, rng)
    return ws.state.baselines


def gibbs_update_sigma2(
    traits: np.ndarray, prior: PriorConfig, rng: np.random.Generator
) -> float:
    """Draw the trait variance from its Inv-Gamma full conditional."""
    shape, scale = sigma2_full_conditional(traits, prior)
    return float(scale / rng.standard_gamma(shape))


def mh_update_theta(
    state: ModelState,
    data: ResponseDataset,
    grid: TimeGrid,
    indicators: IndicatorTables,
    prior: PriorConfig,
    step: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One Metropolis sweep over all traits; returns (traits, accept flags)."""
    ws = LikelihoodWorkspace(state, data, grid, indicators)
    accepted = ws.update_traits(prior, step, rng)
    return ws.state.traits, accepted


def mh_update_positions(
    state: ModelState,
    data: ResponseDataset,
    grid: TimeGrid,
    indicators: IndicatorTables,
    prior: PriorConfig,
    step_resp: float,
    step_item: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One Metropolis sweep over both position matrices."""
    ws = LikelihoodWorkspace(state, data, grid, indicators)
    acc_z, acc_w = ws.update_positions(prior, step_resp, step_item, rng)
    return ws.state.resp_pos, ws.state.item_pos, acc_z, acc_w


def mh_update_gamma(
    state: ModelState, prior: PriorConfig, step: float, rng: np.random.Generator
) -> tuple[float, bool]:
    """Log-normal random-walk update of the embedding scale."""
    proposal = math.exp(math.log(state.gamma) + step * rng.standard_normal())
    ss = float((state.resp_pos**2).sum() + (state.item_pos**2).sum())
    coords = (state.n + state.p) * state.d
    log_r = gamma_log_acceptance(state.gamma, proposal, ss, coords, prior)
    if math.log(rng.random()) < log_r:
        return proposal, True
    return state.gamma, False


# -- chain runner -------------------------------------------------------------


@dataclass
class ChainConfig:
    """MCMC schedule and proposal settings.

    ``burn_in`` defaults to half the iterations.  Steps adapt during burn-in
    only (window-wise Robbins-Monro on the log step), then stay frozen.
    """

    iterations: int = 20000
    burn_in: int | None = None
    thin: int = 10
    chain_count: int = 3
    seed: int = 0
    step_theta: float = 0.3
    step_resp: float = 0.3
    step_item: float = 0.3
    step_gamma: float = 0.2
    adapt_window: int = 50
    target_accept: float = 0.3
    check_every: int = 0

    def resolved_burn_in(self) -> int:
        return self.iterations // 2 if self.burn_in is None else self.burn_in

    def validate(self) -> "ChainConfig":
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.resolved_burn_in() < self.iterations:
            raise ValueError("burn_in must be < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.chain_count < 1:
            raise ValueError("chain_count must be >= 1")
        if min(self.step_theta, self.step_resp, self.step_item, self.step_gamma) <= 0:
            raise ValueError("proposal steps must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        return self

    def draws_per_chain(self) -> int:
        return (self.iterations - self.resolved_burn_in()) // self.thin


@dataclass
class ChainDraws:
    """Retained states of one chain plus bookkeeping."""

    states: list[ModelState]
    log_posterior: np.ndarray
    acceptance: dict[str, float]
    steps: dict[str, float]


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws across chains."""

    chains: list[ChainDraws]

    @property
    def chain_count(self) -> int:
        return len(self.chains)

    @property
    def draw_count(self) -> int:
        return sum(len(c.states) for c in self.chains)

    def all_states(self) -> list[ModelState]:
        return [s for c in self.chains for s in c.states]

    def all_log_posterior(self) -> np.ndarray:
        return np.concatenate([c.log_posterior for c in self.chains])

    def map_state(self) -> ModelState:
        """State of the maximum-log-posterior retained draw."""
        states = self.all_states()
        return states[int(np.argmax(self.all_log_posterior()))]

    def scalar_chains(
        self, extractor: Callable[[ModelState], float]
    ) -> list[np.ndarray]:
        return [np.array([extractor(s) for s in c.states]) for c in self.chains]


def initial_state(
    data: ResponseDataset,
    grid: TimeGrid,
    prior: PriorConfig,
    rng: np.random.Generator,
    dim: int = 2,
) -> ModelState:
    """Random starting values: traits and positions from unit-scale priors,
    baselines from their prior, sigma2 = gamma = 1."""
    n, p, J = data.n, data.p, grid.J
    lt = prior.lambda_tilde(grid)
    baselines = np.maximum(
        rng.standard_gamma(np.broadcast_to(0.5 * lt, (p, 2, J))), _BASELINE_FLOOR
    ) / prior.lambda_rate
    return ModelState(
        traits=rng.standard_normal((n, 2)),
        baselines=baselines,
        resp_pos=rng.standard_normal((n, dim)),
        item_pos=rng.standard_normal((p, dim)),
        sigma2=1.0,
        gamma=1.0,
    )


_MH_BLOCKS = ("traits", "resp_pos", "item_pos", "gamma")


def run_chain(
    data: ResponseDataset,
    grid: TimeGrid,
    prior: PriorConfig,
    config: ChainConfig,
    seed,
    dim: int = 2,
    init: ModelState | None = None,
) -> ChainDraws:
    """Run one chain; returns thinned post-burn-in draws.

    Identical seeds give bit-identical draw sequences.  Aborts with
    NumericalError if the log posterior turns nonfinite, naming the
    iteration.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    state = init.copy() if init is not None else initial_state(
        data, grid, prior, rng, dim
    )
    indicators = IndicatorTables(data, grid)
    ws = LikelihoodWorkspace(state, data, grid, indicators)

    burn_in = config.resolved_burn_in()
    steps = {
        "traits": config.step_theta,
        "resp_pos": config.step_resp,
        "item_pos": config.step_item,
        "gamma": config.step_gamma,
    }
    win_acc = {b: 0.0 for b in _MH_BLOCKS}
    win_tot = {b: 0.0 for b in _MH_BLOCKS}
    post_acc = {b: 0.0 for b in _MH_BLOCKS}
    post_tot = {b: 0.0 for b in _MH_BLOCKS}
    windows_done = 0

    stored: list[ModelState] = []
    log_posts: list[float] = []

    for it in range(1, config.iterations + 1):
        ws.update_lambda(prior, rng)
        ws.update_sigma2(prior, rng)
        acc_t = ws.update_traits(prior, steps["traits"], rng)
        acc_z, acc_w = ws.update_positions(
            prior, steps["resp_pos"], steps["item_pos"], rng
        )
        acc_g = ws.update_gamma(prior, steps["gamma"], rng)

        counts = {
            "traits": (acc_t.sum(), acc_t.size),
            "resp_pos": (acc_z.sum(), acc_z.size),
            "item_pos": (acc_w.sum(), acc_w.size),
            "gamma": (float(acc_g), 1.0),
        }
        tally_acc, tally_tot = (
            (win_acc, win_tot) if it <= burn_in else (post_acc, post_tot)
        )
        for b, (a, t) in counts.items():
            tally_acc[b] += a
            tally_tot[b] += t

        if it <= burn_in and it % config.adapt_window == 0:
            windows_done += 1
            gain = windows_done**-0.6
            for b in _MH_BLOCKS:
                if win_tot[b] > 0:
                    rate = win_acc[b] / win_tot[b]
                    steps[b] = float(
                        np.clip(
                            steps[b] * math.exp(gain * (rate - config.target_accept)),
                            1e-6,
                            1e6,
                        )
                    )
                win_acc[b] = win_tot[b] = 0.0

        lp = ws.log_posterior(prior)
        if not math.isfinite(lp):
            raise NumericalError(
                f"nonfinite log posterior at iteration {it}; "
                f"last block scanned: gamma (scan order: baselines, sigma2, "
                f"traits, resp_pos, item_pos, gamma)"
            )
        if config.check_every and it % config.check_every == 0:
            ws.check()

        if it > burn_in and (it - burn_in) % config.thin == 0:
            stored.append(ws.state.copy())
            log_posts.append(lp)

    acceptance = {
        b: (post_acc[b] / post_tot[b]) if post_tot[b] else float("nan")
        for b in _MH_BLOCKS
    }
    return ChainDraws(
        states=stored,
        log_posterior=np.array(log_posts),
        acceptance=acceptance,
        steps=dict(steps),
    )


def _chain_task(args) -> ChainDraws:
    data, grid, prior, config, seed, dim = args
    return run_chain(data, grid, prior, config, seed, dim=dim)


def worker_count() -> int:
    """Worker processes for multi-chain runs, from LSAM_WORKERS (default 1)."""
    try:
        return max(1, int(os.environ.get("LSAM_WORKERS", "1")))
    except ValueError:
        return 1


def run_chains(
    data: ResponseDataset,
    grid: TimeGrid,
    prior: PriorConfig,
    config: ChainConfig,
    dim: int = 2,
) -> PosteriorDraws:
    """Run ``config.chain_count`` independent chains.

    Per-chain seeds are spawned from the master seed, so results do not
    depend on whether chains execute sequentially or in worker processes.
    """
    config.validate()
    seeds = np.random.SeedSequence(config.seed).spawn(config.chain_count)
    tasks = [(data, grid, prior, config, s, dim) for s in seeds]
    workers = worker_count()
    if workers > 1 and config.chain_count > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.chain_count)) as ex:
            chains = list(ex.map(_chain_task, tasks))
    else:
        chains = [_chain_task(t) for t in tasks]
    return PosteriorDraws(chains=chains)


# -- convergence diagnostics ----------------------------------------------------


def psrf(sequences: Sequence[np.ndarray]) -> float:
    """Potential scale reduction factor from per-chain scalar sequences.

    Sequences are truncated to the shortest length.  Returns NaN when the
    within-chain variance is zero (diagnostic undefined).
    """
    if len(sequences) < 2:
        raise ValueError("need at least two sequences")
    length = min(len(s) for s in sequences)
    if length < 10:
        raise ValueError("need at least 10 draws per sequence")
    x = np.stack([np.asarray(s, dtype=float)[:length] for s in sequences])
    w = float(np.mean(np.var(x, axis=1, ddof=1)))
    if w == 0.0:
        return float("nan")
    b = length * float(np.var(np.mean(x, axis=1), ddof=1))
    var_hat = (length - 1) / length * w + b / length
    return float(np.sqrt(var_hat / w))


def gelman_rubin(
    draws: PosteriorDraws, extractor: Callable[[ModelState], float]
) -> float:
    """R-hat for a scalar functional of the state.

    With a single chain, the chain is split in half and the halves are
    compared, the standard single-chain fallback.  Use identification-
    invariant functionals (e.g. specific distances) for position parameters.
    """
    seqs = draws.scalar_chains(extractor)
    if len(seqs) == 1:
        full = seqs[0]
        half = len(full) // 2
        seqs = [full[:half], full[half : 2 * half]]
    return psrf(seqs)


def diagnostics_report(
    draws: PosteriorDraws, n_distance_pairs: int = 20, seed: int = 0
) -> dict:
    """Acceptance rates plus an R-hat table over variance, scale, all
    baselines, and a seeded random selection of respondent-item distances."""
    report: dict = {
        "chains": draws.chain_count,
        "draws_per_chain": [len(c.states) for c in draws.chains],
        "acceptance": [c.acceptance for c in draws.chains],
        "final_steps": [c.steps for c in draws.chains],
        "log_posterior": {
            "per_chain_mean": [float(c.log_posterior.mean()) for c in draws.chains],
            "per_chain_last": [float(c.log_posterior[-1]) for c in draws.chains],
        },
    }
    min_draws = min(len(c.states) for c in draws.chains)
    needed = 10 if draws.chain_count > 1 else 20
    if min_draws < needed:
        report["r_hat"] = {
            "available": False,
            "guidance": (
                f"need at least {needed} retained draws per chain to compute "
                f"R-hat (have {min_draws}); increase iterations or reduce thinning"
            ),
        }
        return report

    first = draws.chains[0].states[0]
    n, p = first.n, first.p
    rng = np.random.default_rng(seed)
    n_pairs = min(n_distance_pairs, n * p)
    flat = rng.choice(n * p, size=n_pairs, replace=False)
    pairs = [(int(f) // p, int(f) % p) for f in flat]

    lam_rhat = np.empty_like(first.baselines)
    for i in range(p):
        for cidx in range(2):
            for j in range(first.J):
                lam_rhat[i, cidx, j] = gelman_rubin(
                    draws, lambda s, a=i, b=cidx, c=j: s.baselines[a, b, c]
                )
    dist_rhat = [
        gelman_rubin(
            draws,
            lambda s, kk=k, ii=i: float(
                np.linalg.norm(s.resp_pos[kk] - s.item_pos[ii])
            ),
        )
        for k, i in pairs
    ]
    report["r_hat"] = {
        "available": True,
        "sigma2": gelman_rubin(draws, lambda s: s.sigma2),
        "gamma": gelman_rubin(draws, lambda s: s.gamma),
        "baselines_max": float(np.nanmax(lam_rhat)),
        "baselines": lam_rhat.tolist(),
        "distance_pairs": pairs,
        "distances": [float(r) for r in dist_rhat],
        "distances_max": float(np.nanmax(dist_rhat)) if dist_rhat else float("nan"),
    }
    return report
