"""Identification, posterior summaries, contrasts, and co-clustering.

Latent positions are identified only up to rigid motions, so draws are
aligned by Procrustes matching before coordinates are summarized.  Distances
are the inferential quantity and are preserved exactly by the alignment;
coordinates are nuisance.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.cluster import KMeans

from lsam.inference import PosteriorDraws
from lsam.model import ModelState

__all__ = [
    "AlignedDraws",
    "Coclustering",
    "procrustes_align",
    "align_configuration",
    "delta_lambda",
    "delta_theta",
    "contrast_summary",
    "posterior_mean_positions",
    "posterior_mean_distance",
    "median_heuristic_bandwidth",
    "rbf_affinity",
    "spectral_cocluster",
    "sse_curve",
    "elbow_from_curve",
    "elbow_select_k",
]


@dataclass
class AlignedDraws:
    """Procrustes-matched posterior draws plus the reference configuration."""

    states: list[ModelState]
    log_posterior: np.ndarray
    reference: np.ndarray

    @property
    def n(self) -> int:
        return self.states[0].n

    @property
    def p(self) -> int:
        return self.states[0].p


def _stack_positions(state: ModelState) -> np.ndarray:
    return np.vstack([state.resp_pos, state.item_pos])


def align_configuration(
    config: np.ndarray, reference: np.ndarray
) -> np.ndarray:
    """Match one stacked configuration to the reference by translation plus
    an orthogonal transform (rotations and reflections, no scaling).

    Falls back to the identity transform (translation only) with a warning
    when the cross-covariance is rank deficient.
    """
    mu = config.mean(axis=0)
    ref_mu = reference.mean(axis=0)
    xc = config - mu
    cross = xc.T @ (reference - ref_mu)
    u, s, vt = np.linalg.svd(cross)
    if s.size == 0 or s.min() <= 1e-12 * max(s.max(), 1e-300):
        warnings.warn(
            "rank-deficient cross-covariance in Procrustes matching; "
            "using identity transform",
            RuntimeWarning,
        )
        rotation = np.eye(config.shape[1])
    else:
        rotation = u @ vt
    return xc @ rotation + ref_mu


def procrustes_align(draws: PosteriorDraws | AlignedDraws) -> AlignedDraws:
    """Align every draw's stacked (n+p, d) configuration to the configuration
    of the maximum-log-posterior draw.

    Pairwise distances within each draw are unchanged up to floating point.
    """
    if isinstance(draws, AlignedDraws):
        states = draws.states
        log_post = draws.log_posterior
    else:
        states = draws.all_states()
        log_post = draws.all_log_posterior()
    if not states:
        raise ValueError("need at least one draw to align")
    reference = _stack_positions(states[int(np.argmax(log_post))]).copy()
    n = states[0].n
    aligned = []
    for st in states:
        new = st.copy()
        matched = align_configuration(_stack_positions(st), reference)
        new.resp_pos = matched[:n]
        new.item_pos = matched[n:]
        aligned.append(new)
    return AlignedDraws(states=aligned, log_posterior=np.asarray(log_post), reference=reference)


def _draw_states(draws) -> list[ModelState]:
    if isinstance(draws, (PosteriorDraws,)):
        return draws.all_states()
    if isinstance(draws, AlignedDraws):
        return draws.states
    return list(draws)


def delta_lambda(draws, i: int, j: int) -> np.ndarray:
    """Per-draw accumulation-rate contrast lambda[i, -1, j] - lambda[i, +1, j].

    ``j`` is the 1-based interval number.  Positive values mean the negative
    accumulator runs faster for item i in that interval.  Unaffected by
    alignment (positions are not involved).
    """
    states = _draw_states(draws)
    J = states[0].J
    if not 1 <= j <= J:
        raise IndexError(f"interval {j} outside 1..{J}")
    return np.array([s.baselines[i, 0, j - 1] - s.baselines[i, 1, j - 1] for s in states])


def delta_theta(draws, k: int) -> np.ndarray:
    """Per-draw trait contrast theta[k, -1] - theta[k, +1].

    Negatively related to respondent accuracy: large positive values mean the
    negative accumulator dominates.
    """
    states = _draw_states(draws)
    return np.array([s.traits[k, 0] - s.traits[k, 1] for s in states])


def contrast_summary(samples: np.ndarray) -> dict:
    """Mean, median and central 95% interval of a posterior sample."""
    lo, hi = np.quantile(samples, [0.025, 0.975])
    return {
        "mean": float(np.mean(samples)),
        "median": float(np.median(samples)),
        "q025": float(lo),
        "q975": float(hi),
    }


def posterior_mean_positions(aligned: AlignedDraws) -> tuple[np.ndarray, np.ndarray]:
    """Mean aligned respondent and item coordinates across draws."""
    z = np.mean([s.resp_pos for s in aligned.states], axis=0)
    w = np.mean([s.item_pos for s in aligned.states], axis=0)
    return z, w


def posterior_mean_distance(draws) -> np.ndarray:
    """(n, p) mean of per-draw distance matrices; alignment-free."""
    states = _draw_states(draws)
    return np.mean([s.distances() for s in states], axis=0)


def median_heuristic_bandwidth(resp_pos: np.ndarray, item_pos: np.ndarray) -> float:
    """Median of all respondent-item distances."""
    diff = resp_pos[:, None, :] - item_pos[None, :, :]
    return float(np.median(np.sqrt((diff**2).sum(axis=2))))


def rbf_affinity(
    resp_pos: np.ndarray, item_pos: np.ndarray, bandwidth: float
) -> np.ndarray:
    """Gaussian kernel of respondent-item distances, exp(-dist^2 / (2 bw^2))."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    diff = resp_pos[:, None, :] - item_pos[None, :, :]
    sq = (diff**2).sum(axis=2)
    return np.exp(-sq / (2.0 * bandwidth**2))


@dataclass
class Coclustering:
    """Joint clustering of the two sides of a bipartite affinity matrix."""

    k: int
    respondent_labels: np.ndarray
    item_labels: np.ndarray
    bandwidth: float = float("nan")
    objectives: dict[int, float] = field(default_factory=dict)


def _bipartite_embedding(affinity: np.ndarray, k: int) -> tuple[np.ndarray, int]:
    """Joint row/column spectral embedding of the normalized affinity.

    Computes ceil(log2 k) + 1 singular vector pairs of
    D1^{-1/2} A D2^{-1/2}, drops the leading (trivial) pair, and scales the
    remaining vectors by the degree roots.  Returns the stacked
    (rows then columns) embedding and the row count.
    """
    a = np.asarray(affinity, dtype=float)
    if a.ndim != 2:
        raise ValueError("affinity must be a matrix")
    if np.any(a < 0):
        raise ValueError("affinity must be nonnegative")
    row_sums = a.sum(axis=1)
    col_sums = a.sum(axis=0)
    if np.any(row_sums == 0):
        idx = int(np.where(row_sums == 0)[0][0])
        raise ValueError(f"affinity row {idx} sums to zero")
    if np.any(col_sums == 0):
        idx = int(np.where(col_sums == 0)[0][0])
        raise ValueError(f"affinity column {idx} sums to zero")
    d1 = 1.0 / np.sqrt(row_sums)
    d2 = 1.0 / np.sqrt(col_sums)
    normalized = d1[:, None] * a * d2[None, :]
    n_vec = int(np.ceil(np.log2(max(k, 2)))) + 1
    u, _, vt = np.linalg.svd(normalized, full_matrices=False)
    n_vec = min(n_vec, u.shape[1])
    rows = d1[:, None] * u[:, 1:n_vec]
    cols = d2[:, None] * vt[1:n_vec, :].T
    if rows.shape[1] == 0:
        rows = d1[:, None] * u[:, :1]
        cols = d2[:, None] * vt[:1, :].T
    return np.vstack([rows, cols]), a.shape[0]


def spectral_cocluster(
    affinity: np.ndarray,
    k: int,
    bandwidth: float = float("nan"),
    seed: int = 0,
    restarts: int = 10,
) -> Coclustering:
    """Bipartite spectral co-clustering of respondents and items.

    Joint k-means on the spectral embedding uses seeded deterministic
    initialization with ``restarts`` restarts, keeping the best objective.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    embedding, n_rows = _bipartite_embedding(affinity, k)
    total = embedding.shape[0]
    if k > total:
        raise ValueError(f"k={k} exceeds the number of nodes {total}")
    if k == total:
        warnings.warn(
            "k equals the number of nodes; every node becomes its own cluster",
            RuntimeWarning,
        )
    km = KMeans(n_clusters=k, n_init=restarts, random_state=seed)
    labels = km.fit_predict(embedding)
    return Coclustering(
        k=k,
        respondent_labels=labels[:n_rows].copy(),
        item_labels=labels[n_rows:].copy(),
        bandwidth=bandwidth,
        objectives={k: float(km.inertia_)},
    )


def sse_curve(
    affinity: np.ndarray, k_range: Sequence[int], seed: int = 0
) -> dict[int, float]:
    """Within-cluster embedding SSE per candidate cluster count."""
    curve: dict[int, float] = {}
    for k in sorted(set(int(v) for v in k_range)):
        embedding, _ = _bipartite_embedding(affinity, k)
        km = KMeans(n_clusters=k, n_init=10, random_state=seed)
        km.fit(embedding)
        curve[k] = float(km.inertia_)
    return curve


def elbow_from_curve(curve: dict[int, float]) -> int:
    """Cluster count maximizing the discrete curvature of the SSE curve.

    Curvature at an interior K is SSE(K-1) - 2 SSE(K) + SSE(K+1); a flat or
    monotone-linear curve has no positive curvature and falls back to the
    smallest candidate with a warning.
    """
    ks = sorted(curve)
    if len(ks) < 3:
        raise ValueError("need at least 3 candidate cluster counts")
    best_k, best_curv = None, 0.0
    for a, b, c in zip(ks, ks[1:], ks[2:]):
        curv = curve[a] - 2.0 * curve[b] + curve[c]
        if curv > best_curv:
            best_k, best_curv = b, curv
    if best_k is None:
        warnings.warn(
            "SSE curve has no positive curvature; falling back to the "
            "smallest candidate cluster count",
            RuntimeWarning,
        )
        return ks[0]
    return best_k


def elbow_select_k(
    affinity: np.ndarray, k_range: Sequence[int], seed: int = 0
) -> int:
    """Pick the cluster count by the maximum-curvature elbow rule."""
    return elbow_from_curve(sse_curve(affinity, k_range, seed=seed))
