"""Domain types and closed-form math for the latent space accumulator model.

Two outcome processes race inside every respondent-item cell: a negative
accumulator (c = -1) and a positive one (c = +1).  Each has a
piecewise-constant baseline hazard per item, scaled by exp(trait + c * dist)
where dist is the respondent-item distance in a low-dimensional embedding.
The first accumulator to finish fixes the observed outcome and the response
time; times past the grid's upper cut are censored and contribute survival
mass only.

All types are immutable value objects once built and every operation here is
a pure function of its inputs, so cells can be evaluated concurrently.

Array axis conventions used throughout the package:

* outcome axis has length 2 with index 0 <-> c = -1 and index 1 <-> c = +1,
* respondents are ``k in 0..n-1``, items ``i in 0..p-1`` (0-based),
* grid intervals are numbered ``j in 1..J`` in public signatures, matching
  the usual survival-analysis convention; internal arrays are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "Outcome",
    "OUTCOME_SIGNS",
    "outcome_index",
    "DomainError",
    "NumericalError",
    "TimeGrid",
    "ResponseRecord",
    "ResponseDataset",
    "ModelState",
    "IndicatorTables",
    "pair_distance",
    "distance_matrix",
    "hazard_at",
    "cumulative_baseline",
    "overall_hazard_segment",
    "survival",
    "log_joint_density",
    "log_likelihood",
    "cif",
]


class Outcome(IntEnum):
    """The two competing response outcomes."""

    NEGATIVE = -1
    POSITIVE = 1


#: Signs along the outcome axis: column 0 is the negative accumulator.
OUTCOME_SIGNS = np.array([-1.0, 1.0])


def outcome_index(c: int) -> int:
    """Map an outcome value (-1 or +1) to its array column (0 or 1)."""
    if c == -1:
        return 0
    if c == 1:
        return 1
    raise ValueError(f"outcome must be -1 or +1, got {c!r}")


class DomainError(ValueError):
    """A time argument falls outside the grid's support."""


class NumericalError(ArithmeticError):
    """A likelihood evaluation produced a nonfinite value."""


@dataclass(frozen=True)
class TimeGrid:
    """Cut points 0 = s_0 < s_1 < ... < s_J partitioning response time.

    Interval j (1-based) is [s_{j-1}, s_j), right-open, except that t = s_J
    belongs to interval J so the maximal observable time is representable.
    """

    cuts: np.ndarray

    def __post_init__(self) -> None:
        cuts = np.array(self.cuts, dtype=float)
        if cuts.ndim != 1 or cuts.size < 2:
            raise ValueError("grid needs at least two cut points (J >= 1)")
        if cuts[0] != 0.0:
            raise ValueError("first cut point must be 0")
        if not np.all(np.isfinite(cuts)):
            raise ValueError("cut points must be finite")
        if not np.all(np.diff(cuts) > 0):
            raise ValueError("cut points must be strictly increasing")
        cuts.flags.writeable = False
        object.__setattr__(self, "cuts", cuts)

    @property
    def J(self) -> int:
        return self.cuts.size - 1

    @property
    def upper(self) -> float:
        """s_J, the right end of the supported time range."""
        return float(self.cuts[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.cuts)

    def segment_of(self, t: float) -> int:
        """0-based index of the interval containing t, for t in (0, s_J]."""
        if not 0.0 < t <= self.upper:
            raise DomainError(f"time {t} outside (0, {self.upper}]")
        j = int(np.searchsorted(self.cuts, t, side="right"))
        return min(j, self.J) - 1

    def exposures(self, t) -> np.ndarray:
        """Overlap of [0, t) with each interval; rows sum to t.

        Accepts a scalar or an array of times; the interval axis is appended
        last.
        """
        t_arr = np.asarray(t, dtype=float)
        return np.clip(
            np.minimum(t_arr[..., None], self.cuts[1:]) - self.cuts[:-1], 0.0, None
        )


@dataclass(frozen=True)
class ResponseRecord:
    """One observed cell: respondent k answered item i.

    ``outcome`` is -1/+1 for an observed response and None when the cell is
    censored, in which case ``time`` is the censoring limit.
    """

    respondent: int
    item: int
    outcome: int | None
    time: float

    def __post_init__(self) -> None:
        if self.time <= 0 or not math.isfinite(self.time):
            raise ValueError(f"response time must be positive, got {self.time}")
        if self.outcome is not None and self.outcome not in (-1, 1):
            raise ValueError(f"outcome must be -1, +1 or None, got {self.outcome!r}")

    @property
    def censored(self) -> bool:
        return self.outcome is None


class ResponseDataset:
    """Observed (respondent, item, outcome, time) records with index structures.

    At most one record per (k, i) cell.  Respondent and item indices must be
    dense in 0..n-1 / 0..p-1; missing cells are allowed (they simply
    contribute nothing to the likelihood).
    """

    def __init__(
        self,
        records: Sequence[ResponseRecord],
        n: int | None = None,
        p: int | None = None,
        respondent_labels: Sequence[str] | None = None,
        item_labels: Sequence[str] | None = None,
    ) -> None:
        records = tuple(records)
        if n is None or p is None:
            if not records:
                raise ValueError("n and p are required for an empty dataset")
            n = max(r.respondent for r in records) + 1
            p = max(r.item for r in records) + 1
        self.records = records
        self.n = int(n)
        self.p = int(p)
        self.respondent_labels = (
            list(respondent_labels)
            if respondent_labels is not None
            else [str(k) for k in range(self.n)]
        )
        self.item_labels = (
            list(item_labels)
            if item_labels is not None
            else [str(i) for i in range(self.p)]
        )
        if len(self.respondent_labels) != self.n or len(self.item_labels) != self.p:
            raise ValueError("label lists must match n and p")

        self.respondents = np.array([r.respondent for r in records], dtype=np.intp)
        self.items = np.array([r.item for r in records], dtype=np.intp)
        self.outcomes = np.array(
            [0 if r.censored else r.outcome for r in records], dtype=np.int8
        )
        self.times = np.array([r.time for r in records], dtype=float)
        self.censored = np.array([r.censored for r in records], dtype=bool)

        if records:
            if self.respondents.min() < 0 or self.respondents.max() >= self.n:
                raise ValueError("respondent index out of range")
            if self.items.min() < 0 or self.items.max() >= self.p:
                raise ValueError("item index out of range")
            if len(set(np.unique(self.respondents))) != self.n:
                raise ValueError("respondent indices must be dense in 0..n-1")
            if len(set(np.unique(self.items))) != self.p:
                raise ValueError("item indices must be dense in 0..p-1")

        self._cells: dict[tuple[int, int], ResponseRecord] = {}
        for r in records:
            key = (r.respondent, r.item)
            if key in self._cells:
                raise ValueError(f"duplicate record for cell {key}")
            self._cells[key] = r

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ResponseRecord]:
        return iter(self.records)

    def cell(self, k: int, i: int) -> ResponseRecord | None:
        return self._cells.get((k, i))

    @property
    def outcome_matrix(self) -> np.ndarray:
        """(n, p) int8 matrix: -1/+1 observed outcome, 0 censored or missing."""
        out = np.zeros((self.n, self.p), dtype=np.int8)
        out[self.respondents, self.items] = self.outcomes
        return out

    @property
    def observed_mask(self) -> np.ndarray:
        """(n, p) bool: True where a record (censored or not) exists."""
        mask = np.zeros((self.n, self.p), dtype=bool)
        mask[self.respondents, self.items] = True
        return mask


@dataclass
class ModelState:
    """One full parameter configuration.

    traits      (n, 2)    accumulation-rate offsets theta, column order (-1, +1)
    baselines   (p, 2, J) piecewise-constant baseline hazards, all > 0
    resp_pos    (n, d)    respondent embedding rows
    item_pos    (p, d)    item embedding rows
    sigma2      trait variance, > 0
    gamma       embedding scale, > 0
    """

    traits: np.ndarray
    baselines: np.ndarray
    resp_pos: np.ndarray
    item_pos: np.ndarray
    sigma2: float
    gamma: float

    @property
    def n(self) -> int:
        return self.traits.shape[0]

    @property
    def p(self) -> int:
        return self.baselines.shape[0]

    @property
    def J(self) -> int:
        return self.baselines.shape[2]

    @property
    def d(self) -> int:
        return self.resp_pos.shape[1]

    def copy(self) -> "ModelState":
        return ModelState(
            traits=self.traits.copy(),
            baselines=self.baselines.copy(),
            resp_pos=self.resp_pos.copy(),
            item_pos=self.item_pos.copy(),
            sigma2=float(self.sigma2),
            gamma=float(self.gamma),
        )

    def validate(self) -> "ModelState":
        if self.traits.shape != (self.n, 2):
            raise ValueError("traits must have shape (n, 2)")
        if self.baselines.shape != (self.p, 2, self.J):
            raise ValueError("baselines must have shape (p, 2, J)")
        if self.resp_pos.shape != (self.n, self.d) or self.item_pos.shape != (
            self.p,
            self.d,
        ):
            raise ValueError("position matrices must share the embedding dimension")
        if not np.all(np.isfinite(self.traits)):
            raise ValueError("traits must be finite")
        if not (np.all(np.isfinite(self.baselines)) and np.all(self.baselines > 0)):
            raise ValueError("baselines must be strictly positive and finite")
        if not (
            np.all(np.isfinite(self.resp_pos)) and np.all(np.isfinite(self.item_pos))
        ):
            raise ValueError("positions must be finite")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError("sigma2 must be positive")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive")
        return self

    def distances(self) -> np.ndarray:
        """(n, p) Euclidean distances between respondent and item positions."""
        return distance_matrix(self.resp_pos, self.item_pos)


def distance_matrix(resp_pos: np.ndarray, item_pos: np.ndarray) -> np.ndarray:
    diff = resp_pos[:, None, :] - item_pos[None, :, :]
    return np.sqrt(np.einsum("kid,kid->ki", diff, diff))


def pair_distance(state: ModelState, k: int, i: int) -> float:
    return float(np.linalg.norm(state.resp_pos[k] - state.item_pos[i]))


class IndicatorTables:
    """Event-interval, outcome, and exposure indicators for a dataset.

    Per record r (aligned with ``data.records``):

    * ``delta[r, j]``: 1 on the interval containing the recorded time, all
      zero for censored records,
    * ``nu[r, c]``: 1 on the observed outcome column, all zero when censored,
    * ``exposure[r, j]``: time spent in interval j; rows sum to the recorded
      time.

    Dense derived tensors used by the likelihood and the sampler:

    * ``exposure_cells`` (n, p, J): exposure scattered to cells (zeros where
      no record exists),
    * ``event_counts`` (p, 2, J): number of events per item, outcome and
      interval,
    * ``trait_event_counts`` (n, 2): events per respondent and outcome,
    * ``outcome_matrix`` (n, p): -1/+1 observed outcome, 0 otherwise.
    """

    def __init__(self, data: ResponseDataset, grid: TimeGrid) -> None:
        if len(data) and data.times.max() > grid.upper + 1e-12:
            raise DomainError("dataset contains times beyond the grid's upper cut")
        self.data = data
        self.grid = grid
        n, p, J = data.n, data.p, grid.J
        R = len(data)

        self.exposure = grid.exposures(data.times) if R else np.zeros((0, J))

        self.delta = np.zeros((R, J), dtype=np.int8)
        self.nu = np.zeros((R, 2), dtype=np.int8)
        uncens = ~data.censored
        if R:
            segs = np.minimum(
                np.searchsorted(grid.cuts, data.times, side="right"), J
            ) - 1
            rows = np.arange(R)
            self.delta[rows[uncens], segs[uncens]] = 1
            cols = (data.outcomes[uncens] + 1) // 2
            self.nu[rows[uncens], cols] = 1
            self.event_segments = segs
        else:
            self.event_segments = np.zeros(0, dtype=np.intp)

        self.exposure_cells = np.zeros((n, p, J))
        self.exposure_cells[data.respondents, data.items, :] = self.exposure

        self.event_counts = np.zeros((p, 2, J))
        if R:
            np.add.at(
                self.event_counts,
                (
                    data.items[uncens],
                    (data.outcomes[uncens] + 1) // 2,
                    segs[uncens],
                ),
                1.0,
            )

        self.trait_event_counts = np.zeros((n, 2))
        if R:
            np.add.at(
                self.trait_event_counts,
                (data.respondents[uncens], (data.outcomes[uncens] + 1) // 2),
                1.0,
            )

        self.outcome_matrix = data.outcome_matrix.astype(float)


def _segment_rates(state: ModelState, k: int, i: int) -> np.ndarray:
    """(2, J) per-segment hazards r[c, j] = lambda * exp(trait + c * dist)."""
    d = pair_distance(state, k, i)
    scale = np.exp(state.traits[k] + OUTCOME_SIGNS * d)  # (2,)
    return state.baselines[i] * scale[:, None]


def hazard_at(
    state: ModelState, grid: TimeGrid, k: int, i: int, c: int, t: float
) -> float:
    """Instantaneous rate of outcome c at time t for cell (k, i).

    Raises DomainError for t outside (0, s_J].
    """
    cidx = outcome_index(c)
    j = grid.segment_of(t)
    d = pair_distance(state, k, i)
    return float(
        state.baselines[i, cidx, j]
        * math.exp(state.traits[k, cidx] + OUTCOME_SIGNS[cidx] * d)
    )


def cumulative_baseline(
    baselines: np.ndarray, grid: TimeGrid, i: int, c: int, t: float
) -> float:
    """Integral of the piecewise-constant baseline for (item i, outcome c) up to t.

    Continuous, piecewise linear and nondecreasing in t; zero at t = 0.
    """
    if not 0.0 <= t <= grid.upper:
        raise DomainError(f"time {t} outside [0, {grid.upper}]")
    return float(grid.exposures(t) @ baselines[i, outcome_index(c), :])


def overall_hazard_segment(
    state: ModelState, grid: TimeGrid, k: int, i: int, j: int
) -> float:
    """Total two-accumulator hazard g on segment j (1-based)."""
    if not 1 <= j <= grid.J:
        raise IndexError(f"segment {j} outside 1..{grid.J}")
    d = pair_distance(state, k, i)
    lam = state.baselines[i, :, j - 1]
    return float(lam @ np.exp(state.traits[k] + OUTCOME_SIGNS * d))


def survival(state: ModelState, grid: TimeGrid, k: int, i: int, t: float) -> float:
    """P(T > t) for cell (k, i): no accumulator has finished by t."""
    if not 0.0 <= t <= grid.upper:
        raise DomainError(f"time {t} outside [0, {grid.upper}]")
    rates = _segment_rates(state, k, i)
    return float(np.exp(-(rates.sum(axis=0) @ grid.exposures(t))))


def log_joint_density(
    state: ModelState, grid: TimeGrid, k: int, i: int, c: int, t: float
) -> float:
    """Log density of (T = t, Y = c), i.e. log hazard + log survival.

    Exponentiated and accumulated over (t, c) on (0, s_J] x {-1, +1} plus the
    censoring atom S(s_J), the total mass is 1.
    """
    cidx = outcome_index(c)
    j = grid.segment_of(t)
    d = pair_distance(state, k, i)
    log_h = (
        math.log(state.baselines[i, cidx, j])
        + state.traits[k, cidx]
        + OUTCOME_SIGNS[cidx] * d
    )
    rates = _segment_rates(state, k, i)
    log_s = -(rates.sum(axis=0) @ grid.exposures(t))
    value = log_h + log_s
    if not math.isfinite(value):
        raise NumericalError(f"nonfinite joint density at cell (k={k}, i={i}), t={t}")
    return float(value)


def cif(state: ModelState, grid: TimeGrid, k: int, i: int, c: int, t: float) -> float:
    """P(T <= t, Y = c): cumulative incidence of outcome c by time t.

    Evaluated in closed form per segment: within a segment the cause-specific
    hazard is constant and the survival curve is exponential, so each segment
    contributes (r_c / g) * S(start) * (1 - exp(-g * dt)).
    """
    if not 0.0 <= t <= grid.upper:
        raise DomainError(f"time {t} outside [0, {grid.upper}]")
    cidx = outcome_index(c)
    rates = _segment_rates(state, k, i)
    g = rates.sum(axis=0)
    expos = grid.exposures(t)
    cum_start = np.concatenate(([0.0], np.cumsum(g * expos)))[:-1]
    contrib = (rates[cidx] / g) * np.exp(-cum_start) * (-np.expm1(-g * expos))
    return float(contrib.sum())


def log_likelihood(
    state: ModelState,
    data: ResponseDataset,
    grid: TimeGrid,
    indicators: IndicatorTables | None = None,
) -> float:
    """Log likelihood of the dataset under one parameter configuration.

    Uncensored cells contribute the log joint density of their (time,
    outcome); censored cells contribute log survival at the censoring time
    only.  Computed in log domain throughout; invariant under rigid motions
    of the embedding since positions enter through distances alone.
    """
    ind = indicators if indicators is not None else IndicatorTables(data, grid)
    D = state.distances()
    cum = np.einsum("kij,icj->kic", ind.exposure_cells, state.baselines)
    scale = np.exp(state.traits[:, None, :] + OUTCOME_SIGNS * D[:, :, None])
    surv_term = float((scale * cum).sum())
    event_term = float(
        (ind.event_counts * np.log(state.baselines)).sum()
        + (ind.trait_event_counts * state.traits).sum()
        + (ind.outcome_matrix * D).sum()
    )
    return event_term - surv_term
