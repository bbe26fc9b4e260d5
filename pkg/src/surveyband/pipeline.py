"""Probabilistic estimation and prediction.

The procedure:

1. resample every survey many times and take per-date 2.5/97.5 percentiles
   of each category (the data-side intervals);
2. for each replicate, resample all surveys once and fit the rate
   parameters by maximizing the smallest per-category chi-square p-value;
3. keep fits with p-value >= alpha, sorted by p-value (descending);
4. for every prefix size k, compare the percentile band of the first k
   model trajectories with the data-side percentiles and keep the k whose
   worst comparison p-value is largest;
5. the selected k fits give the confidence band and the forward prediction.
"""
from __future__ import annotations

import bisect
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from ._backend import kernels
from .dynamics import DEFAULT_STEP, GammaParams, integrate_raw, n_free
from .errors import InsufficientEnsembleError, InvalidArgumentError, UnfittableError
from .optimize import OptimResult, SimplexConfig, maximize
from .stats import (
    FIT_STREAM,
    QUANTILE_STREAM,
    RESTART_STREAM,
    QuantileSeries,
    SurveyRecord,
    quantiles_axis0,
    sample_multinomial,
    sample_percentages,
    stream,
)

log = logging.getLogger(__name__)

LOWER_Q = 0.025
UPPER_Q = 0.975
IC_MODES = ("sampled", "mean")


@dataclass(frozen=True)
class FitConfig:
    alpha: float = 0.05
    rk_step: float = DEFAULT_STEP
    ic_mode: str = "sampled"
    simplex: SimplexConfig = field(default_factory=SimplexConfig)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InvalidArgumentError(f"alpha must be in (0, 1), got {self.alpha!r}")
        if not self.rk_step > 0:
            raise InvalidArgumentError("rk_step must be positive")
        if self.ic_mode not in IC_MODES:
            raise InvalidArgumentError(f"ic_mode must be one of {IC_MODES}, got {self.ic_mode!r}")


@dataclass(frozen=True)
class FitResult:
    """One fitted replicate.

    ``trajectory_at_surveys`` has shape (n_surveys, K); ``initial`` is the
    state the model was started from (the sampled first survey by default).
    """

    index: int
    gamma: GammaParams
    p_value: float
    initial: np.ndarray
    trajectory_at_surveys: np.ndarray
    converged: bool = True


@dataclass(frozen=True)
class FitEnsemble:
    accepted: tuple[FitResult, ...]
    total_attempted: int
    master_seed: int
    survey_times: np.ndarray
    unfittable: int = 0

    def __len__(self):
        return len(self.accepted)

    @property
    def trajectories(self) -> np.ndarray:
        return np.stack([f.trajectory_at_surveys for f in self.accepted])


@dataclass(frozen=True)
class BandSelection:
    k: int
    m_k: float
    per_pair_pvalues: tuple[float, ...]
    # m_k for every prefix size 2..len(ensemble)
    scan: np.ndarray = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class Band:
    """Percentile envelope of the selected trajectories on a time grid."""

    grid: np.ndarray
    lower: np.ndarray  # (len(grid), K)
    upper: np.ndarray


@dataclass(frozen=True)
class PredictionTable:
    times: np.ndarray
    dates: tuple
    mean: np.ndarray  # (H, K)
    lower: np.ndarray
    upper: np.ndarray

    def __len__(self):
        return self.times.size


def survey_grid(surveys: Sequence[SurveyRecord]) -> np.ndarray:
    grid = np.ascontiguousarray([s.t for s in surveys], dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("survey times must be strictly increasing")
    return grid


def _check_surveys(surveys):
    if len(surveys) == 0:
        raise InvalidArgumentError("no surveys")
    ks = {s.k for s in surveys}
    if len(ks) != 1:
        raise InvalidArgumentError("surveys disagree on the number of categories")
    return ks.pop()


def data_quantiles(surveys: Sequence[SurveyRecord], draws: int = 100_000, master_seed: int = 0,
                   categories: Sequence[str] | None = None) -> list[QuantileSeries]:
    """Per-category 2.5/97.5 percentiles of ``draws`` resampled copies of each survey."""
    k = _check_surveys(surveys)
    if draws < 1000:
        raise InvalidArgumentError(f"draws must be >= 1000, got {draws}")
    categories = list(categories or getattr(surveys, "categories", None) or [f"c{i}" for i in range(k)])
    lo = np.empty((len(surveys), k))
    hi = np.empty((len(surveys), k))
    for j, rec in enumerate(surveys):
        pct = sample_percentages(rec, draws, stream(master_seed, QUANTILE_STREAM, j))
        srt = np.sort(pct, axis=0)
        lo[j] = quantiles_axis0(srt, LOWER_Q)
        hi[j] = quantiles_axis0(srt, UPPER_Q)
    return [QuantileSeries(categories[c], lo[:, c], hi[:, c]) for c in range(k)]


def fit_dataset(observed: np.ndarray, initial: np.ndarray, grid: np.ndarray, config: FitConfig,
                rng: np.random.Generator | int = 0) -> tuple[OptimResult, np.ndarray]:
    """Maximize the min-p-value objective for one (synthetic) dataset.

    ``observed`` is (len(grid), K) in percent. Every category shares the
    same degrees of freedom, so the smallest p-value is a decreasing function
    of the largest chi-square statistic. The simplex works on minus that
    statistic, which has the same maximizer but does not round to a flat
    1.0 near a perfect fit. The returned ``value`` is the p-value.

    Returns the optimizer result and the fitted trajectory at ``grid``.
    """
    obs = np.ascontiguousarray(observed, dtype=float)
    a0 = np.ascontiguousarray(initial, dtype=float)
    grid = np.ascontiguousarray(grid, dtype=float)
    k = a0.size
    dof = float(grid.size - 1)
    h = float(config.rk_step)

    def objective(x):
        return -kernels.max_statistic(a0, np.ascontiguousarray(x), grid, h, obs)

    res = maximize(objective, np.zeros(n_free(k)), config.simplex, rng)
    traj = integrate_raw(a0, np.ascontiguousarray(res.argmax), grid, h)
    res = dataclasses.replace(res, value=kernels.chi2_sf(-res.value, dof))
    return res, traj


def sample_dataset(surveys: Sequence[SurveyRecord], replicate_index: int, master_seed: int) -> np.ndarray:
    """One resampled copy of every survey, as (n_surveys, K) percentages."""
    return np.stack([
        sample_multinomial(rec, stream(master_seed, FIT_STREAM, replicate_index, j)).percentages
        for j, rec in enumerate(surveys)
    ])


def fit_one(surveys: Sequence[SurveyRecord], replicate_index: int, master_seed: int,
            config: FitConfig = FitConfig()) -> FitResult | None:
    """Resample all surveys for one replicate and fit; ``None`` if unfittable."""
    grid = survey_grid(surveys)
    observed = sample_dataset(surveys, replicate_index, master_seed)
    if config.ic_mode == "sampled":
        a0 = observed[0].copy()
    else:
        a0 = surveys[0].percentages.copy()
    try:
        res, traj = fit_dataset(observed, a0, grid, config,
                                stream(master_seed, RESTART_STREAM, replicate_index))
    except UnfittableError:
        return None
    return FitResult(replicate_index, GammaParams.from_upper(res.argmax), res.value, a0, traj, res.converged)


def _fit_chunk(indices, surveys, master_seed, config):
    return [fit_one(surveys, i, master_seed, config) for i in indices]


def run_ensemble(surveys: Sequence[SurveyRecord], replicates: int = 10_000, master_seed: int = 0,
                 config: FitConfig = FitConfig(), jobs: int = 1, progress=None) -> FitEnsemble:
    """Fit ``replicates`` resampled datasets, keep p >= alpha, sort by p descending.

    Results are keyed by replicate index before filtering, so the ensemble
    does not depend on ``jobs``.
    """
    _check_surveys(surveys)
    if replicates < 100:
        raise InvalidArgumentError(f"replicates must be >= 100, got {replicates}")
    grid = survey_grid(surveys)
    indices = list(range(replicates))
    chunk = max(1, min(250, replicates // max(1, 8 * jobs)))
    chunks = [indices[i:i + chunk] for i in range(0, replicates, chunk)]
    work = partial(_fit_chunk, surveys=list(surveys), master_seed=master_seed, config=config)
    results: list[FitResult | None] = []
    if jobs <= 1:
        for c in chunks:
            results.extend(work(c))
            if progress:
                progress(len(results), replicates)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for part in pool.map(work, chunks):
                results.extend(part)
                if progress:
                    progress(len(results), replicates)

    unfittable = sum(r is None for r in results)
    accepted = [r for r in results if r is not None and r.p_value >= config.alpha]
    accepted.sort(key=lambda r: -r.p_value)  # stable: ties keep replicate order
    log.info("accepted %d of %d fits (%d unfittable)", len(accepted), replicates, unfittable)
    if len(accepted) < 2:
        raise InsufficientEnsembleError(f"only {len(accepted)} of {replicates} fits reached p >= {config.alpha}")
    return FitEnsemble(tuple(accepted), replicates, int(master_seed), grid, unfittable)


def _band_pvalues(q_lo, q_hi, b_lo, b_hi, dof):
    """Six (generally 2K) p-values: per category, lower pair then upper pair."""
    out = []
    for c in range(q_lo.shape[0]):
        for q, b in ((q_lo[c], b_lo[c]), (q_hi[c], b_hi[c])):
            if np.any(b <= 0.0):
                out.append(0.0)
                continue
            out.append(kernels.chi2_sf(kernels.chi2_stat(q, b), dof))
    return out


def _quantile_sorted_list(s, q):
    # same estimator as stats.sorted_quantile
    m = len(s)
    h = (m - 1) * q
    lo = int(math.floor(h))
    frac = h - lo
    if frac == 0.0:
        return s[lo]
    hi = min(lo + 1, m - 1)
    return s[lo] + frac * (s[hi] - s[lo])


def quantile_matrices(quantiles: Sequence[QuantileSeries]) -> tuple[np.ndarray, np.ndarray]:
    """Stack QuantileSeries into (K, n_dates) lower and upper arrays."""
    lo = np.ascontiguousarray([q.lower for q in quantiles], dtype=float)
    hi = np.ascontiguousarray([q.upper for q in quantiles], dtype=float)
    return lo, hi


def select_band(ensemble: FitEnsemble, quantiles: Sequence[QuantileSeries]) -> BandSelection:
    """Scan prefix sizes k = 2..M and pick the one maximizing the worst band p-value.

    Prefix order statistics are maintained by sorted insertion, so each k
    costs O(k) list work instead of a full re-sort.
    """
    m = len(ensemble)
    if m < 2:
        raise InsufficientEnsembleError("band selection needs at least two fits")
    traj = ensemble.trajectories  # (M, n, K)
    _, n, k = traj.shape
    q_lo, q_hi = quantile_matrices(quantiles)
    if q_lo.shape != (k, n):
        raise InvalidArgumentError(f"quantiles have shape {q_lo.shape}, expected {(k, n)}")
    dof = float(n - 1)
    sorted_vals = [[[] for _ in range(n)] for _ in range(k)]
    scan = np.empty(m - 1)
    best_k, best_m, best_pairs = 0, -1.0, None
    b_lo = np.empty((k, n))
    b_hi = np.empty((k, n))
    for size in range(1, m + 1):
        t = traj[size - 1]
        for c in range(k):
            row = sorted_vals[c]
            for j in range(n):
                bisect.insort(row[j], float(t[j, c]))
        if size < 2:
            continue
        for c in range(k):
            row = sorted_vals[c]
            for j in range(n):
                b_lo[c, j] = _quantile_sorted_list(row[j], LOWER_Q)
                b_hi[c, j] = _quantile_sorted_list(row[j], UPPER_Q)
        pairs = _band_pvalues(q_lo, q_hi, b_lo, b_hi, dof)
        mk = min(pairs)
        scan[size - 2] = mk
        if mk > best_m:
            best_k, best_m, best_pairs = size, mk, pairs
    return BandSelection(best_k, best_m, tuple(best_pairs), scan)


def band_at_surveys(ensemble: FitEnsemble, k: int) -> Band:
    """Percentile band of the first ``k`` cached trajectories at the survey dates."""
    traj = ensemble.trajectories[:k]
    return Band(ensemble.survey_times.copy(), quantiles_axis0(traj, LOWER_Q), quantiles_axis0(traj, UPPER_Q))


def fine_grid(t_start: float, t_end: float, step: float) -> np.ndarray:
    if not step > 0:
        raise InvalidArgumentError("grid step must be positive")
    span = t_end - t_start
    n = int(round(span / step))
    grid = t_start + step * np.arange(n + 1)
    if n * step < span - 1e-9 * max(1.0, span):
        grid = np.append(grid, t_end)
    grid[-1] = t_end
    return np.ascontiguousarray(grid[grid <= t_end])


def _selected(ensemble: FitEnsemble, selection: BandSelection):
    if not 1 <= selection.k <= len(ensemble):
        raise InvalidArgumentError(f"selection k={selection.k} outside ensemble of {len(ensemble)}")
    return ensemble.accepted[:selection.k]


def selected_trajectories(ensemble: FitEnsemble, selection: BandSelection, grid,
                          rk_step: float = DEFAULT_STEP) -> np.ndarray:
    """Integrate the selected fits on ``grid`` (which must start at the first survey)."""
    grid = np.ascontiguousarray(grid, dtype=float)
    if grid[0] != ensemble.survey_times[0]:
        raise InvalidArgumentError("grid must start at the first survey time")
    return np.stack([
        integrate_raw(np.ascontiguousarray(f.initial), f.gamma.upper, grid, rk_step)
        for f in _selected(ensemble, selection)
    ])


def estimation_band(ensemble: FitEnsemble, selection: BandSelection, grid_step: float = 0.05,
                    rk_step: float = DEFAULT_STEP, t_end: float | None = None) -> Band:
    """95% model band of the selected fits on a regular grid from the first survey to ``t_end``."""
    t0 = float(ensemble.survey_times[0])
    t1 = float(ensemble.survey_times[-1]) if t_end is None else float(t_end)
    grid = fine_grid(t0, t1, grid_step)
    traj = selected_trajectories(ensemble, selection, grid, rk_step)
    return Band(grid, quantiles_axis0(traj, LOWER_Q), quantiles_axis0(traj, UPPER_Q))


def predict(ensemble: FitEnsemble, selection: BandSelection, horizon_times, horizon_dates=None,
            rk_step: float = DEFAULT_STEP) -> PredictionTable:
    """Mean and 2.5/97.5 percentiles of the selected fits at future times."""
    times = np.asarray(horizon_times, dtype=float).ravel()
    dates = tuple(horizon_dates) if horizon_dates is not None else (None,) * times.size
    k = ensemble.accepted[0].initial.size
    if times.size == 0:
        empty = np.empty((0, k))
        return PredictionTable(times, (), empty, empty.copy(), empty.copy())
    if len(dates) != times.size:
        raise InvalidArgumentError("horizon dates and times differ in length")
    if np.any(times <= ensemble.survey_times[-1]) or np.any(np.diff(times) <= 0):
        raise InvalidArgumentError("horizon times must be increasing and after the last survey")
    grid = np.concatenate([[ensemble.survey_times[0]], times])
    traj = selected_trajectories(ensemble, selection, grid, rk_step)[:, 1:, :]
    return PredictionTable(
        times, dates, traj.mean(axis=0), quantiles_axis0(traj, LOWER_Q), quantiles_axis0(traj, UPPER_Q)
    )
