"""Survey resampling, empirical quantiles and the chi-square goodness-of-fit test."""
from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import InvalidArgumentError

# stream purposes, folded into the SeedSequence spawn key
QUANTILE_STREAM = 0
FIT_STREAM = 1
RESTART_STREAM = 2

THETA_TOL = 1e-12


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for ``(master_seed, *key)``.

    Streams depend only on the key, never on call order, so parallel workers
    reproduce the serial run exactly.
    """
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class SurveyRecord:
    """One survey: ``n`` interviews with category proportions ``theta``."""

    date: _dt.date | None
    t: float
    n: int
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise InvalidArgumentError(f"sample size must be an integer >= 1, got {self.n!r}")
        if theta.ndim != 1 or theta.size < 2:
            raise InvalidArgumentError("theta needs at least two categories")
        if np.any(theta < 0) or np.any(theta > 1) or not np.all(np.isfinite(theta)):
            raise InvalidArgumentError(f"proportions must lie in [0, 1], got {theta}")
        if abs(theta.sum() - 1.0) > THETA_TOL:
            raise InvalidArgumentError(f"proportions must sum to 1, got {theta.sum()!r}")
        theta.setflags(write=False)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "theta", theta)

    @property
    def k(self) -> int:
        return self.theta.size

    @property
    def percentages(self) -> np.ndarray:
        return self.theta * 100.0


@dataclass(frozen=True)
class CategoricalDraw:
    counts: np.ndarray
    n: int

    @property
    def percentages(self) -> np.ndarray:
        return self.counts * 100.0 / self.n


@dataclass(frozen=True)
class QuantileSeries:
    """Per-date lower/upper percentiles (percent) of one category."""

    category: str
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise InvalidArgumentError("lower and upper must have the same length")
        if np.any(lo > hi):
            raise InvalidArgumentError(f"lower exceeds upper in category {self.category!r}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def sample_multinomial(record: SurveyRecord, rng: np.random.Generator) -> CategoricalDraw:
    """Draw one Multinomial(n, theta) outcome by sequential binomial inversion."""
    u = rng.random(record.k - 1)
    return CategoricalDraw(kernels.multinomial(record.n, record.theta, u), record.n)


def sample_percentages(record: SurveyRecord, draws: int, rng: np.random.Generator) -> np.ndarray:
    """``draws`` resampled surveys as a (draws, K) array of percentages."""
    u = rng.random((int(draws), record.k - 1))
    counts = kernels.multinomial_batch(record.n, record.theta, u)
    return counts * 100.0 / record.n


def _check_q(q):
    if not 0.0 <= q <= 1.0:
        raise InvalidArgumentError(f"quantile level must be in [0, 1], got {q!r}")


def empirical_quantile(samples, q: float) -> float:
    """Linear-interpolation quantile at position ``(m - 1) * q`` of the sorted samples."""
    _check_q(q)
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    if s.size == 0:
        raise InvalidArgumentError("empirical_quantile of an empty sample")
    return float(sorted_quantile(s, q))


def sorted_quantile(s: np.ndarray, q: float) -> np.ndarray:
    """Same estimator along axis 0 of an already sorted array."""
    m = s.shape[0]
    h = (m - 1) * q
    lo = int(math.floor(h))
    hi = min(lo + 1, m - 1)
    frac = h - lo
    if frac == 0.0:
        return s[lo]
    return s[lo] + frac * (s[hi] - s[lo])


def quantiles_axis0(x, q: float) -> np.ndarray:
    _check_q(q)
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        raise InvalidArgumentError("quantile of an empty sample")
    return sorted_quantile(np.sort(x, axis=0), q)


def chi_square_statistic(observed, expected) -> float:
    """Pearson statistic ``sum((o - e)^2 / e)``.

    Raises :class:`~surveyband.errors.DegenerateExpectedError` if any expected
    entry is not strictly positive.
    """
    o = np.ascontiguousarray(observed, dtype=float).ravel()
    e = np.ascontiguousarray(expected, dtype=float).ravel()
    if o.size != e.size or o.size < 2:
        raise InvalidArgumentError("observed and expected need equal lengths >= 2")
    return kernels.chi2_stat(o, e)


def chi_square_pvalue(statistic: float, dof: int) -> float:
    """Upper tail of the chi-square distribution, ``Q(dof/2, statistic/2)``."""
    if int(dof) != dof or dof < 1:
        raise InvalidArgumentError(f"dof must be a positive integer, got {dof!r}")
    if not statistic >= 0:
        raise InvalidArgumentError(f"statistic must be >= 0, got {statistic!r}")
    if math.isinf(statistic):
        return 0.0
    return kernels.chi2_sf(float(statistic), float(dof))


def gof_pvalue(observed, expected) -> float:
    """Chi-square p-value with ``len(observed) - 1`` degrees of freedom."""
    o = np.asarray(observed).ravel()
    return chi_square_pvalue(chi_square_statistic(observed, expected), o.size - 1)
