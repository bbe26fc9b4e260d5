import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surveyband.errors import DegenerateExpectedError, InvalidArgumentError
from surveyband.stats import (
    SurveyRecord,
    chi_square_pvalue,
    chi_square_statistic,
    empirical_quantile,
    quantiles_axis0,
    sample_multinomial,
    sample_percentages,
    stream,
)


def chi2_tail_by_quadrature(x, dof):
    """Independent oracle: integrate the chi-square density numerically."""
    mpmath.mp.dps = 30
    k = mpmath.mpf(dof)

    def pdf(s):
        return s ** (k / 2 - 1) * mpmath.exp(-s / 2) / (2 ** (k / 2) * mpmath.gamma(k / 2))

    if x == 0:
        return 1.0
    if x < dof:
        return float(1 - mpmath.quad(pdf, [0, x]))
    return float(mpmath.quad(pdf, [x, mpmath.inf]))


def test_degenerate_multinomial():
    rec = SurveyRecord(None, 0.0, 10, [1.0, 0.0, 0.0])
    rng = stream(1, 9)
    for _ in range(50):
        np.testing.assert_array_equal(sample_multinomial(rec, rng).counts, [10, 0, 0])


@given(st.integers(1, 3000), st.lists(st.floats(0.0, 1.0), min_size=2, max_size=5), st.integers(0, 2**32))
@settings(max_examples=150, deadline=None)
def test_counts_sum_to_n(n, w, seed):
    if sum(w) <= 0:
        return
    theta = np.array(w) / sum(w)
    theta[-1] = max(0.0, 1.0 - theta[:-1].sum())
    theta /= theta.sum()
    rec = SurveyRecord(None, 0.0, n, theta)
    draw = sample_multinomial(rec, stream(seed, 0))
    assert draw.counts.sum() == n
    assert np.all(draw.counts >= 0)
    assert abs(draw.percentages.sum() - 100.0) < 1e-9


def test_multinomial_matches_exact_pmf():
    """Chi-square of 2e5 draws against the enumerated trinomial pmf."""
    n, theta = 6, np.array([0.2, 0.5, 0.3])
    rec = SurveyRecord(None, 0.0, n, theta)
    m = 200_000
    pct = sample_percentages(rec, m, stream(11, 0))
    counts = np.rint(pct * n / 100).astype(int)
    observed = {}
    for row in map(tuple, counts):
        observed[row] = observed.get(row, 0) + 1
    stat, cells = 0.0, 0
    for x1 in range(n + 1):
        for x2 in range(n + 1 - x1):
            x3 = n - x1 - x2
            p = math.factorial(n) / (math.factorial(x1) * math.factorial(x2) * math.factorial(x3))
            p *= theta[0] ** x1 * theta[1] ** x2 * theta[2] ** x3
            e = m * p
            stat += (observed.get((x1, x2, x3), 0) - e) ** 2 / e
            cells += 1
    assert chi_square_pvalue(stat, cells - 1) > 1e-3


def test_law_of_large_numbers():
    rec = SurveyRecord(None, 0.0, 1200, [0.03, 0.92, 0.05])
    m = 100_000
    frac = sample_percentages(rec, m, stream(5, 0)) / 100.0
    sigma = np.sqrt(rec.theta * (1 - rec.theta) / rec.n)
    assert np.all(np.abs(frac.mean(axis=0) - rec.theta) < 3 * sigma / np.sqrt(m))


@pytest.mark.parametrize(
    "n,theta,published",
    [
        (1800, [0.02, 0.93, 0.05], (1.39, 2.67)),  # first survey, support
        (1200, [0.01, 0.93, 0.06], (0.50, 1.58)),  # eighth survey, support
    ],
)
def test_support_percentiles_reproduce_published(n, theta, published):
    rec = SurveyRecord(None, 0.0, n, theta)
    support = sample_percentages(rec, 100_000, stream(2013, 0))[:, 0]
    lo, hi = empirical_quantile(support, 0.025), empirical_quantile(support, 0.975)
    assert abs(lo - published[0]) <= 0.35
    assert abs(hi - published[1]) <= 0.35


def test_empirical_quantile_examples():
    assert empirical_quantile([5.0], 0.3) == 5.0
    assert empirical_quantile(np.arange(101.0), 0.025) == pytest.approx(2.5, abs=1e-12)
    assert empirical_quantile([3.0, 1.0, 2.0], 0.5) == 2.0
    with pytest.raises(InvalidArgumentError):
        empirical_quantile([], 0.5)
    with pytest.raises(InvalidArgumentError):
        empirical_quantile([1.0], 1.5)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0, 1), st.floats(0, 1))
def test_quantile_monotone_and_bounded(xs, q1, q2):
    a, b = sorted((q1, q2))
    qa, qb = empirical_quantile(xs, a), empirical_quantile(xs, b)
    assert qa <= qb + 1e-9 * (1 + abs(qb))
    assert min(xs) <= qa and qb <= max(xs)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.floats(0, 1))
def test_quantile_matches_numpy_linear(xs, q):
    assert empirical_quantile(xs, q) == pytest.approx(float(np.quantile(xs, q)), abs=1e-9)


def test_vectorized_quantiles_match_scalar():
    x = np.random.default_rng(0).normal(size=(37, 4, 3))
    for q in (0.0, 0.025, 0.5, 0.975, 1.0):
        v = quantiles_axis0(x, q)
        for i in range(4):
            for j in range(3):
                assert v[i, j] == empirical_quantile(x[:, i, j], q)


def test_chi_square_statistic_examples():
    assert chi_square_statistic([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0
    assert chi_square_statistic([4.0, 6.0], [5.0, 5.0]) == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(DegenerateExpectedError):
        chi_square_statistic([1.0, 2.0], [1.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        chi_square_statistic([1.0], [1.0])


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0.1, 100)), min_size=2, max_size=20), st.randoms())
def test_chi_square_permutation_invariant(pairs, rnd):
    o, e = map(list, zip(*pairs))
    perm = list(range(len(o)))
    rnd.shuffle(perm)
    s1 = chi_square_statistic(o, e)
    s2 = chi_square_statistic([o[i] for i in perm], [e[i] for i in perm])
    assert s2 == pytest.approx(s1, rel=1e-12, abs=1e-12)


def test_pvalue_trivial_values():
    assert chi_square_pvalue(0.0, 15) == 1.0
    assert chi_square_pvalue(2 * math.log(2), 2) == pytest.approx(0.5, abs=1e-15)
    assert chi_square_pvalue(math.inf, 3) == 0.0
    with pytest.raises(InvalidArgumentError):
        chi_square_pvalue(-1.0, 3)
    with pytest.raises(InvalidArgumentError):
        chi_square_pvalue(1.0, 0)


def test_pvalue_matches_quadrature_example():
    assert abs(chi_square_pvalue(7.2609, 15) - chi2_tail_by_quadrature(7.2609, 15)) < 1e-10


@pytest.mark.parametrize("dof", [1, 3, 15])
def test_pvalue_strictly_decreasing(dof):
    xs = np.linspace(0, 200, 800)
    ps = [chi_square_pvalue(x, dof) for x in xs]
    # strictly decreasing until the tail underflows below rounding of 1 - P
    assert all(a > b for a, b in zip(ps, ps[1:]) if b > 1e-300)
    assert ps[-1] < 1e-20


def test_survey_record_validation():
    with pytest.raises(InvalidArgumentError):
        SurveyRecord(None, 0.0, 0, [0.5, 0.5])
    with pytest.raises(InvalidArgumentError):
        SurveyRecord(None, 0.0, 10, [0.5, 0.6])


def test_streams_are_keyed():
    a = stream(7, 1, 2).random(4)
    b = stream(7, 1, 2).random(4)
    c = stream(7, 2, 1).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
