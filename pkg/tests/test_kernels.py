"""Compiled and pure-Python kernels must agree."""
import numpy as np
import pytest

from surveyband import _pykernels
from surveyband.errors import DegenerateExpectedError, DivergenceError

from conftest import BACKENDS

pytestmark = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
C = BACKENDS[-1]
P = _pykernels

GRID = 0.5 * np.arange(16)
A0 = np.array([2.0, 93.0, 5.0])


@pytest.mark.parametrize("upper", [[1e-3, -2e-3, 5e-4], [0.0, 0.0, 0.0], [-4e-4, 3e-3, 1e-3]])
def test_integrate_bitwise(upper):
    up = np.array(upper)
    np.testing.assert_array_equal(C.integrate(A0, up, GRID, 0.005), P.integrate(A0, up, GRID, 0.005))


def test_derivative_bitwise():
    up = np.array([1e-3, -2e-3, 5e-4])
    np.testing.assert_array_equal(C.derivative(A0, up), P.derivative(A0, up))


def test_divergence_same_time():
    up = np.array([1.0, 0.0, 0.0])
    a0 = np.array([50.0, 50.0, 0.0])
    grid = np.array([0.0, 5.0])
    times = []
    for kern in (C, P):
        with pytest.raises(DivergenceError) as info:
            kern.integrate(a0, up, grid, 0.5)
        times.append(info.value.time)
    assert times[0] == times[1]


def test_min_pvalue_agrees():
    up = np.array([1e-3, -2e-3, 5e-4])
    obs = np.ascontiguousarray(C.integrate(A0, up, GRID, 0.005) + 0.4 * np.cos(np.arange(48)).reshape(16, 3))
    for cand in ([0.0, 0.0, 0.0], [1e-3, -2e-3, 5e-4], [2e-3, 1e-3, -1e-3]):
        c = np.array(cand)
        assert abs(C.min_pvalue(A0, c, GRID, 0.005, obs, 15) - P.min_pvalue(A0, c, GRID, 0.005, obs, 15)) < 1e-14


def test_max_statistic_bitwise_and_consistent():
    from surveyband.stats import chi_square_statistic

    up = np.array([1e-3, -2e-3, 5e-4])
    obs = np.ascontiguousarray(C.integrate(A0, up, GRID, 0.005) + 0.4 * np.sin(np.arange(48)).reshape(16, 3))
    for cand in ([0.0, 0.0, 0.0], [2e-3, 1e-3, -1e-3]):
        c = np.array(cand)
        s = C.max_statistic(A0, c, GRID, 0.005, obs)
        assert s == P.max_statistic(A0, c, GRID, 0.005, obs)
        traj = P.integrate(A0, c, GRID, 0.005)
        assert s == pytest.approx(max(chi_square_statistic(obs[:, i], traj[:, i]) for i in range(3)), rel=1e-14)
        assert C.min_pvalue(A0, c, GRID, 0.005, obs, 15) == C.chi2_sf(s, 15)


def test_min_pvalue_sentinel():
    up = np.array([1.0, 0.0, 0.0])
    obs = np.ones((2, 3)) * 33.0
    for kern in (C, P):
        assert kern.min_pvalue(np.array([50.0, 50.0, 0.0]), up, np.array([0.0, 5.0]), 0.5, obs, 1) == -np.inf
        # zero expected entry
        assert kern.min_pvalue(np.array([50.0, 50.0, 0.0]), np.zeros(3), np.array([0.0, 1.0]), 0.005, obs, 1) == -np.inf
        assert kern.max_statistic(np.array([50.0, 50.0, 0.0]), up, np.array([0.0, 5.0]), 0.5, obs) == np.inf


def test_chi2_stat_and_sf_agree():
    o = np.array([4.0, 6.0, 7.5])
    e = np.array([5.0, 5.0, 6.0])
    assert C.chi2_stat(o, e) == P.chi2_stat(o, e)
    for x in (0.0, 0.3, 7.2609, 14.0, 25.0, 60.0):
        for dof in (1, 2, 15, 31):
            assert abs(C.chi2_sf(x, dof) - P.chi2_sf(x, dof)) < 1e-14
    for kern in (C, P):
        with pytest.raises(DegenerateExpectedError):
            kern.chi2_stat(o, np.array([1.0, 0.0, 1.0]))


@pytest.mark.parametrize("n,theta", [(1800, [0.02, 0.93, 0.05]), (37, [0.5, 0.25, 0.25]), (5000, [0.49, 0.02, 0.49]),
                                     (10, [1.0, 0.0, 0.0]), (12, [0.0, 0.0, 1.0])])
def test_multinomial_bitwise(n, theta):
    U = np.random.default_rng(3).random((500, len(theta) - 1))
    th = np.array(theta)
    np.testing.assert_array_equal(C.multinomial_batch(n, th, U), P.multinomial_batch(n, th, U))
    np.testing.assert_array_equal(C.multinomial(n, th, U[0]), P.multinomial(n, th, U[0]))
