"""Pure-Python kernels.

Mirrors ``_ckernels.pyx`` operation for operation so both backends produce
the same floating point results (the only exception is ``lgamma``, which
CPython implements itself; p-values can differ in the last ulp).

Parameters are passed as the strict upper triangle of the antisymmetric
rate matrix in row-major order, e.g. ``(g12, g13, g23)`` for K=3.
"""
import math

import numpy as np

from .errors import DegenerateExpectedError, DivergenceError

BACKEND = "python"

NEG_LIMIT = -1e-6
POS_LIMIT = 1e300
LANDING_SLACK = 1e-9
WEIGHT_FLOOR = 1e-22
_EPS = 2.220446049250313e-16
_FPMIN = 1e-300
_MAXIT = 100000


def _full_matrix(upper, k):
    g = [[0.0] * k for _ in range(k)]
    p = 0
    for i in range(k):
        for j in range(i + 1, k):
            v = float(upper[p])
            g[i][j] = v
            g[j][i] = -v
            p += 1
    return g


def _deriv(a, g, k):
    out = [0.0] * k
    for i in range(k):
        s = 0.0
        for j in range(k):
            if j != i:
                s += g[j][i] * a[j]
        out[i] = s * a[i]
    return out


def _rk4_step(a, g, k, h):
    hh = 0.5 * h
    h6 = h / 6.0
    k1 = _deriv(a, g, k)
    k2 = _deriv([a[i] + hh * k1[i] for i in range(k)], g, k)
    k3 = _deriv([a[i] + hh * k2[i] for i in range(k)], g, k)
    k4 = _deriv([a[i] + h * k3[i] for i in range(k)], g, k)
    return [a[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(k)]


def _bad(a):
    for v in a:
        if not (NEG_LIMIT <= v <= POS_LIMIT):
            return True
    return False


def _integrate(a0, g, k, grid, h):
    """Return (rows, fail_time); fail_time is None on success."""
    a = [float(v) for v in a0]
    rows = [list(a)]
    t = float(grid[0])
    for p in range(1, len(grid)):
        target = float(grid[p])
        while True:
            rem = target - t
            if rem <= h * (1.0 + LANDING_SLACK):
                a = _rk4_step(a, g, k, rem)
                t = target
                if _bad(a):
                    return rows, t
                break
            a = _rk4_step(a, g, k, h)
            t = t + h
            if _bad(a):
                return rows, t
        rows.append(list(a))
    return rows, None


def derivative(a, upper):
    k = len(a)
    return np.array(_deriv([float(v) for v in a], _full_matrix(upper, k), k))


def integrate(a0, upper, grid, h):
    k = len(a0)
    rows, fail = _integrate(a0, _full_matrix(upper, k), k, grid, float(h))
    if fail is not None:
        raise DivergenceError(fail)
    return np.array(rows, dtype=float)


def _gser(a, x):
    ap = a
    s = 1.0 / a
    d = s
    for _ in range(_MAXIT):
        ap += 1.0
        d *= x / ap
        s += d
        if abs(d) < abs(s) * _EPS:
            break
    return s * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gcf(a, x):
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammq(a, x):
    """Regularized upper incomplete gamma Q(a, x)."""
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gser(a, x)
    return _gcf(a, x)


def chi2_sf(stat, dof):
    return gammq(0.5 * dof, 0.5 * stat)


def _chi2_stat(obs, exp_):
    s = 0.0
    for o, e in zip(obs, exp_):
        if not e > 0.0:
            return None
        d = o - e
        s += d * d / e
    return s


def chi2_stat(observed, expected):
    s = _chi2_stat([float(v) for v in observed], [float(v) for v in expected])
    if s is None:
        raise DegenerateExpectedError("expected entry <= 0")
    return s


def max_statistic(a0, upper, grid, h, observed):
    """Largest per-category chi-square statistic of the model against ``observed``.

    ``observed`` is (len(grid), K). Returns +inf when integration diverges
    or a model value is not strictly positive.
    """
    k = len(a0)
    rows, fail = _integrate(a0, _full_matrix(upper, k), k, grid, float(h))
    if fail is not None:
        return math.inf
    obs = np.asarray(observed, dtype=float).tolist()
    worst = 0.0
    for c in range(k):
        s = _chi2_stat([r[c] for r in obs], [r[c] for r in rows])
        if s is None:
            return math.inf
        if s > worst:
            worst = s
    return worst


def min_pvalue(a0, upper, grid, h, observed, dof):
    """Smallest per-category chi-square p-value (all categories share ``dof``).

    Returns -inf when integration diverges or a model value is not positive.
    """
    s = max_statistic(a0, upper, grid, h, observed)
    if s == math.inf:
        return -math.inf
    return chi2_sf(s, dof)


def _binom_inv(n, p, u):
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    flip = p > 0.5
    if flip:
        p = 1.0 - p
    q = 1.0 - p
    r = p / q
    mode = int(math.floor((n + 1) * p))
    if mode > n:
        mode = n
    down = []
    w = 1.0
    kk = mode
    while kk > 0:
        w = w * kk / ((n - kk + 1) * r)
        kk -= 1
        down.append(w)
        if w < WEIGHT_FLOOR:
            break
    lo = kk
    up = [1.0]
    w = 1.0
    kk = mode
    while kk < n:
        w = w * (n - kk) * r / (kk + 1)
        kk += 1
        up.append(w)
        if w < WEIGHT_FLOOR:
            break
    weights = down[::-1] + up
    total = 0.0
    for v in weights:
        total += v
    target = u * total
    acc = 0.0
    x = lo + len(weights) - 1
    for idx, v in enumerate(weights):
        acc += v
        if acc > target:
            x = lo + idx
            break
    return n - x if flip else x


def _multinomial(n, theta, u, k):
    tails = [0.0] * k
    s = 0.0
    for i in range(k - 1, -1, -1):
        s += theta[i]
        tails[i] = s
    counts = [0] * k
    left = n
    for i in range(k - 1):
        if tails[i] > 0.0:
            p = theta[i] / tails[i]
        else:
            p = 0.0
        x = _binom_inv(left, p, u[i])
        counts[i] = x
        left -= x
    counts[k - 1] = left
    return counts


def multinomial(n, theta, u):
    th = [float(v) for v in theta]
    return np.array(_multinomial(int(n), th, [float(v) for v in u], len(th)), dtype=np.int64)


def multinomial_batch(n, theta, uniforms):
    th = [float(v) for v in theta]
    k = len(th)
    U = np.asarray(uniforms, dtype=float).tolist()
    out = np.empty((len(U), k), dtype=np.int64)
    for r, u in enumerate(U):
        out[r] = _multinomial(int(n), th, u, k)
    return out
