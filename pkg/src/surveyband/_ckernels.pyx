# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: RK4 integration, chi-square tail, multinomial inversion.

Keep in lockstep with ``_pykernels.py``; both backends must agree bit for bit
except through ``lgamma``.
"""
from libc.math cimport exp, log, lgamma, fabs, floor, INFINITY
from libc.stdlib cimport malloc, free

import numpy as np

from .errors import DegenerateExpectedError, DivergenceError

BACKEND = "cython"

cdef double NEG_LIMIT = -1e-6
# also catches inf and NaN (comparisons with NaN are false)
cdef double POS_LIMIT = 1e300
cdef double LANDING_SLACK = 1e-9
cdef double WEIGHT_FLOOR = 1e-22
cdef double _EPS = 2.220446049250313e-16
cdef double _FPMIN = 1e-300
cdef int _MAXIT = 100000


cdef void _full_matrix(const double[::1] upper, Py_ssize_t k, double* g) noexcept nogil:
    cdef Py_ssize_t i, j, p = 0
    cdef double v
    for i in range(k * k):
        g[i] = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            v = upper[p]
            g[i * k + j] = v
            g[j * k + i] = -v
            p += 1


cdef inline void _deriv(const double* a, const double* g, Py_ssize_t k, double* out) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(k):
        s = 0.0
        for j in range(k):
            if j != i:
                s += g[j * k + i] * a[j]
        out[i] = s * a[i]


cdef inline void _deriv3(const double* a, const double* g, double* out) noexcept nogil:
    # K=3 unrolled; same rounding order as _deriv (0.0 + x is exact)
    out[0] = (g[3] * a[1] + g[6] * a[2]) * a[0]
    out[1] = (g[1] * a[0] + g[7] * a[2]) * a[1]
    out[2] = (g[2] * a[0] + g[5] * a[1]) * a[2]


cdef inline int _rk4_step3(double* a, const double* g, double h, double* work) noexcept nogil:
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef double tmp[3]
    cdef double hh = 0.5 * h
    cdef double h6 = h / 6.0
    cdef int i
    cdef int bad = 0
    _deriv3(a, g, k1)
    tmp[0] = a[0] + hh * k1[0]
    tmp[1] = a[1] + hh * k1[1]
    tmp[2] = a[2] + hh * k1[2]
    _deriv3(tmp, g, k2)
    tmp[0] = a[0] + hh * k2[0]
    tmp[1] = a[1] + hh * k2[1]
    tmp[2] = a[2] + hh * k2[2]
    _deriv3(tmp, g, k3)
    tmp[0] = a[0] + h * k3[0]
    tmp[1] = a[1] + h * k3[1]
    tmp[2] = a[2] + h * k3[2]
    _deriv3(tmp, g, k4)
    for i in range(3):
        a[i] = a[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if not (a[i] >= NEG_LIMIT and a[i] <= POS_LIMIT):
            bad = 1
    return bad


cdef inline int _rk4_step(double* a, const double* g, Py_ssize_t k, double h, double* work) noexcept nogil:
    if k == 3:
        return _rk4_step3(a, g, h, work)
    # work holds 5*k doubles: k1, k2, k3, k4, tmp
    cdef double* k1 = work
    cdef double* k2 = work + k
    cdef double* k3 = work + 2 * k
    cdef double* k4 = work + 3 * k
    cdef double* tmp = work + 4 * k
    cdef double hh = 0.5 * h
    cdef double h6 = h / 6.0
    cdef Py_ssize_t i
    cdef int bad = 0
    _deriv(a, g, k, k1)
    for i in range(k):
        tmp[i] = a[i] + hh * k1[i]
    _deriv(tmp, g, k, k2)
    for i in range(k):
        tmp[i] = a[i] + hh * k2[i]
    _deriv(tmp, g, k, k3)
    for i in range(k):
        tmp[i] = a[i] + h * k3[i]
    _deriv(tmp, g, k, k4)
    for i in range(k):
        a[i] = a[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if not (a[i] >= NEG_LIMIT and a[i] <= POS_LIMIT):
            bad = 1
    return bad


cdef int _integrate(const double[::1] a0, const double* g, Py_ssize_t k,
                    const double[::1] grid, double h, double* out,
                    double* work, double* fail_t) noexcept nogil:
    """Fill out (len(grid) x k); return -1 and set fail_t on divergence."""
    cdef Py_ssize_t i, p
    cdef Py_ssize_t n = grid.shape[0]
    cdef double* a = work + 5 * k
    cdef double t, target, rem
    for i in range(k):
        a[i] = a0[i]
        out[i] = a[i]
    t = grid[0]
    for p in range(1, n):
        target = grid[p]
        while True:
            rem = target - t
            if rem <= h * (1.0 + LANDING_SLACK):
                t = target
                if _rk4_step(a, g, k, rem, work):
                    fail_t[0] = t
                    return -1
                break
            t = t + h
            if _rk4_step(a, g, k, h, work):
                fail_t[0] = t
                return -1
        for i in range(k):
            out[p * k + i] = a[i]
    return 0


def derivative(const double[::1] a, const double[::1] upper):
    cdef Py_ssize_t k = a.shape[0]
    cdef double* g = <double*> malloc(k * k * sizeof(double))
    out = np.empty(k, dtype=np.float64)
    cdef double[::1] o = out
    try:
        _full_matrix(upper, k, g)
        _deriv(&a[0], g, k, &o[0])
    finally:
        free(g)
    return out


def integrate(const double[::1] a0, const double[::1] upper, const double[::1] grid, double h):
    cdef Py_ssize_t k = a0.shape[0]
    cdef Py_ssize_t n = grid.shape[0]
    cdef double fail_t = 0.0
    cdef int rc
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double* g = <double*> malloc(k * k * sizeof(double))
    cdef double* work = <double*> malloc(6 * k * sizeof(double))
    try:
        _full_matrix(upper, k, g)
        with nogil:
            rc = _integrate(a0, g, k, grid, h, &o[0, 0], work, &fail_t)
    finally:
        free(g)
        free(work)
    if rc != 0:
        raise DivergenceError(fail_t)
    return out


cdef double _gser(double a, double x) noexcept nogil:
    cdef double ap = a
    cdef double s = 1.0 / a
    cdef double d = s
    cdef int it
    for it in range(_MAXIT):
        ap += 1.0
        d *= x / ap
        s += d
        if fabs(d) < fabs(s) * _EPS:
            break
    return s * exp(-x + a * log(x) - lgamma(a))


cdef double _gcf(double a, double x) noexcept nogil:
    cdef double b = x + 1.0 - a
    cdef double c = 1.0 / _FPMIN
    cdef double d = 1.0 / b
    cdef double h = d
    cdef double an, delta
    cdef int i
    for i in range(1, _MAXIT):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if fabs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if fabs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < _EPS:
            break
    return exp(-x + a * log(x) - lgamma(a)) * h


cdef double _gammq(double a, double x) noexcept nogil:
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gser(a, x)
    return _gcf(a, x)


def gammq(double a, double x):
    """Regularized upper incomplete gamma Q(a, x)."""
    return _gammq(a, x)


def chi2_sf(double stat, double dof):
    return _gammq(0.5 * dof, 0.5 * stat)


def chi2_stat(const double[::1] observed, const double[::1] expected):
    cdef Py_ssize_t j
    cdef double s = 0.0, d
    for j in range(observed.shape[0]):
        if not expected[j] > 0.0:
            raise DegenerateExpectedError("expected entry <= 0")
        d = observed[j] - expected[j]
        s += d * d / expected[j]
    return s


cdef double _max_statistic(const double[::1] a0, const double[::1] upper,
                           const double[::1] grid, double h,
                           const double[:, ::1] observed) noexcept nogil:
    cdef Py_ssize_t k = a0.shape[0]
    cdef Py_ssize_t n = grid.shape[0]
    cdef Py_ssize_t c, j
    cdef double fail_t, s, d, e
    cdef double worst = 0.0
    cdef double* g = <double*> malloc(k * k * sizeof(double))
    cdef double* work = <double*> malloc(6 * k * sizeof(double))
    cdef double* traj = <double*> malloc(n * k * sizeof(double))
    _full_matrix(upper, k, g)
    if _integrate(a0, g, k, grid, h, traj, work, &fail_t) != 0:
        worst = INFINITY
    else:
        for c in range(k):
            s = 0.0
            for j in range(n):
                e = traj[j * k + c]
                if not e > 0.0:
                    worst = INFINITY
                    break
                d = observed[j, c] - e
                s += d * d / e
            if worst == INFINITY:
                break
            if s > worst:
                worst = s
    free(g)
    free(work)
    free(traj)
    return worst


def max_statistic(const double[::1] a0, const double[::1] upper, const double[::1] grid,
                  double h, const double[:, ::1] observed):
    """Largest per-category chi-square statistic of the model against ``observed``.

    Returns +inf when integration diverges or a model value is not positive.
    """
    cdef double r
    with nogil:
        r = _max_statistic(a0, upper, grid, h, observed)
    return r


def min_pvalue(const double[::1] a0, const double[::1] upper, const double[::1] grid,
               double h, const double[:, ::1] observed, double dof):
    """Smallest per-category chi-square p-value (all categories share ``dof``).

    Returns -inf when integration diverges or a model value is not positive.
    """
    cdef double r
    with nogil:
        r = _max_statistic(a0, upper, grid, h, observed)
        if r == INFINITY:
            r = -INFINITY
        else:
            r = _gammq(0.5 * dof, 0.5 * r)
    return r


cdef long _binom_inv(long n, double p, double u, double* buf) noexcept nogil:
    # buf has room for n + 1 doubles, indexed by outcome
    cdef bint flip
    cdef double q, r, w, total, target, acc
    cdef long mode, kk, lo, hi, x
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    flip = p > 0.5
    if flip:
        p = 1.0 - p
    q = 1.0 - p
    r = p / q
    mode = <long> floor((n + 1) * p)
    if mode > n:
        mode = n
    buf[mode] = 1.0
    w = 1.0
    kk = mode
    while kk > 0:
        w = w * kk / ((n - kk + 1) * r)
        kk -= 1
        buf[kk] = w
        if w < WEIGHT_FLOOR:
            break
    lo = kk
    w = 1.0
    kk = mode
    while kk < n:
        w = w * (n - kk) * r / (kk + 1)
        kk += 1
        buf[kk] = w
        if w < WEIGHT_FLOOR:
            break
    hi = kk
    total = 0.0
    for kk in range(lo, hi + 1):
        total += buf[kk]
    target = u * total
    acc = 0.0
    x = hi
    for kk in range(lo, hi + 1):
        acc += buf[kk]
        if acc > target:
            x = kk
            break
    if flip:
        return n - x
    return x


cdef void _multinomial(long n, const double[::1] theta, const double* u,
                       long* counts, double* tails, double* buf) noexcept nogil:
    cdef Py_ssize_t k = theta.shape[0]
    cdef Py_ssize_t i
    cdef double s = 0.0, p
    cdef long left = n, x
    for i in range(k - 1, -1, -1):
        s += theta[i]
        tails[i] = s
    for i in range(k - 1):
        if tails[i] > 0.0:
            p = theta[i] / tails[i]
        else:
            p = 0.0
        x = _binom_inv(left, p, u[i], buf)
        counts[i] = x
        left -= x
    counts[k - 1] = left


def multinomial(long n, const double[::1] theta, const double[::1] u):
    cdef Py_ssize_t k = theta.shape[0]
    out = np.empty(k, dtype=np.int64)
    cdef long[::1] o = out
    cdef double* tails = <double*> malloc(k * sizeof(double))
    cdef double* buf = <double*> malloc((n + 1) * sizeof(double))
    try:
        _multinomial(n, theta, &u[0], &o[0], tails, buf)
    finally:
        free(tails)
        free(buf)
    return out


def multinomial_batch(long n, const double[::1] theta, const double[:, ::1] uniforms):
    cdef Py_ssize_t k = theta.shape[0]
    cdef Py_ssize_t m = uniforms.shape[0]
    cdef Py_ssize_t r
    out = np.empty((m, k), dtype=np.int64)
    cdef long[:, ::1] o = out
    cdef double* tails = <double*> malloc(k * sizeof(double))
    cdef double* buf = <double*> malloc((n + 1) * sizeof(double))
    try:
        with nogil:
            for r in range(m):
                _multinomial(n, theta, &uniforms[r, 0], &o[r, 0], tails, buf)
    finally:
        free(tails)
        free(buf)
    return out
