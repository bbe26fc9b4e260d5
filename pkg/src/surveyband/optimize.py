"""Nelder-Mead simplex maximization with random restarts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, SurveyBandError, UnfittableError


@dataclass(frozen=True)
class SimplexConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    initial_step: float = 0.01
    max_iters: int = 500
    f_tol: float = 1e-8
    x_tol: float = 1e-8
    restarts: int = 3

    def __post_init__(self):
        coeffs = (self.reflection, self.expansion, self.contraction, self.shrink)
        if min(coeffs) <= 0:
            raise InvalidArgumentError("simplex coefficients must be positive")
        if self.expansion <= self.reflection:
            raise InvalidArgumentError("expansion must exceed reflection")
        if self.contraction >= 1 or self.shrink >= 1:
            raise InvalidArgumentError("contraction and shrink must be below 1")
        if np.any(np.asarray(self.initial_step) <= 0):
            raise InvalidArgumentError("initial_step must be positive")
        if self.max_iters < 1 or self.restarts < 0:
            raise InvalidArgumentError("max_iters >= 1 and restarts >= 0 required")


@dataclass(frozen=True)
class OptimResult:
    argmax: np.ndarray
    value: float
    iterations: int
    converged: bool
    evaluations: int = 0


def _guarded(objective: Callable) -> Callable:
    """Map errors and NaN to -inf so the simplex simply retreats."""

    def f(x):
        try:
            v = float(objective(x))
        except (SurveyBandError, ArithmeticError, ValueError):
            return -math.inf
        return -math.inf if math.isnan(v) else v

    return f


def _nelder_mead(f, x0, step, cfg: SimplexConfig):
    """Minimize ``f`` (already negated). Returns (x, fx, iterations, converged, evals)."""
    n = x0.size
    sim = np.empty((n + 1, n))
    sim[0] = x0
    for i in range(n):
        sim[i + 1] = x0
        sim[i + 1, i] += step[i]
    fs = np.array([f(v) for v in sim])
    evals = n + 1
    if np.all(fs == math.inf):
        return sim[0], math.inf, 0, False, evals

    rho, chi, psi, sigma = cfg.reflection, cfg.expansion, cfg.contraction, cfg.shrink
    it = 0
    converged = False
    while it < cfg.max_iters:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if np.all(np.isfinite(fs)):
            fspread = fs[-1] - fs[0]
        else:
            fspread = 0.0 if np.all(fs == fs[0]) else math.inf
        if fspread <= cfg.f_tol and np.max(np.abs(sim[1:] - sim[0])) <= cfg.x_tol:
            converged = True
            break
        it += 1

        xbar = sim[:-1].mean(axis=0)
        xw = sim[-1]
        xr = xbar + rho * (xbar - xw)
        fr = f(xr)
        evals += 1
        if fr < fs[0]:
            xe = xbar + rho * chi * (xbar - xw)
            fe = f(xe)
            evals += 1
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = xbar + psi * rho * (xbar - xw)
            fc = f(xc)
            evals += 1
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xcc = xbar - psi * (xbar - xw)
            fcc = f(xcc)
            evals += 1
            if fcc < fs[-1]:
                sim[-1], fs[-1] = xcc, fcc
                continue
        for i in range(1, n + 1):
            sim[i] = sim[0] + sigma * (sim[i] - sim[0])
            fs[i] = f(sim[i])
        evals += n

    best = int(np.argmin(fs))
    return sim[best].copy(), float(fs[best]), it, converged, evals


def maximize(objective: Callable, start, config: SimplexConfig = SimplexConfig(),
             rng: np.random.Generator | int | None = 0) -> OptimResult:
    """Maximize ``objective`` from ``start``.

    One Nelder-Mead run from ``start``, then ``config.restarts`` runs from
    uniform perturbations (within +-5 initial steps) of the incumbent; the
    overall best point is returned. Exceptions and NaN raised by the
    objective count as -inf. Deterministic for a fixed ``rng`` seed.
    """
    x0 = np.array(start, dtype=float).ravel()
    step = np.broadcast_to(np.asarray(config.initial_step, dtype=float), x0.shape).copy()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    neg = _guarded(objective)

    def f(x):
        return -neg(x)

    x, fx, iters, conv, evals = _nelder_mead(f, x0, step, config)
    if fx == math.inf:
        raise UnfittableError("objective is -inf at the start point and all initial vertices")
    total_iters = iters
    for _ in range(config.restarts):
        xs = x + rng.uniform(-5.0, 5.0, size=x.size) * step
        xr, fr, iters, c, ev = _nelder_mead(f, xs, step, config)
        total_iters += iters
        evals += ev
        if fr < fx:
            x, fx, conv = xr, fr, c
    return OptimResult(argmax=x, value=-fx, iterations=total_iters, converged=conv, evaluations=evals)
