"""Threshold selection for a target ARL to false alarm."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .errors import CalibrationError, InvalidInputError
from .model import DEFAULT_ZETA_TERMS, GaussianModel, zeta

MAX_ITERATIONS = 60
MAX_BRACKET_EXPANSIONS = 8


@dataclass
class Calibration:
    gamma: float
    theta_putative: float
    threshold_asymptotic: float
    achieved_arl: float
    threshold_exact: Optional[float] = None
    iterations: int = 0
    iterates: List[Tuple[float, float]] = field(default_factory=list)


def _check_gamma(gamma):
    if not gamma > 1 or not math.isfinite(gamma):
        raise InvalidInputError(f"gamma must be a finite number > 1, got {gamma!r}")


def threshold_from_zeta(gamma: float, theta_putative: float, n_terms: int = DEFAULT_ZETA_TERMS) -> float:
    """Asymptotic threshold A = zeta(theta_putative) * gamma."""
    _check_gamma(gamma)
    return zeta(theta_putative, n_terms) * gamma


def _arl(theta_putative, threshold, config):
    from .solver import build_grid, solve_arl

    model = GaussianModel(0.0, theta_putative)
    grid = build_grid(model, threshold, config.n_nodes, config.scheme, config)
    return solve_arl(grid)


def calibrate_exact(gamma: float, theta_putative: float, rel_tol: float = 1e-3, config=None) -> Calibration:
    """Find A with |ARL(A) / gamma - 1| <= rel_tol.

    Safeguarded secant on the increasing map A -> ARL(A): every step keeps
    a sign-changing bracket, starting from [zeta*gamma/2, 2*zeta*gamma];
    when the secant point falls outside the bracket or the bracket shrinks
    too slowly, the step falls back to bisection.
    """
    from .solver import DEFAULT_GRID

    _check_gamma(gamma)
    if not rel_tol > 0:
        raise InvalidInputError(f"rel_tol must be positive, got {rel_tol!r}")
    config = DEFAULT_GRID if config is None else config
    a0 = threshold_from_zeta(gamma, theta_putative)
    iterates: List[Tuple[float, float]] = []

    def f(a):
        val = _arl(theta_putative, a, config) / gamma - 1.0
        iterates.append((a, val))
        return val

    # the initial guess is usually within a fraction of a percent
    fa0 = f(a0)
    if abs(fa0) <= rel_tol:
        return Calibration(gamma, theta_putative, a0, (1 + fa0) * gamma, a0, 1, iterates)

    lo, hi = 0.5 * a0, 2.0 * a0
    flo, fhi = f(lo), f(hi)
    for _ in range(MAX_BRACKET_EXPANSIONS):
        if flo < 0 < fhi:
            break
        if flo >= 0:
            lo *= 0.5
            flo = f(lo)
        if fhi <= 0:
            hi *= 2.0
            fhi = f(hi)
    else:
        raise CalibrationError(f"could not bracket ARL = {gamma:g}", iterates)
    # tighten with the informative first evaluation
    if fa0 < 0:
        lo, flo = a0, fa0
    else:
        hi, fhi = a0, fa0

    for it in range(MAX_ITERATIONS):
        width = hi - lo
        a = hi - fhi * (hi - lo) / (fhi - flo)
        if not lo < a < hi:
            a = 0.5 * (lo + hi)
        fa = f(a)
        if abs(fa) <= rel_tol:
            return Calibration(gamma, theta_putative, a0, (1 + fa) * gamma, a, len(iterates), iterates)
        if fa < 0:
            lo, flo = a, fa
        else:
            hi, fhi = a, fa
        if hi - lo > 0.5 * width:
            # secant stalled on one side; bisect once
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if abs(fm) <= rel_tol:
                return Calibration(gamma, theta_putative, a0, (1 + fm) * gamma, mid, len(iterates), iterates)
            if fm < 0:
                lo, flo = mid, fm
            else:
                hi, fhi = mid, fm
    raise CalibrationError(f"no convergence within {MAX_ITERATIONS} iterations", iterates)
