"""Integral-equation evaluation of SR performance metrics.

The SR statistic is a Markov chain, R' = (1 + R) * Lambda, so starting
from R = x its next value has density

    K(x, y) = p_Lambda(y / (1 + x)) / (1 + x),   y > 0.

On the continuation region [0, A) the following renewal equations hold,
with K_pre / K_post built from the pre- / post-change law of Lambda:

    ARL:          l(x)   = 1    + int_0^A K_pre(x, y)  l(y)   dy
    delay, nu=0:  d(x)   = 1    + int_0^A K_post(x, y) d(y)   dy
    integral ADD: psi(x) = d(x) + int_0^A K_pre(x, y)  psi(y) dy

where psi(0) = sum_{nu >= 0} E_nu[(S_A - nu)^+].  STADD equals the
relative integral ADD psi(0) / l(0).

Each equation is discretized on a grid of [0, A) and solved densely.  The
grid is graded, fine near zero and geometric further out, because the
kernel's width in y grows like |theta_putative| * (1 + x).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

from .errors import InvalidInputError, NumericalFailureError
from .model import GaussianModel, LrLaw, Regime, lr_cdf, lr_pdf

ROW_SUM_TOLERANCE = 1e-3


class Scheme(enum.Enum):
    MIDPOINT = "midpoint"
    GAUSS_LEGENDRE = "gauss-legendre"


class KernelDiagnosticWarning(UserWarning):
    """Kernel mass is poorly resolved on the requested grid."""


class NegativeEfficiencyWarning(RuntimeWarning):
    """A misspecified detector appeared to beat the correctly tuned one."""


@dataclass(frozen=True)
class GridConfig:
    """Discretization settings.

    ``n_nodes=None`` selects the node count from (theta_putative, A) via
    :func:`default_n_nodes`.  ``grading`` is the length scale below which
    nodes are spaced uniformly; beyond it spacing grows geometrically.
    ``grading=None`` picks it from theta_putative (see :func:`grading_scale`).
    """

    n_nodes: Optional[int] = None
    scheme: Scheme = Scheme.GAUSS_LEGENDRE
    order: int = 8
    grading: Optional[float] = None
    cond_cap: float = 1e12
    estimate_error: bool = True

    def refined(self, factor: int, theta_putative: float, threshold: float) -> "GridConfig":
        n = self.n_nodes or default_n_nodes(theta_putative, threshold, self)
        return replace(self, n_nodes=max(16, int(round(n * factor))))


DEFAULT_GRID = GridConfig()


def default_n_nodes(theta_putative: float, threshold: float, config: GridConfig = DEFAULT_GRID) -> int:
    # cells per unit of log(1 + y / grading), scaled by the kernel width
    span = math.log1p(threshold / grading_scale(theta_putative, config)) / abs(theta_putative)
    if config.scheme is Scheme.GAUSS_LEGENDRE:
        panels = max(32, math.ceil(1.5 * span))
        return panels * config.order
    return max(512, math.ceil(40.0 * span))


@dataclass(frozen=True)
class TransitionKernel:
    model: GaussianModel
    regime: Regime

    @property
    def law(self) -> LrLaw:
        return self.model.law(self.regime)

    def density(self, x, y):
        x = np.asarray(x, dtype=float)
        scale = 1.0 + x
        return lr_pdf(np.asarray(y, dtype=float) / scale, self.law) / scale

    def cdf(self, x, y):
        """P(R' <= y | R = x)."""
        return lr_cdf(np.asarray(y, dtype=float) / (1.0 + np.asarray(x, dtype=float)), self.law)


def grading_scale(theta_putative: float, config: GridConfig = DEFAULT_GRID) -> float:
    """Uniform-spacing length scale near R = 0.

    From R = 0 one step lands at the LR itself, whose log has mean
    -theta^2/2 and standard deviation |theta|; for large |theta| most of
    that mass sits far below 0.1 and the grid must reach down to it.
    """
    if config.grading is not None:
        return config.grading
    th = abs(theta_putative)
    return min(0.1, math.exp(-1.5 * th * th - 2.0 * th))


def graded_edges(threshold: float, n_cells: int, grading: float) -> np.ndarray:
    u = np.linspace(0.0, math.log1p(threshold / grading), n_cells + 1)
    edges = grading * np.expm1(u)
    edges[0] = 0.0
    edges[-1] = threshold
    return edges


class KernelGrid:
    """Discretized transition kernels on [0, A).

    ``kernel_matrix_pre[i, j]`` is the weight that row ``i`` gives to grid
    value ``j`` when approximating int_0^A K_pre(node_i, y) v(y) dy; same
    for the post-change matrix.  Instances are treated as immutable.
    """

    def __init__(self, model, threshold, scheme, nodes, weights, edges, kernel_matrix_pre,
                 kernel_matrix_post, cond_cap=1e12, _pre_factor=None):
        self.model = model
        self.threshold = float(threshold)
        self.scheme = scheme
        self.nodes = nodes
        self.weights = weights
        self.edges = edges
        self.kernel_matrix_pre = kernel_matrix_pre
        self.kernel_matrix_post = kernel_matrix_post
        self.cond_cap = cond_cap
        self._factors = {Regime.PRE_CHANGE: _pre_factor}

    @property
    def size(self) -> int:
        return self.nodes.size

    def kernel_rows(self, x, regime: Regime) -> np.ndarray:
        """Discrete kernel rows for arbitrary starting points ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        kern = TransitionKernel(self.model, regime)
        if self.scheme is Scheme.MIDPOINT:
            return np.diff(kern.cdf(x[:, None], self.edges[None, :]), axis=1)
        return kern.density(x[:, None], self.nodes[None, :]) * self.weights[None, :]

    def matrix(self, regime: Regime) -> np.ndarray:
        return self.kernel_matrix_pre if regime is Regime.PRE_CHANGE else self.kernel_matrix_post

    def row_sums(self, regime: Regime) -> np.ndarray:
        return self.matrix(regime).sum(axis=1)

    def row_sum_defect(self, regime: Regime = Regime.PRE_CHANGE) -> float:
        """Largest gap between discrete and exact one-step mass inside [0, A)."""
        exact = TransitionKernel(self.model, regime).cdf(self.nodes, self.threshold)
        return float(np.max(np.abs(self.row_sums(regime) - exact)))

    def with_theta_true(self, theta_true: float) -> "KernelGrid":
        """Same grid and pre-change kernel, new true post-change mean."""
        model = GaussianModel(theta_true, self.model.theta_putative)
        self.factor(Regime.PRE_CHANGE)
        grid = KernelGrid(model, self.threshold, self.scheme, self.nodes, self.weights, self.edges,
                          self.kernel_matrix_pre, None, self.cond_cap,
                          _pre_factor=self._factors[Regime.PRE_CHANGE])
        grid.kernel_matrix_post = grid.kernel_rows(self.nodes, Regime.POST_CHANGE)
        return grid

    def factor(self, regime: Regime):
        """LU factorization of I - K for ``regime``, with a condition check."""
        fac = self._factors.get(regime)
        if fac is None:
            fac = _factorize(np.eye(self.size) - self.matrix(regime), self.cond_cap)
            self._factors[regime] = fac
        return fac

    def condition(self, regime: Regime = Regime.PRE_CHANGE) -> float:
        return self.factor(regime)[1]


def _factorize(a: np.ndarray, cond_cap: float):
    anorm = np.linalg.norm(a, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = lu_factor(a, check_finite=True)
    rcond, info = dgecon(lu, anorm, norm="1")
    cond = math.inf if rcond <= 0 else 1.0 / rcond
    if info != 0 or not cond <= cond_cap:
        raise NumericalFailureError(
            f"I - K is singular or ill-conditioned (cond estimate {cond:.3g} > cap {cond_cap:.3g})",
            diagnostics={"condition": cond, "size": a.shape[0], "info": int(info)},
        )
    return (lu, piv), cond


def build_grid(model: GaussianModel, threshold: float, n_nodes: Optional[int] = None,
               scheme: Scheme = Scheme.GAUSS_LEGENDRE, config: GridConfig = DEFAULT_GRID) -> KernelGrid:
    """Discretize both transition kernels on [0, threshold).

    Midpoint: cells of a graded partition, one collocation node at each
    cell midpoint, kernel integrated exactly over each cell through the LR
    cdf.  Gauss-Legendre: Nystrom quadrature with ``config.order`` nodes
    on each panel of the same kind of partition.
    """
    if not threshold > 0:
        raise InvalidInputError(f"threshold must be positive, got {threshold!r}")
    scheme = Scheme(scheme)
    config = replace(config, scheme=scheme)
    if n_nodes is None:
        n_nodes = config.n_nodes or default_n_nodes(model.theta_putative, threshold, config)
    if n_nodes < 16:
        raise InvalidInputError(f"n_nodes must be at least 16, got {n_nodes}")

    grading = grading_scale(model.theta_putative, config)
    if scheme is Scheme.MIDPOINT:
        edges = graded_edges(threshold, int(n_nodes), grading)
        nodes = 0.5 * (edges[:-1] + edges[1:])
        weights = np.diff(edges)
    else:
        q = config.order
        panels = max(2, math.ceil(n_nodes / q))
        edges = graded_edges(threshold, panels, grading)
        g, w = np.polynomial.legendre.leggauss(q)
        a = edges[:-1, None]
        half = 0.5 * np.diff(edges)[:, None]
        nodes = (a + half * (g + 1.0)).ravel()
        weights = (half * w).ravel()

    grid = KernelGrid(model, threshold, scheme, nodes, weights, edges, None, None, config.cond_cap)
    grid.kernel_matrix_pre = grid.kernel_rows(nodes, Regime.PRE_CHANGE)
    grid.kernel_matrix_post = grid.kernel_rows(nodes, Regime.POST_CHANGE)
    defect = grid.row_sum_defect(Regime.PRE_CHANGE)
    if defect > ROW_SUM_TOLERANCE:
        warnings.warn(
            f"kernel row-sum defect {defect:.2e} exceeds {ROW_SUM_TOLERANCE:g}; increase n_nodes",
            KernelDiagnosticWarning,
            stacklevel=2,
        )
    return grid


def _check_initial(grid: KernelGrid, initial_state: float):
    if not 0.0 <= initial_state < grid.threshold:
        raise InvalidInputError(
            f"initial_state must lie in [0, {grid.threshold:g}), got {initial_state!r}"
        )


def arl_function(grid: KernelGrid) -> np.ndarray:
    """ARL to false alarm at every grid node."""
    (lu, _) = grid.factor(Regime.PRE_CHANGE)
    return lu_solve(lu, np.ones(grid.size))


def delay_function(grid: KernelGrid) -> np.ndarray:
    """E_0 of the stopping time (change from the start) at every node."""
    (lu, _) = grid.factor(Regime.POST_CHANGE)
    return lu_solve(lu, np.ones(grid.size))


def _evaluate(grid, regime, values, forcing, x):
    # the equation itself interpolates: v(x) = forcing(x) + sum_j K(x, y_j) v_j
    return float(forcing + grid.kernel_rows([x], regime)[0] @ values)


def solve_arl(grid: KernelGrid, initial_state: float = 0.0) -> float:
    _check_initial(grid, initial_state)
    ell = arl_function(grid)
    return _evaluate(grid, Regime.PRE_CHANGE, ell, 1.0, initial_state)


def solve_delay(grid: KernelGrid, initial_state: float = 0.0) -> float:
    _check_initial(grid, initial_state)
    delta = delay_function(grid)
    return _evaluate(grid, Regime.POST_CHANGE, delta, 1.0, initial_state)


def solve_iadd(grid: KernelGrid, delay_vector: Optional[np.ndarray] = None):
    """Solve (I - K_pre) psi = delta.

    Returns ``(psi, psi0)``: the grid function and its value at R = 0,
    i.e. the full sum over change-points of E_nu[(S_A - nu)^+].
    """
    if delay_vector is None:
        delay_vector = delay_function(grid)
    delay_vector = np.asarray(delay_vector, dtype=float)
    if delay_vector.shape != (grid.size,):
        raise InvalidInputError("delay_vector must be solved on the same grid")
    (lu, _) = grid.factor(Regime.PRE_CHANGE)
    psi = lu_solve(lu, delay_vector)
    delta0 = _evaluate(grid, Regime.POST_CHANGE, delay_vector, 1.0, 0.0)
    psi0 = _evaluate(grid, Regime.PRE_CHANGE, psi, delta0, 0.0)
    return psi, psi0


def relative_efficiency(stadd_mis: float, stadd_ideal: float) -> float:
    """Relative excess of a misspecified STADD over the ideal one.

    A negative value is returned unchanged, with a
    :class:`NegativeEfficiencyWarning`, since it can only come from
    numerical error.
    """
    if not stadd_ideal > 0:
        raise InvalidInputError(f"stadd_ideal must be positive, got {stadd_ideal!r}")
    re = (stadd_mis - stadd_ideal) / stadd_ideal
    if re < 0:
        warnings.warn(f"negative relative efficiency {re:.3g}", NegativeEfficiencyWarning, stacklevel=2)
    return re


@dataclass
class PerformanceReport:
    theta_putative: float
    theta_true: float
    threshold: float
    arl: float
    delay_nu0: float
    iadd: float
    stadd: float
    grid_size: int
    est_rel_error: float
    condition: float
    row_sum_defect: float
    gamma: Optional[float] = None
    re: Optional[float] = None
    extra: dict = field(default_factory=dict)


def evaluate_grid(grid: KernelGrid) -> dict:
    ell = arl_function(grid)
    arl = _evaluate(grid, Regime.PRE_CHANGE, ell, 1.0, 0.0)
    delta = delay_function(grid)
    delay0 = _evaluate(grid, Regime.POST_CHANGE, delta, 1.0, 0.0)
    _, psi0 = solve_iadd(grid, delta)
    return {"arl": arl, "delay_nu0": delay0, "iadd": psi0, "stadd": psi0 / arl}


def stadd(model: GaussianModel, gamma: Optional[float] = None, threshold: Optional[float] = None,
          config: GridConfig = DEFAULT_GRID, threshold_mode: str = "zeta",
          ideal: Optional[float] = None, grid: Optional[KernelGrid] = None) -> PerformanceReport:
    """Full SR performance evaluation for one (theta_putative, theta_true) pair.

    Give either ``threshold`` directly or a target ``gamma``; in the latter
    case the threshold is zeta * gamma (``threshold_mode="zeta"``) or the
    exact root of ARL(A) = gamma (``"exact"``).  Passing the ideal-case
    STADD as ``ideal`` fills in ``re``.  A prebuilt ``grid`` for the same
    threshold may be supplied to reuse its pre-change factorization.
    """
    from . import calibrate

    if (gamma is None) == (threshold is None) and grid is None:
        raise InvalidInputError("give exactly one of gamma or threshold")
    if grid is not None:
        threshold = grid.threshold
    elif threshold is None:
        if threshold_mode == "zeta":
            threshold = calibrate.threshold_from_zeta(gamma, model.theta_putative)
        elif threshold_mode == "exact":
            threshold = calibrate.calibrate_exact(gamma, model.theta_putative, config=config).threshold_exact
        else:
            raise InvalidInputError(f"unknown threshold_mode {threshold_mode!r}")

    if grid is None:
        grid = build_grid(model, threshold, config.n_nodes, config.scheme, config)
    vals = evaluate_grid(grid)

    est = math.nan
    if config.estimate_error:
        coarse = build_grid(model, threshold, max(16, grid.size // 2), grid.scheme, config)
        est = abs(evaluate_grid(coarse)["stadd"] - vals["stadd"]) / vals["stadd"]

    report = PerformanceReport(
        theta_putative=model.theta_putative,
        theta_true=model.theta_true,
        threshold=threshold,
        gamma=gamma,
        grid_size=grid.size,
        est_rel_error=est,
        condition=grid.condition(Regime.PRE_CHANGE),
        row_sum_defect=grid.row_sum_defect(Regime.PRE_CHANGE),
        **vals,
    )
    if ideal is not None:
        report.re = relative_efficiency(report.stadd, ideal)
    return report
