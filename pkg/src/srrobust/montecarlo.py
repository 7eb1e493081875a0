"""Seeded Monte Carlo estimators, used as an independent check on the solver.

Replications are cut into fixed-size blocks.  Block ``b`` draws from a
PCG64 stream seeded by ``SeedSequence(seed, spawn_key=(b,))``, so a block's
output depends only on (seed, block index) and the estimate is the same
whatever the number of workers.  Inside a block all replications advance
in lockstep with numpy; finished replications are dropped from the
working set.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .detect import DEFAULT_MAX_STEPS, Procedure
from .errors import InvalidInputError
from .model import GaussianModel, Regime, sample_observations

DEFAULT_SEED = 20150601
BLOCK_SIZE = 4096
MIN_REPORTED_REPLICATIONS = 1000
MAX_TRUNCATION_FRACTION = 0.01

Sampler = Callable[[np.random.Generator, Regime, int], np.ndarray]


@dataclass(frozen=True)
class McConfig:
    replications: int = 10**4
    seed: int = DEFAULT_SEED
    change_point_nu: float = math.inf
    max_steps_cap: int = DEFAULT_MAX_STEPS
    worker_count: int = 1
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidInputError("replications must be positive")
        if self.worker_count < 1 or self.block_size < 1 or self.max_steps_cap < 1:
            raise InvalidInputError("worker_count, block_size and max_steps_cap must be positive")
        nu = self.change_point_nu
        if nu != math.inf and (nu < 0 or int(nu) != nu):
            raise InvalidInputError(f"change_point_nu must be a nonnegative integer or inf, got {nu!r}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    replications_used: int
    truncation_count: int

    @property
    def truncation_fraction(self) -> float:
        total = self.replications_used + self.truncation_count
        return self.truncation_count / total if total else 0.0

    @property
    def reliable(self) -> bool:
        return (self.replications_used >= MIN_REPORTED_REPLICATIONS
                and self.truncation_fraction <= MAX_TRUNCATION_FRACTION)

    def csv_record(self, metric: str) -> str:
        return (f"{metric},{self.mean:.6g},{self.std_error:.6g},"
                f"{self.replications_used},{self.truncation_count}")


def _summarize(values: np.ndarray, truncated: int) -> McEstimate:
    n = int(values.size)
    if n == 0:
        return McEstimate(math.nan, math.nan, 0, truncated)
    mean = math.fsum(values.tolist()) / n
    if n > 1:
        dev = values - mean
        se = math.sqrt(math.fsum((dev * dev).tolist()) / (n - 1) / n)
    else:
        se = math.nan
    return McEstimate(mean, se, n, truncated)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _blocks(config: McConfig):
    full, rest = divmod(config.replications, config.block_size)
    sizes = [config.block_size] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _dispatch(task, args_per_block, workers):
    if workers == 1 or len(args_per_block) == 1:
        return [task(*a) for a in args_per_block]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, *zip(*args_per_block)))


def _default_sampler(model):
    def draw(rng, regime, size):
        return sample_observations(model, regime, rng, size)
    return draw


def _step(stat, x, theta_putative, is_sr):
    llr = theta_putative * x - 0.5 * theta_putative * theta_putative
    if is_sr:
        return (1.0 + stat) * np.exp(llr)
    return np.maximum(0.0, stat + llr)


def _advance_until_alarm(stat, t0, draw, rng, regime, threshold, th, is_sr, cap):
    """Lockstep run of every replication in ``stat`` until alarm or cap.

    Returns (alarm times in replication order, number truncated); alarm
    times are absolute, counted from the block's time origin ``t0``.
    """
    n = stat.size
    alive = np.arange(n)
    stop = np.zeros(n, dtype=np.int64)
    t = t0
    while alive.size and t < cap:
        t += 1
        stat = _step(stat, draw(rng, regime, alive.size), th, is_sr)
        hit = stat >= threshold
        if hit.any():
            stop[alive[hit]] = t
            keep = ~hit
            alive = alive[keep]
            stat = stat[keep]
    done = np.ones(n, dtype=bool)
    done[alive] = False
    return stop[done], int(alive.size)


def _single_run_block(model, procedure, threshold, regime, size, cap, seed, block, sampler):
    rng = _block_rng(seed, block)
    draw = sampler or _default_sampler(model)
    return _advance_until_alarm(np.zeros(size), 0, draw, rng, regime, threshold,
                                model.theta_putative, procedure is Procedure.SR, cap)


def _cyclic_block(model, procedure, threshold, nu, size, cap, seed, block, sampler):
    rng = _block_rng(seed, block)
    draw = sampler or _default_sampler(model)
    th = model.theta_putative
    is_sr = procedure is Procedure.SR
    stat = np.zeros(size)
    alarms = np.zeros(size, dtype=np.int64)
    for _ in range(min(nu, cap)):
        stat = _step(stat, draw(rng, Regime.PRE_CHANGE, size), th, is_sr)
        hit = stat >= threshold
        alarms += hit
        stat[hit] = 0.0
    if nu >= cap:
        return np.zeros(0, dtype=np.int64), size, alarms
    stop, truncated = _advance_until_alarm(stat, nu, draw, rng, Regime.POST_CHANGE, threshold, th, is_sr, cap)
    return stop - nu, truncated, alarms


def _integral_block(model, threshold, horizon, size, cap, seed, block):
    rng = _block_rng(seed, block)
    th = model.theta_putative
    nu = rng.integers(0, horizon + 1, size=size)
    stat = np.zeros(size)
    alive = np.arange(size)
    out = np.zeros(size)
    t = 0
    while alive.size and t < cap:
        t += 1
        x = rng.standard_normal(alive.size)
        x[t > nu[alive]] += model.theta_true
        stat = _step(stat, x, th, True)
        hit = stat >= threshold
        if hit.any():
            idx = alive[hit]
            out[idx] = np.maximum(0, t - nu[idx])
            keep = ~hit
            alive = alive[keep]
            stat = stat[keep]
    done = np.ones(size, dtype=bool)
    done[alive] = False
    return (horizon + 1) * out[done], int(alive.size)


def _martingale_block(theta_putative, checkpoints, size, seed, block):
    rng = _block_rng(seed, block)
    r = np.zeros(size)
    out = np.zeros((len(checkpoints), size))
    last = max(checkpoints)
    where = {n: k for k, n in enumerate(checkpoints)}
    for n in range(1, last + 1):
        r = _step(r, rng.standard_normal(size), theta_putative, True)
        if n in where:
            out[where[n]] = r - n
    return out


def _single_run_estimate(model, procedure, threshold, config, regime, sampler):
    procedure = Procedure(procedure)
    if not threshold > 0:
        raise InvalidInputError(f"threshold must be positive, got {threshold!r}")
    args = [(model, procedure, threshold, regime, size, config.max_steps_cap, config.seed, b, sampler)
            for b, size in _blocks(config)]
    results = _dispatch(_single_run_block, args, config.worker_count)
    values = np.concatenate([r[0] for r in results]).astype(float)
    return _summarize(values, sum(r[1] for r in results))


def estimate_arl(model: GaussianModel, procedure: Procedure, threshold: float, config: McConfig,
                 sampler: Optional[Sampler] = None) -> McEstimate:
    """Mean stopping time when no change ever occurs."""
    if config.change_point_nu != math.inf:
        raise InvalidInputError("estimate_arl needs change_point_nu = inf")
    return _single_run_estimate(model, procedure, threshold, config, Regime.PRE_CHANGE, sampler)


def estimate_delay_nu0(model: GaussianModel, procedure: Procedure, threshold: float, config: McConfig,
                       sampler: Optional[Sampler] = None) -> McEstimate:
    """Mean stopping time when the change is in effect from the first observation."""
    if config.change_point_nu != 0:
        raise InvalidInputError("estimate_delay_nu0 needs change_point_nu = 0")
    return _single_run_estimate(model, procedure, threshold, config, Regime.POST_CHANGE, sampler)


def estimate_stadd(model: GaussianModel, procedure: Procedure, threshold: float, config: McConfig,
                   sampler: Optional[Sampler] = None, return_alarms: bool = False):
    """Multi-cyclic delay past a distant change-point.

    The detector is restarted from zero after every false alarm raised up
    to ``config.change_point_nu``; the estimate is the mean distance from
    the change to the first alarm after it.  With ``return_alarms=True``
    the per-replication false-alarm counts are returned as well.
    """
    procedure = Procedure(procedure)
    nu = config.change_point_nu
    if nu == math.inf:
        raise InvalidInputError("estimate_stadd needs a finite change_point_nu")
    args = [(model, procedure, threshold, int(nu), size, config.max_steps_cap, config.seed, b, sampler)
            for b, size in _blocks(config)]
    results = _dispatch(_cyclic_block, args, config.worker_count)
    values = np.concatenate([r[0] for r in results]).astype(float)
    est = _summarize(values, sum(r[1] for r in results))
    if return_alarms:
        return est, np.concatenate([r[2] for r in results])
    return est


def default_change_point(gamma: float) -> int:
    """Change-point used for STADD estimation: ten times the target ARL."""
    return int(math.ceil(10 * gamma))


def estimate_integral_delay(model: GaussianModel, threshold: float, horizon: int,
                            config: McConfig) -> McEstimate:
    """Unbiased estimate of sum_{nu=0}^{horizon} E_nu[(S_A - nu)^+] for SR.

    Each replication draws nu uniformly from {0, ..., horizon} and scores
    (horizon + 1) * (S_A - nu)^+; no restarts are involved.
    """
    args = [(model, threshold, int(horizon), size, config.max_steps_cap, config.seed, b)
            for b, size in _blocks(config)]
    results = _dispatch(_integral_block, args, config.worker_count)
    values = np.concatenate([r[0] for r in results])
    return _summarize(values, sum(r[1] for r in results))


def martingale_diagnostic(model: GaussianModel, checkpoints: Sequence[int], config: McConfig):
    """Estimates of E_inf[R_n - n] at each checkpoint ``n``.

    Returns a dict ``{n: McEstimate}``; n = 0 gives exactly zero.
    """
    checkpoints = sorted({int(n) for n in checkpoints})
    if any(n < 0 for n in checkpoints):
        raise InvalidInputError("checkpoints must be nonnegative")
    out = {}
    if 0 in checkpoints:
        out[0] = McEstimate(0.0, 0.0, config.replications, 0)
    positive = [n for n in checkpoints if n > 0]
    if positive:
        args = [(model.theta_putative, positive, size, config.seed, b) for b, size in _blocks(config)]
        blocks = _dispatch(_martingale_block, args, config.worker_count)
        stacked = np.concatenate(blocks, axis=1)
        for k, n in enumerate(positive):
            out[n] = _summarize(stacked[k], 0)
    return dict(sorted(out.items()))
