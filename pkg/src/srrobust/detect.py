"""Online SR and CUSUM detectors.

The statistics are plain immutable states advanced one observation at a
time.  Runners consume any iterable of observations; randomness lives in
the stream objects, never in the detectors.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .errors import InvalidInputError, TruncatedRunError
from .model import GaussianModel, Regime, sample_observations

DEFAULT_MAX_STEPS = 10**8


class Procedure(enum.Enum):
    SR = "sr"
    CUSUM = "cusum"


@dataclass(frozen=True)
class SrState:
    r: float = 0.0
    n: int = 0

    def __post_init__(self):
        if not self.r >= 0:
            raise InvalidInputError(f"SR statistic must be nonnegative, got {self.r!r}")
        if self.n < 0:
            raise InvalidInputError(f"step count must be nonnegative, got {self.n!r}")


@dataclass(frozen=True)
class CusumState:
    w: float = 0.0
    n: int = 0

    def __post_init__(self):
        if not self.w >= 0:
            raise InvalidInputError(f"CUSUM statistic must be nonnegative, got {self.w!r}")
        if self.n < 0:
            raise InvalidInputError(f"step count must be nonnegative, got {self.n!r}")


@dataclass(frozen=True)
class RunOutcome:
    stop_time: int
    threshold: float
    procedure: Procedure
    trajectory: Optional[List[Tuple[int, float]]] = None


@dataclass(frozen=True)
class CycleOutcome:
    """Result of one multi-cyclic run: delay past the change and false alarms."""

    delay: int
    false_alarms: int
    change_point: int


def sr_update(state: SrState, lr: float) -> SrState:
    """R_{n+1} = (1 + R_n) * lr."""
    if not lr > 0:
        raise InvalidInputError(f"likelihood ratio must be positive, got {lr!r}")
    return SrState((1.0 + state.r) * lr, state.n + 1)


def cusum_update(state: CusumState, log_lr: float) -> CusumState:
    """W_n = max(0, W_{n-1} + log_lr)."""
    return CusumState(max(0.0, state.w + log_lr), state.n + 1)


def sr_step_batch(r: np.ndarray, lr: np.ndarray) -> np.ndarray:
    """Vectorized :func:`sr_update` on arrays of statistics."""
    return (1.0 + r) * lr


def cusum_step_batch(w: np.ndarray, log_lr: np.ndarray) -> np.ndarray:
    """Vectorized :func:`cusum_update`."""
    return np.maximum(0.0, w + log_lr)


def initial_state(procedure: Procedure):
    return SrState() if procedure is Procedure.SR else CusumState()


def _value(state) -> float:
    return state.r if isinstance(state, SrState) else state.w


def run_to_alarm(
    stream: Iterable[float],
    procedure: Procedure,
    threshold: float,
    model: GaussianModel,
    record_trajectory: bool = False,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> RunOutcome:
    """Run a detector until its statistic first reaches ``threshold``.

    Raises
    ------
    TruncatedRunError
        If ``max_steps`` observations are consumed, or the stream ends,
        before the statistic crosses the threshold.
    """
    if not threshold > 0:
        raise InvalidInputError(f"threshold must be positive, got {threshold!r}")
    procedure = Procedure(procedure)
    th = model.theta_putative
    half_sq = 0.5 * th * th
    trajectory = [] if record_trajectory else None

    value = 0.0
    n = 0
    it = iter(stream)
    is_sr = procedure is Procedure.SR
    while n < max_steps:
        try:
            x = next(it)
        except StopIteration:
            raise TruncatedRunError(
                f"stream exhausted after {n} observations without an alarm",
                state=_make_state(procedure, value, n),
                reason="exhausted",
                trajectory=trajectory,
            ) from None
        n += 1
        log_lr = th * x - half_sq
        if is_sr:
            value = (1.0 + value) * math.exp(log_lr)
        else:
            value = max(0.0, value + log_lr)
        if trajectory is not None:
            trajectory.append((n, value))
        if value >= threshold:
            return RunOutcome(n, threshold, procedure, trajectory)
    raise TruncatedRunError(
        f"no alarm within max_steps={max_steps}",
        state=_make_state(procedure, value, n),
        reason="cap",
        trajectory=trajectory,
    )


def _make_state(procedure, value, n):
    return SrState(value, n) if procedure is Procedure.SR else CusumState(value, n)


def multi_cyclic_run(
    stream: Iterable[float],
    change_point: int,
    procedure: Procedure,
    threshold: float,
    model: GaussianModel,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> CycleOutcome:
    """Restart the detector after every alarm until one lands past the change.

    ``stream`` must already carry the change after observation
    ``change_point`` (see :class:`GaussianStream`).  ``max_steps`` bounds
    the total number of observations consumed across all cycles.
    """
    if change_point < 0 or int(change_point) != change_point:
        raise InvalidInputError(f"change_point must be a nonnegative integer, got {change_point!r}")
    it = iter(stream)
    elapsed = 0
    false_alarms = 0
    while True:
        outcome = run_to_alarm(it, procedure, threshold, model, max_steps=max_steps - elapsed)
        elapsed += outcome.stop_time
        if elapsed > change_point:
            return CycleOutcome(elapsed - change_point, false_alarms, int(change_point))
        false_alarms += 1
        if elapsed >= max_steps:
            raise TruncatedRunError(
                f"no post-change alarm within max_steps={max_steps}",
                state=initial_state(procedure),
                reason="cap",
            )


def trace_statistics(observations, theta_putative: float):
    """CUSUM and SR paths over a fixed sample, ignoring any threshold.

    Returns rows ``(n, x, cusum, sr)`` for n = 1..len(observations).
    """
    sr = SrState()
    cs = CusumState()
    rows = []
    for x in observations:
        log_lr = theta_putative * x - 0.5 * theta_putative**2
        sr = sr_update(sr, math.exp(log_lr))
        cs = cusum_update(cs, log_lr)
        rows.append((sr.n, float(x), cs.w, sr.r))
    return rows


class GaussianStream:
    """Seeded Gaussian observation source with an optional change-point.

    Observations 1..change_point are N(0, 1); from change_point + 1 on they
    are N(theta_true, 1).  ``change_point=None`` means no change ever.
    """

    def __init__(self, model: GaussianModel, change_point=None, seed=None, rng=None, chunk=4096):
        if rng is None:
            rng = np.random.default_rng(seed)
        self.model = model
        self.change_point = change_point
        self.rng = rng
        self.chunk = chunk

    def __iter__(self) -> Iterator[float]:
        t = 0
        nu = self.change_point
        while True:
            if nu is None or t + self.chunk <= nu:
                block = sample_observations(self.model, Regime.PRE_CHANGE, self.rng, self.chunk)
            elif t >= nu:
                block = sample_observations(self.model, Regime.POST_CHANGE, self.rng, self.chunk)
            else:
                block = sample_observations(self.model, Regime.PRE_CHANGE, self.rng, self.chunk)
                block[nu - t:] += self.model.theta_true
            t += self.chunk
            yield from block.tolist()


def replay(path) -> List[float]:
    """Load observations from a text file (one number per line or per CSV row).

    A header line is skipped if its first field is not numeric; with
    several columns the one named ``x`` is used, otherwise the first.
    """
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    col = 0
    if lines:
        head = lines[0].split(",")
        try:
            float(head[0])
        except ValueError:
            col = head.index("x") if "x" in head else 0
            lines = lines[1:]
    return [float(ln.split(",")[col]) for ln in lines]
