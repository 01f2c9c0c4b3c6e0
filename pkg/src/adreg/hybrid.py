"""Hybrid time domains, clock strategies, and the flow/jump simulation engine.

Jumps are clock-triggered only: the closed loop's jump set is the clock's
jump window crossed with full spaces, so event detection reduces to exact
stepping onto known jump instants. The final flow step of each interval is
shortened, never overshot.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, IntegrationBlowupError
from .numerics import rk4_step

STRATEGIES = ("periodic", "uniform")


@dataclass(frozen=True)
class HybridTime:
    t: float
    j: int

    def __post_init__(self):
        if self.t < 0.0 or self.j < 0:
            raise InvalidConfigError("hybrid time requires t >= 0 and j >= 0")


@dataclass(frozen=True)
class ClockConfig:
    """Jump-scheduling clock with inter-jump gaps in [t_low, t_high].

    strategy "periodic" jumps every ``period`` seconds (defaults to t_low);
    strategy "uniform" draws each gap uniformly from [t_low, t_high] with a
    seeded generator, so runs are reproducible.
    """

    t_low: float
    t_high: float
    strategy: str = "periodic"
    period: float = None
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.t_low <= self.t_high):
            raise InvalidConfigError("clock requires 0 < t_low <= t_high")
        if self.strategy not in STRATEGIES:
            raise InvalidConfigError(f"unknown clock strategy {self.strategy!r}")
        if self.strategy == "periodic":
            p = self.period if self.period is not None else self.t_low
            if not (self.t_low <= p <= self.t_high):
                raise InvalidConfigError("periodic period must lie in [t_low, t_high]")
            object.__setattr__(self, "period", p)

    def make_rng(self):
        return np.random.default_rng(self.seed)


def next_jump_time(clock, last_jump_t, rng=None):
    """Next jump instant after last_jump_t according to the clock strategy."""
    if clock.strategy == "periodic":
        return last_jump_t + clock.period
    if rng is None:
        rng = clock.make_rng()
    return last_jump_t + rng.uniform(clock.t_low, clock.t_high)


@dataclass
class HybridArc:
    """Trajectory samples over a hybrid time domain.

    Rows of ``states`` align with ``t`` and ``j``. Jump instants are stored
    twice: pre-jump at (t, j) and post-jump at (t, j+1); ``jump_indices``
    points at the pre-jump rows.
    """

    t: np.ndarray
    j: np.ndarray
    states: np.ndarray
    jump_indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def __len__(self):
        return self.t.size

    def samples(self):
        for i in range(self.t.size):
            yield HybridTime(float(self.t[i]), int(self.j[i])), self.states[i]

    def jump_times(self):
        return self.t[self.jump_indices]


def validate_arc(arc, clock=None, atol=1e-9):
    """Check the HybridArc invariants; raises InvalidConfigError on violation."""
    t, j = arc.t, arc.j
    if np.any(t < -atol) or np.any(j < 0):
        raise InvalidConfigError("arc contains negative hybrid times")
    order = t + j
    if np.any(np.diff(order) < -atol):
        raise InvalidConfigError("arc not ordered by t + j")
    dj = np.diff(j)
    if np.any((dj != 0) & (dj != 1)):
        raise InvalidConfigError("jump counter must increment by exactly one")
    if np.any(np.diff(t)[dj == 0] < -atol):
        raise InvalidConfigError("t must be non-decreasing within a flow interval")
    if clock is not None and arc.jump_indices.size > 1:
        gaps = np.diff(arc.t[arc.jump_indices])
        if np.any(gaps < clock.t_low - atol) or np.any(gaps > clock.t_high + atol):
            raise InvalidConfigError("inter-jump gap outside [t_low, t_high]")
    return True


def simulate(flow, jump, x0, clock, horizon, dt=None):
    """Integrate a clock-triggered hybrid system and record the full arc.

    flow(x) -> dx/dt; jump(t, j, x) -> x_plus. Components the jump map wants
    held must be copied through by the caller's jump function.
    """
    if dt is None:
        dt = min(1e-3, clock.t_low / 100.0)
    if dt <= 0.0 or horizon <= 0.0:
        raise InvalidConfigError("dt and horizon must be positive")
    if dt > clock.t_low / 10.0:
        raise InvalidConfigError("dt must not exceed t_low / 10")

    rng = clock.make_rng()
    x = np.array(x0, dtype=float)
    t, jcnt = 0.0, 0
    ts, js, xs = [0.0], [0], [x.copy()]
    jump_rows = []

    next_t = next_jump_time(clock, 0.0, rng)
    while True:
        t_end = min(next_t, horizon)
        # flow from t to t_end in steps of dt, shortening the last step
        while t_end - t > 1e-12:
            h = min(dt, t_end - t)
            try:
                x = rk4_step(flow, x, h, t=t)
            except IntegrationBlowupError as exc:
                raise IntegrationBlowupError(exc.t, jcnt, exc.state) from None
            t += h
            if t_end - t <= 1e-12:
                t = t_end
            ts.append(t)
            js.append(jcnt)
            xs.append(x.copy())
        if next_t > horizon:
            break
        # clock tick: record pre-jump, apply jump, record post-jump
        jump_rows.append(len(ts) - 1)
        x = np.asarray(jump(t, jcnt, x), dtype=float)
        jcnt += 1
        ts.append(t)
        js.append(jcnt)
        xs.append(x.copy())
        if next_t >= horizon:
            break
        next_t = next_jump_time(clock, next_t, rng)

    return HybridArc(
        t=np.asarray(ts),
        j=np.asarray(js, dtype=int),
        states=np.asarray(xs),
        jump_indices=np.asarray(jump_rows, dtype=int),
    )
