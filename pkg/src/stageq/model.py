"""Model definition for the throttled multi-stage transfer chain.

A chain of ``num_stages`` stages holds integer counts of data units.  Units
enter stage 1 at rate ``c0(t)``, hop from stage k to k+1 at rate
``c * v(count_k)``, and leave the system from the last stage.  The throttle

    v(x) = 0 for x <= 0,  x / sigma for 0 <= x <= sigma,  1 for x >= sigma

models a stage that serves at full rate ``c`` only once its occupancy
reaches the threshold ``sigma`` (an M/M/sigma service discipline).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .rng import RngStream

__all__ = [
    "Constant",
    "PiecewiseConstant",
    "Sinusoid",
    "InputSchedule",
    "UniformThresholds",
    "PerStageThresholds",
    "RandomThresholds",
    "ThresholdSpec",
    "ModelConfig",
    "throttle",
    "transfer_rate",
    "input_rate_at",
]


def _check_threshold(sigma: int) -> int:
    if not isinstance(sigma, (int, np.integer)) or isinstance(sigma, bool):
        raise InvalidParameterError(f"threshold must be an integer, got {sigma!r}")
    if sigma < 1:
        raise InvalidParameterError(f"threshold must be >= 1, got {sigma}")
    return int(sigma)


def throttle(x: float, sigma: int) -> float:
    """Piecewise-linear slowdown factor v(x) in [0, 1].

    Accepts real occupancy so the same function serves both the integer
    lattice dynamics and the real-valued mean-field equations.
    """
    sigma = _check_threshold(sigma)
    if x <= 0.0:
        return 0.0
    if x >= sigma:
        return 1.0
    return x / sigma


def transfer_rate(x: float, sigma: int, c: float) -> float:
    """Outflow rate c * v(x) of a stage with occupancy x and threshold sigma."""
    if c <= 0.0:
        raise InvalidParameterError(f"max_rate must be positive, got {c}")
    return c * throttle(x, sigma)


@dataclass(frozen=True)
class Constant:
    """Time-independent input rate."""

    value: float

    def __post_init__(self):
        if not (self.value >= 0.0) or not math.isfinite(self.value):
            raise InvalidParameterError(f"input rate must be finite and >= 0, got {self.value}")

    def value_at(self, t: float) -> float:
        return self.value

    def upper_bound(self, t: float = 0.0) -> float:
        """Supremum of the rate on [t, infinity)."""
        return self.value

    def breakpoints(self) -> tuple[float, ...]:
        return ()


@dataclass(frozen=True)
class PiecewiseConstant:
    """Right-continuous step schedule given as ((t0, v0), (t1, v1), ...).

    The first breakpoint must sit at t=0; at a breakpoint the new value
    applies, so ((0, 6), (30, 0)) is 6 on [0, 30) and 0 from t=30 on.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise InvalidParameterError("piecewise schedule needs at least one point")
        if pts[0][0] != 0.0:
            raise InvalidParameterError("piecewise schedule must start at t=0")
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if not t1 > t0:
                raise InvalidParameterError("breakpoint times must be strictly increasing")
        for _, v in pts:
            if not (v >= 0.0) or not math.isfinite(v):
                raise InvalidParameterError(f"input rate must be finite and >= 0, got {v}")

    def value_at(self, t: float) -> float:
        value = self.points[0][1]
        for tb, v in self.points:
            if tb <= t:
                value = v
            else:
                break
        return value

    def upper_bound(self, t: float = 0.0) -> float:
        values = [v for tb, v in self.points if tb > t]
        return max([self.value_at(t)] + values)

    def breakpoints(self) -> tuple[float, ...]:
        return tuple(tb for tb, _ in self.points[1:])


@dataclass(frozen=True)
class Sinusoid:
    """Oscillating input max(0, offset + amplitude * sin(omega * t))."""

    offset: float
    amplitude: float
    omega: float

    def __post_init__(self):
        for name in ("offset", "amplitude", "omega"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")

    def value_at(self, t: float) -> float:
        return max(0.0, self.offset + self.amplitude * math.sin(self.omega * t))

    def upper_bound(self, t: float = 0.0) -> float:
        return max(0.0, self.offset + abs(self.amplitude))

    def breakpoints(self) -> tuple[float, ...]:
        return ()


InputSchedule = Constant | PiecewiseConstant | Sinusoid


def input_rate_at(schedule: InputSchedule, t: float) -> float:
    """Evaluate an input schedule at time t (right-continuous)."""
    return schedule.value_at(t)


@dataclass(frozen=True)
class UniformThresholds:
    """Every stage shares the same threshold."""

    value: int

    def __post_init__(self):
        object.__setattr__(self, "value", _check_threshold(self.value))

    def materialize(self, num_stages: int) -> np.ndarray:
        return np.full(num_stages, self.value, dtype=np.int64)


@dataclass(frozen=True)
class PerStageThresholds:
    """Explicit per-stage thresholds; length must match the stage count."""

    values: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(_check_threshold(v) for v in self.values))
        if not self.values:
            raise InvalidParameterError("per-stage thresholds need at least one value")

    def materialize(self, num_stages: int) -> np.ndarray:
        if len(self.values) != num_stages:
            raise InvalidParameterError(
                f"{len(self.values)} thresholds given for {num_stages} stages"
            )
        return np.asarray(self.values, dtype=np.int64)


@dataclass(frozen=True)
class RandomThresholds:
    """Thresholds drawn i.i.d. per stage from a finite distribution.

    Materialization is deterministic: stage thresholds come from the
    portable stream (seed, 0) by inverse-CDF lookup, so a given spec always
    yields the same chain on every platform and worker layout.
    """

    support: tuple[int, ...]
    probs: tuple[float, ...]
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(_check_threshold(v) for v in self.support))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.support) != len(self.probs) or not self.support:
            raise InvalidParameterError("support and probs must be non-empty, equal length")
        if any(p < 0.0 for p in self.probs):
            raise InvalidParameterError("probabilities must be >= 0")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise InvalidParameterError(f"probabilities sum to {sum(self.probs)}, not 1")
        if int(self.seed) < 0:
            raise InvalidParameterError("seed must be a non-negative integer")

    def materialize(self, num_stages: int) -> np.ndarray:
        cum = np.cumsum(self.probs)
        rng = RngStream(int(self.seed), 0)
        out = np.empty(num_stages, dtype=np.int64)
        for k in range(num_stages):
            u = rng.next_unit()
            # inverse CDF; the final bucket absorbs roundoff in cum[-1]
            j = int(np.searchsorted(cum, u, side="right"))
            out[k] = self.support[min(j, len(self.support) - 1)]
        return out

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot((np.asarray(self.support) - m) ** 2, self.probs))


ThresholdSpec = UniformThresholds | PerStageThresholds | RandomThresholds


@dataclass(frozen=True)
class ModelConfig:
    """Complete model specification.

    Note that nothing here restricts c0 relative to c; stationary-law
    routines check c0 < c themselves, transient simulation is well defined
    either way.
    """

    num_stages: int
    max_rate: float
    input: InputSchedule
    thresholds: ThresholdSpec

    def __post_init__(self):
        if not isinstance(self.num_stages, (int, np.integer)) or self.num_stages < 1:
            raise InvalidParameterError(f"num_stages must be an integer >= 1, got {self.num_stages}")
        if not (self.max_rate > 0.0) or not math.isfinite(self.max_rate):
            raise InvalidParameterError(f"max_rate must be finite and > 0, got {self.max_rate}")
        if not isinstance(self.input, (Constant, PiecewiseConstant, Sinusoid)):
            raise InvalidParameterError(f"unsupported input schedule {self.input!r}")
        if not isinstance(self.thresholds, (UniformThresholds, PerStageThresholds, RandomThresholds)):
            raise InvalidParameterError(f"unsupported threshold spec {self.thresholds!r}")

    def thresholds_array(self) -> np.ndarray:
        """Materialized per-stage thresholds as int64, length num_stages."""
        arr = self.thresholds.materialize(self.num_stages)
        arr.setflags(write=False)
        return arr
