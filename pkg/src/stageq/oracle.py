"""Exact transient distributions on a capped lattice.

The chain is restricted to {0..cap}^N with a reflecting cap: any move
that would push a stage above the cap is suppressed (its rate removed),
so the generator stays conservative and the capped chain is an honest
CTMC whose law approaches the uncapped one as the cap grows.  The
forward equation p'(t) = Q^T p(t) is solved with a sparse matrix
exponential, segment by segment when the input is piecewise constant.

This scales as (cap+1)^N states and is meant as a small-system
reference, not a production engine.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import InvalidParameterError, PreconditionError, StateSpaceTooLargeError
from .model import Constant, ModelConfig, PiecewiseConstant
from .simulate import LatticeState

__all__ = [
    "TruncatedGenerator",
    "TransientDistribution",
    "build_truncated_generator",
    "transient_oracle",
]

MAX_STATES = 120_000


@dataclass(frozen=True)
class TruncatedGenerator:
    """Generator of the capped chain for one input-rate value.

    rate_matrix_t is Q transposed (columns index source states), in CSR
    form, over states flattened C-style from (cap+1,)*num_stages.
    Columns sum to zero: the reflecting cap drops out-of-range moves.
    """

    num_stages: int
    cap: int
    input_rate: float
    rate_matrix_t: sp.csr_matrix

    @property
    def num_states(self) -> int:
        return (self.cap + 1) ** self.num_stages


def _check_cap(config: ModelConfig, cap: int) -> int:
    if isinstance(cap, bool) or cap != int(cap) or cap < 1:
        raise InvalidParameterError(f"cap must be a positive integer, got {cap!r}")
    cap = int(cap)
    n_states = (cap + 1) ** config.num_stages
    if n_states > MAX_STATES:
        raise StateSpaceTooLargeError(
            f"(cap+1)^num_stages = {n_states} states exceeds {MAX_STATES}; "
            f"reduce the cap or the number of stages")
    return cap


def build_truncated_generator(config: ModelConfig, cap: int,
                              input_rate: float | None = None) -> TruncatedGenerator:
    """Build the reflecting-cap generator.

    input_rate overrides the schedule value (used for piecewise
    segments); by default the input must be constant.
    """
    cap = _check_cap(config, cap)
    if input_rate is None:
        if not isinstance(config.input, Constant):
            raise PreconditionError(
                "pass input_rate explicitly for non-constant input schedules")
        input_rate = config.input.value
    n = config.num_stages
    c = config.max_rate
    sigmas = config.thresholds_array()
    side = cap + 1
    n_states = side ** n
    coords = np.unravel_index(np.arange(n_states), (side,) * n)
    coords = np.stack(coords, axis=0)  # (n, n_states)
    strides = np.array([side ** (n - 1 - k) for k in range(n)], dtype=np.int64)

    rows, cols, data = [], [], []
    diag = np.zeros(n_states, dtype=np.float64)

    def add_channel(src_mask: np.ndarray, rates: np.ndarray, delta_flat: int) -> None:
        src = np.nonzero(src_mask)[0]
        if src.size == 0:
            return
        r = rates[src]
        rows.append(src + delta_flat)
        cols.append(src)
        data.append(r)
        diag[src] -= r

    # input: stage 1 gains one, suppressed at the cap
    add_channel(coords[0] < cap,
                np.full(n_states, float(input_rate)), strides[0])
    for k in range(n):
        v = np.minimum(coords[k], sigmas[k]) / float(sigmas[k])
        rates = c * v
        if k + 1 < n:
            mask = (coords[k] > 0) & (coords[k + 1] < cap)
            delta = -strides[k] + strides[k + 1]
        else:
            mask = coords[k] > 0
            delta = -strides[k]
        add_channel(mask, rates, delta)

    rows.append(np.arange(n_states))
    cols.append(np.arange(n_states))
    data.append(diag)
    q_t = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_states, n_states)).tocsr()
    return TruncatedGenerator(num_stages=n, cap=cap,
                              input_rate=float(input_rate), rate_matrix_t=q_t)


@dataclass(frozen=True)
class TransientDistribution:
    """Distribution over the capped lattice at one time point."""

    pmf: np.ndarray          # shape (cap+1,)*num_stages
    time: float
    cap: int
    cap_mass: float          # mass with any stage within 2 of the cap

    def __post_init__(self):
        self.pmf.setflags(write=False)

    @property
    def num_stages(self) -> int:
        return self.pmf.ndim

    def marginal_pmf(self, stage: int) -> np.ndarray:
        """Marginal over counts of the given stage (1-based)."""
        if not (1 <= stage <= self.num_stages):
            raise InvalidParameterError(
                f"stage must be in 1..{self.num_stages}, got {stage}")
        axes = tuple(a for a in range(self.num_stages) if a != stage - 1)
        return self.pmf.sum(axis=axes) if axes else self.pmf.copy()

    def marginal_mean(self, stage: int) -> float:
        p = self.marginal_pmf(stage)
        return float(np.arange(p.size) @ p)

    def marginal_variance(self, stage: int) -> float:
        p = self.marginal_pmf(stage)
        js = np.arange(p.size, dtype=np.float64)
        m = float(js @ p)
        return float((js - m) ** 2 @ p)


def _input_segments(config: ModelConfig, t: float) -> list[tuple[float, float, float]]:
    """(t_start, t_end, rate) covering [0, t]."""
    sched = config.input
    if isinstance(sched, Constant):
        return [(0.0, t, sched.value)]
    if isinstance(sched, PiecewiseConstant):
        points = list(sched.points)
        segs = []
        for i, (tb, rate) in enumerate(points):
            if tb >= t:
                break
            t_end = points[i + 1][0] if i + 1 < len(points) else math.inf
            segs.append((tb, min(t_end, t), rate))
        return segs
    raise PreconditionError(
        "the transient solver needs a constant or piecewise-constant input")


def transient_oracle(config: ModelConfig, cap: int, t: float,
                     initial: LatticeState | None = None) -> TransientDistribution:
    """Exact law of the capped chain at time t from the given start state.

    Warns when the mass near the cap exceeds 1e-6, since then the capped
    law visibly differs from the uncapped one.
    """
    cap = _check_cap(config, cap)
    if not (isinstance(t, (int, float)) and math.isfinite(t) and t >= 0):
        raise InvalidParameterError(f"time must be finite and >= 0, got {t!r}")
    t = float(t)
    n = config.num_stages
    if initial is None:
        initial = LatticeState.empty(n)
    if initial.num_stages != n:
        raise InvalidParameterError(
            f"initial state has {initial.num_stages} stages, model has {n}")
    if any(ct > cap for ct in initial.counts):
        raise InvalidParameterError(
            f"initial counts {initial.counts} exceed the cap {cap}")
    side = cap + 1
    p = np.zeros(side ** n, dtype=np.float64)
    flat0 = 0
    for ct in initial.counts:
        flat0 = flat0 * side + ct
    p[flat0] = 1.0
    if t > 0:
        for t_a, t_b, rate in _input_segments(config, t):
            gen = build_truncated_generator(config, cap, input_rate=rate)
            dt = t_b - t_a
            if dt > 0:
                p = expm_multiply(gen.rate_matrix_t * dt, p)
        np.clip(p, 0.0, None, out=p)
        p /= p.sum()
    grid = p.reshape((side,) * n)
    near = np.zeros((side,) * n, dtype=bool)
    for axis in range(n):
        idx = [slice(None)] * n
        idx[axis] = slice(max(0, cap - 2), None)
        near[tuple(idx)] = True
    cap_mass = float(grid[near].sum())
    if cap_mass > 1e-6:
        warnings.warn(
            f"mass {cap_mass:.3e} within 2 of the cap {cap}; "
            f"the capped law may differ from the uncapped chain",
            RuntimeWarning, stacklevel=2)
    return TransientDistribution(pmf=grid, time=t, cap=cap, cap_mass=cap_mass)
