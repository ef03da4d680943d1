"""Closed-form stationary laws of the throttled stages.

Each stage in isolation is a birth-death chain with constant birth rate
c0 and death rate c*v(j), so the stationary pmf satisfies
pi_{j+1}/pi_j = c0 / (c * v(j+1)).  Below the threshold this gives a
Poisson-like factorial decay in (c0*sigma/c); at and above it the law is
exactly geometric with ratio q = c0/c, which exists only for c0 < c.
Under constant input the joint stationary law across stages is the
product of the per-stage laws.

Weights are accumulated in log space and the normalizer uses the closed
geometric form for the tail, never a truncated sum of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, NoStationaryDistributionError, PreconditionError
from .model import Constant, ModelConfig

__all__ = [
    "StationaryLaw",
    "stage_stationary_pmf",
    "product_stationary_pmf",
    "stationary_moment",
]


@dataclass(frozen=True)
class StationaryLaw:
    """Stationary pmf of one stage, truncated with a certified tail bound.

    pmf[j] for j = 0..trunc_index is the exactly normalized probability
    (the infinite-sum normalizer is closed-form); tail_bound certifies
    the mass beyond trunc_index.  Beyond the threshold the law continues
    geometrically with the stored ratio, which pmf_upto exploits.
    """

    pmf: np.ndarray
    normalization: float
    trunc_index: int
    tail_bound: float
    ratio: float
    threshold: int
    input_rate: float
    max_rate: float

    def __post_init__(self):
        self.pmf.setflags(write=False)

    def pmf_upto(self, j_max: int) -> np.ndarray:
        """pmf values for j = 0..j_max, extending geometrically past the
        truncation point."""
        if j_max < 0:
            raise InvalidParameterError(f"j_max must be >= 0, got {j_max}")
        n = int(j_max) + 1
        if n <= self.pmf.size:
            return self.pmf[:n].copy()
        out = np.empty(n, dtype=np.float64)
        out[:self.pmf.size] = self.pmf
        last = self.pmf[-1]
        for j in range(self.pmf.size, n):
            last = last * self.ratio
            out[j] = last
        return out


def _check_rates(c0: float, c: float) -> tuple[float, float]:
    if not (isinstance(c0, (int, float)) and math.isfinite(c0) and c0 >= 0):
        raise InvalidParameterError(f"input rate must be finite and >= 0, got {c0!r}")
    if not (isinstance(c, (int, float)) and math.isfinite(c) and c > 0):
        raise InvalidParameterError(f"max rate must be finite and positive, got {c!r}")
    if c0 >= c:
        raise NoStationaryDistributionError(
            f"no stationary law for input rate {c0} >= max rate {c}: "
            f"the geometric tail ratio would be >= 1")
    return float(c0), float(c)


def stage_stationary_pmf(c0: float, c: float, sigma_star: int,
                         tail_eps: float = 1e-12) -> StationaryLaw:
    """Stationary law of a single stage with threshold sigma_star.

    Truncates where the certified geometric tail mass drops below
    tail_eps; requires c0 < c.
    """
    c0, c = _check_rates(c0, c)
    if isinstance(sigma_star, bool) or sigma_star != int(sigma_star) or sigma_star < 1:
        raise InvalidParameterError(
            f"threshold must be a positive integer, got {sigma_star!r}")
    sigma = int(sigma_star)
    if not (tail_eps > 0):
        raise InvalidParameterError(f"tail_eps must be positive, got {tail_eps}")
    q = c0 / c
    if q == 0.0:
        pmf = np.array([1.0])
        return StationaryLaw(pmf=pmf, normalization=1.0, trunc_index=0,
                             tail_bound=0.0, ratio=0.0, threshold=sigma,
                             input_rate=c0, max_rate=c)
    # log weights relative to w_0 = 1: below the threshold
    # w_j = (q*sigma)^j / j!, from the threshold on w_j = w_sigma * q^(j-sigma)
    log_a = math.log(q * sigma)
    log_q = math.log(q)
    log_w_band = np.array([j * log_a - math.lgamma(j + 1) for j in range(sigma + 1)])
    # normalizer: band sum for j < sigma plus the closed geometric tail
    log_tail_total = log_w_band[sigma] - math.log1p(-q)
    log_z = np.logaddexp.reduce(np.append(log_w_band[:sigma], log_tail_total))
    # truncation: mass beyond J is w_J * q/(1-q) / Z for J >= sigma
    log_eps = math.log(tail_eps)
    extra = (log_eps + log_z - log_w_band[sigma] - log_q + math.log1p(-q)) / log_q
    j_trunc = max(sigma, sigma + math.ceil(extra))
    while True:
        log_tail = log_w_band[sigma] + (j_trunc - sigma + 1) * log_q \
            - math.log1p(-q) - log_z
        tail = math.exp(log_tail)
        if tail <= tail_eps or tail < 1e-300:
            break
        j_trunc += 1
    log_pmf = np.empty(j_trunc + 1)
    log_pmf[:sigma + 1] = log_w_band - log_z
    if j_trunc > sigma:
        js = np.arange(sigma + 1, j_trunc + 1)
        log_pmf[sigma + 1:] = log_w_band[sigma] + (js - sigma) * log_q - log_z
    return StationaryLaw(pmf=np.exp(log_pmf), normalization=math.exp(log_z),
                         trunc_index=j_trunc, tail_bound=tail, ratio=q,
                         threshold=sigma, input_rate=c0, max_rate=c)


def product_stationary_pmf(config: ModelConfig,
                           tail_eps: float = 1e-12) -> list[StationaryLaw]:
    """Per-stage stationary laws; their product is the joint law.

    Requires constant input with rate below the max rate.
    """
    if not isinstance(config.input, Constant):
        raise PreconditionError(
            "stationary laws need a time-independent input schedule")
    c0 = config.input.value
    laws: dict[int, StationaryLaw] = {}
    out = []
    for sigma in config.thresholds_array().tolist():
        if sigma not in laws:
            laws[sigma] = stage_stationary_pmf(c0, config.max_rate, sigma,
                                               tail_eps=tail_eps)
        out.append(laws[sigma])
    return out


def _geom_tail_first(q: float, m: int) -> float:
    """Sum of j * q^j for j >= m (q in [0,1))."""
    return q ** m * (m + q * (1 - m)) / (1 - q) ** 2


def _geom_tail_second(q: float, m: int) -> float:
    """Sum of j^2 * q^j for j >= m (q in [0,1))."""
    return q ** m * (q * (1 + q) / (1 - q) ** 3
                     + 2 * m * q / (1 - q) ** 2
                     + m * m / (1 - q))


def stationary_moment(law: StationaryLaw, n: int, tol: float = 1e-12) -> float:
    """n-th moment of the stationary law.

    For n in {1, 2} the geometric part beyond the threshold is summed in
    closed form, so the result is exact up to float rounding.  Higher
    moments sum terms until the certified geometric remainder is below
    tol relative to the accumulated value.
    """
    if isinstance(n, bool) or n != int(n) or n < 1:
        raise InvalidParameterError(f"moment order must be a positive integer, got {n!r}")
    n = int(n)
    q = law.ratio
    sigma = law.threshold
    if q == 0.0:
        return 0.0
    if n <= 2:
        js = np.arange(sigma)
        head = float((js.astype(np.float64) ** n) @ law.pmf[:sigma])
        # pmf[j] = pmf[sigma] * q^(j-sigma) for j >= sigma
        scale = law.pmf[sigma] * q ** (-sigma)
        tail = _geom_tail_first(q, sigma) if n == 1 else _geom_tail_second(q, sigma)
        return head + scale * tail
    total = 0.0
    j = 1
    log_q = math.log(q)
    while True:
        pj = law.pmf[j] if j <= law.trunc_index else \
            law.pmf[law.trunc_index] * q ** (j - law.trunc_index)
        total += float(j) ** n * pj
        if j >= sigma:
            # remainder bound: terms decay faster than geometrically once
            # j^n q^j is falling, i.e. when n/(j+1) + log q < 0
            ratio = math.exp(n * math.log1p(1.0 / j) + log_q)
            if ratio < 1.0:
                bound = float(j) ** n * pj * ratio / (1.0 - ratio)
                if bound <= tol * max(total, 1.0):
                    break
        j += 1
    return total
