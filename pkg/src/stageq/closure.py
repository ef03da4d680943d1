"""Negative-binomial moment closure for the throttled tandem stages.

Each stage's count distribution is approximated by a negative binomial
matched to its running mean rho and variance eta (success probability
p = rho/eta, size r = rho^2/(eta - rho)), extended continuously to the
boundary rays of the moment domain D = {0 <= rho <= eta}: the rho = 0
ray is a point mass at zero and the rho = eta ray is Poisson.  The
deficit sums F = sum_{i<sigma} (sigma - i) P_i and their weighted
variant W close the mean/variance ODE system of the chain, which an
adaptive explicit Euler integrator (step doubling, projection onto D
after every accepted step) advances in time.  A means-only naive
baseline that evaluates the throttle at the mean is included for
comparison.

The functions here are the pure-Python reference; the integrator runs
compiled kernels (_closure_kernels) whose arithmetic mirrors this file
expression for expression, so both routes agree bitwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _closure_kernels as _ck
from .errors import (
    ClosureDomainError,
    IntegrationFailureError,
    InvalidParameterError,
)
from .model import ModelConfig, input_rate_at, throttle
from .simulate import _check_sample_times, _encode_schedule, fmt_float

__all__ = [
    "ZERO_RAY_RHO",
    "POISSON_RAY_REL",
    "NBParams",
    "MomentState",
    "IntegratorSettings",
    "nb_pmf",
    "nb_aux_Q",
    "deficit_sum",
    "weighted_deficit_sum",
    "closure_rhs",
    "project_D",
    "integrate",
    "mean_field_rhs",
    "integrate_mean_field",
    "write_trajectory_csv",
]

# Band tolerances routing near-ray inputs to the exact-ray formulas: the
# negative-binomial size parameter r diverges as eta -> rho, so inputs
# within POISSON_RAY_REL of the diagonal use the Poisson limit, and
# means below ZERO_RAY_RHO use the empty-state limit.
ZERO_RAY_RHO = _ck.ZERO_RAY_RHO
POISSON_RAY_REL = _ck.POISSON_RAY_REL


def _check_domain(rho: float, eta: float) -> None:
    if not (math.isfinite(rho) and math.isfinite(eta)):
        raise ClosureDomainError(f"moments must be finite, got ({rho}, {eta})")
    if rho < 0.0 or eta < rho:
        raise ClosureDomainError(
            f"({rho}, {eta}) is outside the moment domain 0 <= rho <= eta")


def _on_zero_ray(rho: float) -> bool:
    return rho <= ZERO_RAY_RHO


def _on_poisson_ray(rho: float, eta: float) -> bool:
    return eta - rho <= POISSON_RAY_REL * max(eta, 1.0)


@dataclass(frozen=True)
class NBParams:
    """Negative-binomial parameters (success probability p, size r)."""

    p: float
    r: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0) or not math.isfinite(self.p):
            raise InvalidParameterError(f"p must be in (0, 1], got {self.p}")
        if not (self.r > 0.0) or not math.isfinite(self.r):
            raise InvalidParameterError(f"r must be positive, got {self.r}")

    @classmethod
    def from_moments(cls, rho: float, eta: float) -> "NBParams":
        """p = rho/eta, r = rho^2/(eta - rho); needs interior 0 < rho < eta."""
        _check_domain(rho, eta)
        if _on_zero_ray(rho) or _on_poisson_ray(rho, eta):
            raise ClosureDomainError(
                f"({rho}, {eta}) lies on a boundary ray; parameters need the "
                f"interior 0 < rho < eta")
        return cls(p=rho / eta, r=rho * rho / (eta - rho))

    @property
    def mean(self) -> float:
        return self.r * (1.0 - self.p) / self.p

    @property
    def variance(self) -> float:
        return self.r * (1.0 - self.p) / (self.p * self.p)


def _check_count(n) -> int:
    if isinstance(n, bool) or n != int(n) or n < 0:
        raise InvalidParameterError(f"count must be a non-negative integer, got {n!r}")
    return int(n)


def _check_threshold(sigma) -> int:
    if isinstance(sigma, bool) or sigma != int(sigma) or sigma < 1:
        raise InvalidParameterError(
            f"threshold must be a positive integer, got {sigma!r}")
    return int(sigma)


def nb_pmf(n, rho: float, eta: float) -> float:
    """P[count = n] under the matched negative binomial.

    Three branches: point mass at zero on the rho = 0 ray, Poisson on
    the rho = eta ray, log-space negative binomial in the interior.
    """
    n = _check_count(n)
    _check_domain(rho, eta)
    if rho <= ZERO_RAY_RHO:
        return 1.0 if n == 0 else 0.0
    if eta - rho <= POISSON_RAY_REL * max(eta, 1.0):
        val = math.exp(n * math.log(rho) - rho - math.lgamma(n + 1.0))
    else:
        p = rho / eta
        r = rho * rho / (eta - rho)
        val = math.exp(math.lgamma(n + r) - math.lgamma(r) - math.lgamma(n + 1.0)
                       + r * math.log(p) + n * math.log1p(-p))
    return min(val, 1.0)


def nb_aux_Q(n, rho: float, eta: float) -> float:
    """Q_n = (1/n!) * prod_{i<n} ((1 - rho/eta) i + rho^2/eta).

    Satisfies P_n = Q_n * P_0 on the interior of the moment domain.
    """
    n = _check_count(n)
    if n < 1:
        raise InvalidParameterError("the auxiliary product needs n >= 1")
    _check_domain(rho, eta)
    if _on_zero_ray(rho) or _on_poisson_ray(rho, eta):
        raise ClosureDomainError(
            f"({rho}, {eta}) lies on a boundary ray; the auxiliary product "
            f"needs the interior 0 < rho < eta")
    a = 1.0 - rho / eta
    b = rho * rho / eta
    q = 1.0
    for i in range(n):
        q *= (a * i + b) / (i + 1.0)
    return q


def deficit_sum(rho: float, eta: float, sigma_star) -> float:
    """F = sum_{i<sigma} (sigma - i) P_i, in [0, sigma].

    The mean throttle factor is E[v] = 1 - F/sigma.
    """
    sigma = _check_threshold(sigma_star)
    _check_domain(rho, eta)
    total = 0.0
    for i in range(sigma):
        p = nb_pmf(i, rho, eta)
        total += (sigma - i) * p
    return total


def weighted_deficit_sum(rho: float, eta: float, sigma_star) -> float:
    """W = sum_{i<sigma} (2 rho + 1 - 2i)(sigma - i) P_i."""
    sigma = _check_threshold(sigma_star)
    _check_domain(rho, eta)
    total = 0.0
    for i in range(sigma):
        p = nb_pmf(i, rho, eta)
        total += (2.0 * rho + 1.0 - 2.0 * i) * (sigma - i) * p
    return total


@dataclass(frozen=True)
class MomentState:
    """Per-stage means and variances at one time.

    The moment domain requires 0 <= rho[k] <= eta[k]; construction does
    not enforce it (projection does), but in_domain reports it.
    """

    rho: tuple[float, ...]
    eta: tuple[float, ...]
    time: float = 0.0

    def __post_init__(self):
        rho = tuple(float(x) for x in self.rho)
        eta = tuple(float(x) for x in self.eta)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "time", float(self.time))
        if len(rho) == 0 or len(rho) != len(eta):
            raise InvalidParameterError(
                f"need matching non-empty mean/variance tuples, got lengths "
                f"{len(rho)} and {len(eta)}")
        if not all(math.isfinite(x) for x in rho + eta) or not math.isfinite(self.time):
            raise InvalidParameterError("moment state entries must be finite")

    @classmethod
    def zero(cls, num_stages: int, time: float = 0.0) -> "MomentState":
        return cls(rho=(0.0,) * num_stages, eta=(0.0,) * num_stages, time=time)

    @property
    def num_stages(self) -> int:
        return len(self.rho)

    @property
    def in_domain(self) -> bool:
        return all(0.0 <= r <= e for r, e in zip(self.rho, self.eta))


@dataclass(frozen=True)
class IntegratorSettings:
    """Adaptive Euler controls: accept a step when the step-doubling
    error estimate is below atol + rtol * scale componentwise."""

    atol: float = 1e-8
    rtol: float = 1e-6
    initial_step: float = 1e-3
    min_step: float = 1e-12
    max_step: float = 0.5
    safety: float = 0.9
    min_factor: float = 0.2
    max_factor: float = 5.0
    project: bool = True

    def __post_init__(self):
        if not (self.atol > 0.0 and self.rtol > 0.0):
            raise InvalidParameterError("tolerances must be positive")
        if not (0.0 < self.min_step <= self.max_step):
            raise InvalidParameterError("need 0 < min_step <= max_step")
        if not (self.min_step <= self.initial_step <= self.max_step):
            raise InvalidParameterError(
                "initial_step must lie between min_step and max_step")
        if not (0.0 < self.safety <= 1.0):
            raise InvalidParameterError("safety must be in (0, 1]")
        if not (0.0 < self.min_factor < 1.0 < self.max_factor):
            raise InvalidParameterError(
                "need 0 < min_factor < 1 < max_factor")


def _check_state(state: MomentState, config: ModelConfig) -> None:
    if state.num_stages != config.num_stages:
        raise InvalidParameterError(
            f"state has {state.num_stages} stages, model has {config.num_stages}")
    for r, e in zip(state.rho, state.eta):
        _check_domain(r, e)


def closure_rhs(state: MomentState, config: ModelConfig, t: float) -> MomentState:
    """Time derivative (d rho / dt, d eta / dt) of the closed system.

    Stage 1 exchanges with the input schedule; stage k >= 2 receives the
    drain of stage k-1.  The returned MomentState holds derivatives (its
    own domain flag is meaningless).
    """
    _check_state(state, config)
    sig = config.thresholds_array()
    c = config.max_rate
    c0 = input_rate_at(config.input, t)
    n = state.num_stages
    drho = [0.0] * n
    deta = [0.0] * n
    f_prev = 0.0
    a_prev = 0.0
    for k in range(n):
        s = int(sig[k])
        F = 0.0
        W = 0.0
        rho_k = state.rho[k]
        eta_k = state.eta[k]
        for i in range(s):
            p = nb_pmf(i, rho_k, eta_k)
            F += (s - i) * p
            W += (2.0 * rho_k + 1.0 - 2.0 * i) * (s - i) * p
        a = c / s
        if k == 0:
            drho[0] = c0 - c + a * F
            deta[0] = c0 + c - a * W
        else:
            drho[k] = a * F - a_prev * f_prev
            deta[k] = 2.0 * c - a_prev * f_prev - a * W
        f_prev = F
        a_prev = a
    return MomentState(rho=tuple(drho), eta=tuple(deta), time=t)


def project_D(state: MomentState) -> MomentState:
    """Per-stage Euclidean projection onto the wedge 0 <= rho <= eta.

    Idempotent and non-expansive; the identity on the domain.
    """
    rho = list(state.rho)
    eta = list(state.eta)
    for k in range(len(rho)):
        r = rho[k] if rho[k] > 0.0 else 0.0
        e = eta[k]
        if r > e:
            m = 0.5 * (r + e)
            if m < 0.0:
                m = 0.0
            r = m
            e = m
        rho[k] = r
        eta[k] = e
    return MomentState(rho=tuple(rho), eta=tuple(eta), time=state.time)


def _run_integrator(rho0: np.ndarray, eta0: np.ndarray, config: ModelConfig,
                    horizon: float, sample_times, settings: IntegratorSettings,
                    mode: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    times = _check_sample_times(sample_times)
    if not (isinstance(horizon, (int, float)) and math.isfinite(horizon) and horizon > 0):
        raise InvalidParameterError(f"horizon must be finite and positive, got {horizon!r}")
    if times[-1] > horizon:
        raise InvalidParameterError(
            f"sample times extend to {times[-1]}, beyond the horizon {horizon}")
    kind, seg_t, seg_v, off, amp, om = _encode_schedule(config.input)
    tt = times.size
    n = rho0.size
    out_rho = np.empty((tt, n), dtype=np.float64)
    out_eta = np.empty((tt, n), dtype=np.float64)
    diag = np.zeros(2, dtype=np.float64)
    status = _ck.integrate_k(
        rho0, eta0, config.thresholds_array(), config.max_rate,
        kind, seg_t, seg_v, off, amp, om,
        times, settings.atol, settings.rtol, settings.initial_step,
        settings.min_step, settings.max_step, settings.safety,
        settings.min_factor, settings.max_factor, settings.project, mode,
        out_rho, out_eta, diag)
    if status == 1:
        raise IntegrationFailureError(
            f"step size underflowed to {diag[1]:.3e} (below min_step "
            f"{settings.min_step:.3e}) at t = {diag[0]:.6g}")
    if status == 2:
        raise IntegrationFailureError(
            f"step budget exhausted at t = {diag[0]:.6g} (step {diag[1]:.3e}); "
            f"the system may be too stiff for the explicit integrator")
    return times, out_rho, out_eta


def integrate(initial: MomentState, config: ModelConfig, horizon: float,
              sample_times, settings: IntegratorSettings | None = None,
              ) -> list[MomentState]:
    """Integrate the closed system from t = 0 and report at sample_times.

    Adaptive explicit Euler with step-doubling error control; the state
    is projected onto the moment domain after every accepted step, and
    sampled values are linear interpolants of accepted states (then
    projected), so every emitted state lies in the domain exactly.
    """
    settings = settings or IntegratorSettings()
    _check_state(initial, config)
    if not initial.in_domain:
        raise ClosureDomainError("initial state must satisfy 0 <= rho <= eta")
    rho0 = np.array(initial.rho, dtype=np.float64)
    eta0 = np.array(initial.eta, dtype=np.float64)
    times, out_rho, out_eta = _run_integrator(
        rho0, eta0, config, horizon, sample_times, settings, mode=0)
    return [MomentState(rho=tuple(out_rho[i]), eta=tuple(out_eta[i]),
                        time=float(times[i]))
            for i in range(times.size)]


def mean_field_rhs(means, config: ModelConfig, t: float) -> np.ndarray:
    """Naive baseline: throttle evaluated at the mean, no variance."""
    rho = np.asarray(means, dtype=np.float64)
    if rho.ndim != 1 or rho.size != config.num_stages:
        raise InvalidParameterError(
            f"means must be a length-{config.num_stages} vector")
    sig = config.thresholds_array()
    c = config.max_rate
    c0 = input_rate_at(config.input, t)
    drho = np.empty_like(rho)
    flow_in = c0
    for k in range(rho.size):
        flow_out = c * throttle(rho[k], int(sig[k]))
        drho[k] = flow_in - flow_out
        flow_in = flow_out
    return drho


def integrate_mean_field(initial_means, config: ModelConfig, horizon: float,
                         sample_times,
                         settings: IntegratorSettings | None = None) -> np.ndarray:
    """Integrate the means-only baseline; returns means with shape
    (num samples, num stages)."""
    settings = settings or IntegratorSettings()
    rho0 = np.asarray(initial_means, dtype=np.float64)
    if rho0.ndim != 1 or rho0.size != config.num_stages:
        raise InvalidParameterError(
            f"initial means must be a length-{config.num_stages} vector")
    if not np.all(np.isfinite(rho0)) or np.any(rho0 < 0.0):
        raise ClosureDomainError("initial means must be finite and >= 0")
    eta0 = np.zeros_like(rho0)
    _, out_rho, _ = _run_integrator(
        rho0.copy(), eta0, config, horizon, sample_times, settings, mode=1)
    return out_rho


def write_trajectory_csv(path, sample_times, means, variances, source: str) -> None:
    """CSV in the ensemble-statistics schema (time,stage,mean,variance,
    stderr,trials,source); stderr and trials stay empty for ODE output,
    and variance too when variances is None (means-only baseline)."""
    times = np.asarray(sample_times, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "stage", "mean", "variance", "stderr", "trials", "source"])
        for j in range(times.size):
            for k in range(means.shape[1]):
                var = "" if variances is None else fmt_float(variances[j][k])
                w.writerow([fmt_float(times[j]), k + 1, fmt_float(means[j, k]),
                            var, "", "", source])
