"""Monte Carlo engines for the tandem-stage lattice chain.

Two sampling schemes over the same continuous-time law:

* `ExactSSA` draws event times from the exponential clock of the total
  rate and is exact in distribution.  Piecewise-constant input is handled
  by restarting the clock at each breakpoint (valid by memorylessness);
  the sinusoid is handled by thinning against its supremum.
* `FixedStep` discretizes time into steps of length dt and fires each
  channel independently with probability rate*dt per step, rates frozen
  at the step start.  Simultaneous fires within a step are applied in
  descending channel order (last stage first, input last) so a token
  cannot traverse two stages in one step.

`step_exact` is the readable single-event reference; the numba kernel in
`_kernels` consumes an identical draw sequence, which the tests pin.
Ensemble moments are reduced over exact integer counts, so results are
independent of chunking and thread count for a given seed.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidParameterError, InvalidStepSizeError, LogicError
from .model import (
    Constant,
    InputSchedule,
    ModelConfig,
    PiecewiseConstant,
    Sinusoid,
    input_rate_at,
    transfer_rate,
)
from .rng import RngStream

__all__ = [
    "LatticeState",
    "ExactSSA",
    "FixedStep",
    "SimScheme",
    "EnsembleStats",
    "apply_move",
    "channel_rates",
    "step_exact",
    "step_fixed",
    "sample_trial",
    "run_ensemble",
    "fmt_float",
]


@dataclass(frozen=True)
class LatticeState:
    """Counts per stage at a point in time."""

    counts: tuple[int, ...]
    time: float = 0.0

    def __post_init__(self):
        if len(self.counts) == 0:
            raise InvalidParameterError("state needs at least one stage")
        cleaned = []
        for x in self.counts:
            if isinstance(x, bool) or x != int(x):
                raise InvalidParameterError(f"counts must be integers, got {x!r}")
            if x < 0:
                raise InvalidParameterError(f"counts must be nonnegative, got {x}")
            cleaned.append(int(x))
        object.__setattr__(self, "counts", tuple(cleaned))
        if not math.isfinite(self.time):
            raise InvalidParameterError(f"time must be finite, got {self.time}")

    @classmethod
    def empty(cls, num_stages: int, time: float = 0.0) -> "LatticeState":
        return cls(counts=(0,) * num_stages, time=time)

    @property
    def num_stages(self) -> int:
        return len(self.counts)

    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class ExactSSA:
    """Event-driven exact sampling scheme."""


@dataclass(frozen=True)
class FixedStep:
    """Per-step Bernoulli scheme with step length dt."""

    dt: float

    def __post_init__(self):
        if not (isinstance(self.dt, (int, float)) and not isinstance(self.dt, bool)):
            raise InvalidParameterError(f"dt must be a number, got {self.dt!r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidParameterError(f"dt must be finite and positive, got {self.dt}")
        object.__setattr__(self, "dt", float(self.dt))


SimScheme = ExactSSA | FixedStep


def apply_move(state: LatticeState, channel: int) -> LatticeState:
    """Apply one firing of a channel: 0 injects into stage 1, channel k
    moves a token out of stage k (into k+1, or out of the system for the
    last stage).  Time is unchanged; the caller owns the clock."""
    n = state.num_stages
    if isinstance(channel, bool) or not isinstance(channel, (int, np.integer)):
        raise InvalidParameterError(f"channel must be an integer, got {channel!r}")
    if not 0 <= channel <= n:
        raise InvalidParameterError(f"channel must be in 0..{n}, got {channel}")
    counts = list(state.counts)
    if channel == 0:
        counts[0] += 1
    else:
        if counts[channel - 1] <= 0:
            raise LogicError(f"channel {channel} fired with empty stage {channel}")
        counts[channel - 1] -= 1
        if channel < n:
            counts[channel] += 1
    return LatticeState(counts=tuple(counts), time=state.time)


def channel_rates(state: LatticeState, config: ModelConfig) -> np.ndarray:
    """Instantaneous rate of each channel, index 0 = input, k = stage k."""
    if state.num_stages != config.num_stages:
        raise InvalidParameterError(
            f"state has {state.num_stages} stages, config has {config.num_stages}")
    sigma = config.thresholds_array()
    rates = np.empty(config.num_stages + 1, dtype=np.float64)
    rates[0] = input_rate_at(config.input, state.time)
    for i in range(config.num_stages):
        rates[i + 1] = transfer_rate(state.counts[i], int(sigma[i]), config.max_rate)
    return rates


def _segment_end(schedule: InputSchedule, t: float) -> float:
    if isinstance(schedule, PiecewiseConstant):
        for bp in schedule.breakpoints():
            if bp > t:
                return bp
    return math.inf


def step_exact(state: LatticeState, config: ModelConfig, rng: RngStream,
               horizon: float = math.inf) -> tuple[LatticeState, int | None]:
    """Advance to the next firing at or before the horizon.

    Returns (new state, fired channel).  If no event lands by the horizon
    the state is returned with its clock moved there and channel None.
    Matches the draw sequence of the compiled trial kernel exactly: one
    uniform for the waiting time, one for channel selection, with draws
    discarded at schedule breakpoints and sinusoid phantoms.
    """
    if state.num_stages != config.num_stages:
        raise InvalidParameterError(
            f"state has {state.num_stages} stages, config has {config.num_stages}")
    schedule = config.input
    sigma = config.thresholds_array()
    c = config.max_rate
    n = config.num_stages
    counts = list(state.counts)
    t = state.time
    sinusoid = isinstance(schedule, Sinusoid)
    while True:
        if sinusoid:
            b = schedule.upper_bound()
            t_seg_end = math.inf
        else:
            b = input_rate_at(schedule, t)
            t_seg_end = _segment_end(schedule, t)
        lam = b
        for i in range(n):
            ci = counts[i]
            if ci > 0:
                if ci < sigma[i]:
                    lam += c * ci / sigma[i]
                else:
                    lam += c
        if lam == 0.0:
            if t_seg_end < horizon:
                t = t_seg_end
                continue
            return LatticeState(counts=tuple(counts), time=horizon), None
        u = rng.next_unit()
        t_cand = t + (-math.log1p(-u) / lam)
        if t_cand >= t_seg_end and t_seg_end <= horizon:
            t = t_seg_end
            continue
        if t_cand > horizon:
            return LatticeState(counts=tuple(counts), time=horizon), None
        t = t_cand
        x = rng.next_unit() * lam
        if x < b:
            if sinusoid and x >= input_rate_at(schedule, t):
                continue  # phantom event of the thinning bound
            counts[0] += 1
            return LatticeState(counts=tuple(counts), time=t), 0
        acc = b
        fired = -1
        for i in range(n):
            ci = counts[i]
            if ci > 0:
                if ci < sigma[i]:
                    acc += c * ci / sigma[i]
                else:
                    acc += c
                if x < acc:
                    fired = i
                    break
        if fired < 0:
            for i in range(n - 1, -1, -1):
                if counts[i] > 0:
                    fired = i
                    break
        if fired < 0:
            counts[0] += 1
            return LatticeState(counts=tuple(counts), time=t), 0
        counts[fired] -= 1
        if fired < n - 1:
            counts[fired + 1] += 1
        return LatticeState(counts=tuple(counts), time=t), fired + 1


def step_fixed(state: LatticeState, config: ModelConfig, dt: float,
               rng: RngStream) -> LatticeState:
    """Advance one fixed step: each channel fires independently with
    probability rate*dt (rates at the step start), fires applied in
    descending channel order.  Draws one uniform per channel with a
    positive rate, in ascending channel order."""
    if not (math.isfinite(dt) and dt > 0):
        raise InvalidParameterError(f"dt must be finite and positive, got {dt}")
    if dt * (config.num_stages + 1) * config.max_rate > 1.0:
        warnings.warn(
            f"dt={dt} exceeds 1/((N+1)c); several channels may fire per step",
            stacklevel=2)
    rates = channel_rates(state, config)
    probs = rates * dt
    if np.any(probs > 1.0):
        raise InvalidStepSizeError(
            f"step dt={dt} gives a fire probability above 1 "
            f"(max rate {rates.max()}); reduce dt")
    fired = []
    for ch in range(len(probs)):
        if probs[ch] > 0.0 and rng.next_unit() < probs[ch]:
            fired.append(ch)
    new_state = LatticeState(counts=state.counts, time=state.time)
    for ch in reversed(fired):
        new_state = apply_move(new_state, ch)
    return LatticeState(counts=new_state.counts, time=state.time + dt)


def sample_trial(config: ModelConfig, sample_times, seed: int,
                 stream: int = 0) -> np.ndarray:
    """Pure-Python reference trial of the exact scheme from the empty
    lattice.  Returns int64 counts of shape (len(sample_times), stages),
    where row j holds the state right after the last event at or before
    sample_times[j].  Slow; exists as the oracle for the compiled kernel.
    """
    times = _check_sample_times(sample_times)
    n = config.num_stages
    out = np.zeros((len(times), n), dtype=np.int64)
    rng = RngStream(seed, stream)
    state = LatticeState.empty(n)
    horizon = float(times[-1])
    sp = 0
    tt = len(times)
    while sp < tt:
        new_state, channel = step_exact(state, config, rng, horizon=horizon)
        if channel is None:
            for j in range(sp, tt):
                out[j] = state.counts
            break
        while sp < tt and times[sp] < new_state.time:
            out[sp] = state.counts
            sp += 1
        state = new_state
    return out


@dataclass(frozen=True)
class EnsembleStats:
    """Per-stage moments across trials at each sample time.

    mean and variance have shape (times, stages); variance is the
    unbiased (divisor M-1) estimator.  Computed from exact integer sums,
    so identical trials give identical floats regardless of chunking or
    thread count.
    """

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    trials: int
    source: str

    def __post_init__(self):
        for name in ("times", "mean", "variance"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def num_stages(self) -> int:
        return self.mean.shape[1]

    @property
    def stderr(self) -> np.ndarray:
        """Standard error of the mean, sqrt(variance / trials)."""
        return np.sqrt(self.variance / self.trials)

    def write_csv(self, path) -> None:
        write_stats_csv(path, [self])


def fmt_float(x) -> str:
    """Shortest round-trip decimal form, used by every CSV writer so
    output bytes are reproducible."""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_stats_csv(path, stats_list) -> None:
    """CSV schema: time,stage,mean,variance,stderr,trials,source with
    rows in time-major order, stages numbered from 1."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "stage", "mean", "variance", "stderr", "trials", "source"])
        for st in stats_list:
            err = st.stderr
            for j in range(len(st.times)):
                for k in range(st.num_stages):
                    w.writerow([
                        fmt_float(st.times[j]),
                        k + 1,
                        fmt_float(st.mean[j, k]),
                        fmt_float(st.variance[j, k]),
                        fmt_float(err[j, k]),
                        st.trials,
                        st.source,
                    ])


def _check_sample_times(sample_times) -> np.ndarray:
    times = np.asarray(sample_times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise InvalidParameterError("sample_times must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(times)):
        raise InvalidParameterError("sample_times must be finite")
    if times[0] < 0:
        raise InvalidParameterError("sample_times must be nonnegative")
    if np.any(np.diff(times) <= 0):
        raise InvalidParameterError("sample_times must be strictly increasing")
    return times


def _encode_schedule(schedule: InputSchedule):
    """(kind, seg_t, seg_v, off, amp, om) in the kernels' encoding."""
    if isinstance(schedule, Constant):
        return 0, np.array([0.0]), np.array([float(schedule.value)]), 0.0, 0.0, 0.0
    if isinstance(schedule, PiecewiseConstant):
        seg_t = np.array([float(t) for t, _ in schedule.points])
        seg_v = np.array([float(v) for _, v in schedule.points])
        return 0, seg_t, seg_v, 0.0, 0.0, 0.0
    if isinstance(schedule, Sinusoid):
        return (1, np.array([0.0]), np.array([0.0]),
                float(schedule.offset), float(schedule.amplitude), float(schedule.omega))
    raise InvalidParameterError(f"unknown input schedule {schedule!r}")


def _input_sup(schedule: InputSchedule) -> float:
    if isinstance(schedule, Constant):
        return float(schedule.value)
    if isinstance(schedule, PiecewiseConstant):
        return max(float(v) for _, v in schedule.points)
    return schedule.upper_bound()


def _grid_index(s: float, dt: float) -> int:
    """Largest step count m with m*dt at or before s, up to a 1e-9
    relative tolerance that absorbs decimal-float rounding in s/dt."""
    tol = 1e-9 * max(1.0, abs(s))
    m = int(math.floor(s / dt))
    while (m + 1) * dt <= s + tol:
        m += 1
    while m > 0 and m * dt > s + tol:
        m -= 1
    return max(m, 0)


def _grid_start(tb: float, dt: float) -> int:
    """Smallest step count m with m*dt at or after tb (same tolerance)."""
    tol = 1e-9 * max(1.0, abs(tb))
    m = int(math.floor(tb / dt))
    while m * dt < tb - tol:
        m += 1
    while m > 0 and (m - 1) * dt >= tb - tol:
        m -= 1
    return max(m, 0)


def run_ensemble(config: ModelConfig, scheme: SimScheme, horizon: float,
                 sample_times, trials: int, seed: int, *,
                 keep_counts: bool = False, source: str | None = None,
                 _chunk: int | None = None):
    """Run independent trials from the empty lattice and reduce moments.

    Trial j draws from stream j of the seed, so the result set is a pure
    function of (config, scheme, sample_times, trials, seed); chunking
    and thread count never change it.  Returns EnsembleStats, or
    (EnsembleStats, counts[trials, times, stages]) when keep_counts is
    set.  Nothing is observed past the last sample time, so trials stop
    there even when the horizon is later.
    """
    if isinstance(trials, bool) or trials != int(trials) or trials < 2:
        raise InvalidParameterError(
            f"trials must be an integer >= 2 for unbiased variance, got {trials!r}")
    trials = int(trials)
    times = _check_sample_times(sample_times)
    if not (isinstance(horizon, (int, float)) and math.isfinite(horizon)):
        raise InvalidParameterError(f"horizon must be a finite number, got {horizon!r}")
    if horizon < times[-1]:
        raise InvalidParameterError(
            f"horizon {horizon} is before the last sample time {times[-1]}")
    n = config.num_stages
    tt = len(times)
    sigma = config.thresholds_array()
    c = float(config.max_rate)
    kind, seg_t, seg_v, s_off, s_amp, s_om = _encode_schedule(config.input)

    if keep_counts and trials * tt * n > 50_000_000:
        raise InvalidParameterError(
            "keep_counts would allocate more than 5e7 counts; reduce the "
            "trial count or sample grid")

    if isinstance(scheme, FixedStep):
        dt = scheme.dt
        top = max(c, _input_sup(config.input))
        if top * dt > 1.0:
            raise InvalidStepSizeError(
                f"dt={dt} gives fire probability {top * dt} > 1; "
                f"need dt <= {1.0 / top}")
        if top * dt > 0.1:
            warnings.warn(
                f"dt={dt} gives per-step fire probabilities up to {top * dt}; "
                f"discretization bias may be noticeable", stacklevel=2)
        sample_m = np.array([_grid_index(s, dt) for s in times], dtype=np.int64)
        if kind == 0:
            seg_m = np.array([_grid_start(t, dt) for t in seg_t], dtype=np.int64)
            keep = [0]
            for i in range(1, len(seg_m)):
                if seg_m[i] == seg_m[keep[-1]]:
                    keep[-1] = i  # same step: later breakpoint wins
                else:
                    keep.append(i)
            seg_m = seg_m[keep]
            seg_v = seg_v[keep]
        else:
            seg_m = np.array([0], dtype=np.int64)
        run_chunk = lambda off, cnt, out, st: _kernels.ensemble_fixed(
            np.uint64(seed), off, cnt, sigma, c, dt, kind, seg_m, seg_v,
            s_off, s_amp, s_om, sample_m, out, st)
        default_source = "mc-fixed"
    elif isinstance(scheme, ExactSSA):
        run_chunk = lambda off, cnt, out, st: _kernels.ensemble_exact(
            np.uint64(seed), off, cnt, sigma, c, kind, seg_t, seg_v,
            s_off, s_amp, s_om, times, out, st)
        default_source = "mc-exact"
    else:
        raise InvalidParameterError(f"unknown scheme {scheme!r}")

    if _chunk is not None:
        chunk = int(_chunk)
    else:
        chunk_cap = int(2_000_000 // max(1, tt * n))
        chunk = max(1, min(trials, 4096, chunk_cap))
    sum_counts = np.zeros((tt, n), dtype=np.int64)
    sum_squares = np.zeros((tt, n), dtype=np.int64)
    all_counts = np.empty((trials, tt, n), dtype=np.int64) if keep_counts else None
    slab = None
    off = 0
    while off < trials:
        cnt = min(chunk, trials - off)
        if keep_counts:
            out = all_counts[off:off + cnt]
        else:
            if slab is None or slab.shape[0] != cnt:
                slab = np.empty((cnt, tt, n), dtype=np.int64)
            out = slab
        status = np.zeros(cnt, dtype=np.int8)
        run_chunk(off, cnt, out, status)
        if np.any(status != 0):
            raise LogicError("trial kernel count conservation check failed")
        sum_counts += out.sum(axis=0, dtype=np.int64)
        sum_squares += (out * out).sum(axis=0, dtype=np.int64)
        off += cnt

    mean = np.empty((tt, n), dtype=np.float64)
    variance = np.empty((tt, n), dtype=np.float64)
    for j in range(tt):
        for k in range(n):
            s = int(sum_counts[j, k])
            mean[j, k] = s / trials
            num = trials * int(sum_squares[j, k]) - s * s
            variance[j, k] = num / (trials * (trials - 1))
    stats = EnsembleStats(times=times.copy(), mean=mean, variance=variance,
                          trials=trials,
                          source=source if source is not None else default_source)
    if keep_counts:
        return stats, all_counts
    return stats
