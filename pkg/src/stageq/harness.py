"""Experiment orchestration: run several engines on one scenario and compare.

A Scenario bundles a model configuration with run parameters and a list of
engines.  Engines compute per-stage means (and mostly variances) at the
sample times by independent routes:

    mc-exact    exact event-driven Monte Carlo ensemble
    mc-fixed    fixed-step Monte Carlo ensemble (needs a FixedStep scheme)
    oracle      truncated-generator matrix-exponential transient law
    ode-nb      negative-binomial moment closure ODEs
    ode-mf      means-only mean-field baseline
    stationary  exact stationary law (time-independent; constant input only)

run_scenario executes the selected engines from the empty initial state,
joins their outputs on (time, stage), computes stage-profile comparison
metrics and front positions, and optionally writes CSV artifacts.  Engine
precondition failures are recorded per engine and do not abort the rest.
All CSV output goes through one float formatter, so identical scenarios
produce byte-identical files regardless of worker count.
"""

from __future__ import annotations

import csv
import logging
import math
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from .closure import (IntegratorSettings, MomentState, integrate,
                      integrate_mean_field)
from .errors import InvalidParameterError, PreconditionError
from .model import ModelConfig
from .oracle import transient_oracle
from .simulate import (ExactSSA, FixedStep, SimScheme, _check_sample_times,
                       fmt_float, run_ensemble)
from .stationary import StationaryLaw, product_stationary_pmf, stationary_moment

__all__ = [
    "ENGINES",
    "Scenario",
    "EngineResult",
    "MetricRow",
    "ComparisonReport",
    "run_scenario",
    "front_position",
    "emit_plot_data",
    "write_engine_csv",
    "write_stationary_csvs",
    "write_summary_csv",
]

log = logging.getLogger("stageq.harness")

# canonical order: references first, then approximations
ENGINES = ("mc-exact", "mc-fixed", "oracle", "ode-nb", "ode-mf", "stationary")

STATS_HEADER = ["time", "stage", "mean", "variance", "stderr", "trials", "source"]


@dataclass(frozen=True)
class Scenario:
    """One experiment: a model plus run parameters and selected engines."""

    config: ModelConfig
    horizon: float
    sample_times: tuple[float, ...]
    engines: tuple[str, ...] = ("mc-exact", "ode-nb")
    scheme: SimScheme = ExactSSA()
    trials: int = 10_000
    seed: int = 0
    front_threshold: float = 0.5
    oracle_cap: int | None = None
    ode_settings: IntegratorSettings = field(default_factory=IntegratorSettings)

    def __post_init__(self):
        if not isinstance(self.config, ModelConfig):
            raise InvalidParameterError(f"config must be a ModelConfig, got {self.config!r}")
        times = _check_sample_times(self.sample_times)
        object.__setattr__(self, "sample_times", tuple(float(t) for t in times))
        if not (isinstance(self.horizon, (int, float)) and math.isfinite(self.horizon)):
            raise InvalidParameterError(f"horizon must be finite, got {self.horizon!r}")
        object.__setattr__(self, "horizon", float(self.horizon))
        if self.horizon < self.sample_times[-1]:
            raise InvalidParameterError(
                f"horizon {self.horizon} is before the last sample time "
                f"{self.sample_times[-1]}")
        if isinstance(self.engines, str):
            raise InvalidParameterError("engines must be a sequence of names, not a string")
        requested = tuple(self.engines)
        if not requested:
            raise InvalidParameterError("at least one engine must be selected")
        unknown = [e for e in requested if e not in ENGINES]
        if unknown:
            raise InvalidParameterError(
                f"unknown engines {unknown}; valid: {', '.join(ENGINES)}")
        # canonical order, duplicates dropped
        object.__setattr__(
            self, "engines", tuple(e for e in ENGINES if e in requested))
        if not isinstance(self.scheme, (ExactSSA, FixedStep)):
            raise InvalidParameterError(f"unsupported scheme {self.scheme!r}")
        if isinstance(self.trials, bool) or self.trials != int(self.trials):
            raise InvalidParameterError(f"trials must be an integer, got {self.trials!r}")
        object.__setattr__(self, "trials", int(self.trials))
        if isinstance(self.seed, bool) or self.seed != int(self.seed) or self.seed < 0:
            raise InvalidParameterError(f"seed must be a non-negative integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))
        if not (isinstance(self.front_threshold, (int, float))
                and math.isfinite(self.front_threshold) and self.front_threshold > 0):
            raise InvalidParameterError(
                f"front_threshold must be finite and > 0, got {self.front_threshold!r}")
        object.__setattr__(self, "front_threshold", float(self.front_threshold))
        if self.oracle_cap is not None:
            if (isinstance(self.oracle_cap, bool)
                    or self.oracle_cap != int(self.oracle_cap) or self.oracle_cap < 1):
                raise InvalidParameterError(
                    f"oracle_cap must be an integer >= 1, got {self.oracle_cap!r}")
            object.__setattr__(self, "oracle_cap", int(self.oracle_cap))
        if not isinstance(self.ode_settings, IntegratorSettings):
            raise InvalidParameterError("ode_settings must be an IntegratorSettings")


@dataclass(frozen=True)
class EngineResult:
    """Stage profiles produced by one engine.

    Time-resolved engines fill times with the scenario sample times and
    mean (and optionally variance/stderr) with (times, stages) arrays.
    The stationary engine has times=() and (stages,) profiles plus the
    per-stage laws.
    """

    engine: str
    times: tuple[float, ...]
    mean: np.ndarray
    variance: np.ndarray | None
    stderr: np.ndarray | None
    trials: int | None
    wall_seconds: float
    laws: tuple[StationaryLaw, ...] | None = None

    def __post_init__(self):
        self.mean.setflags(write=False)
        for arr in (self.variance, self.stderr):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def time_resolved(self) -> bool:
        return len(self.times) > 0

    @property
    def num_stages(self) -> int:
        return self.mean.shape[-1]


@dataclass(frozen=True)
class MetricRow:
    """One row of the comparison summary."""

    time: float
    metric: str
    engine_a: str
    engine_b: str
    value: float


@dataclass(frozen=True)
class ComparisonReport:
    scenario: Scenario
    results: dict[str, EngineResult]
    errors: dict[str, str]
    metrics: tuple[MetricRow, ...]


def front_position(profile, threshold: float) -> int:
    """Largest 1-based stage index whose mean reaches the threshold; 0 if none.

    The leading front of a profile that decays toward later stages.
    """
    arr = np.asarray(profile, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidParameterError("profile must be a non-empty 1-d sequence")
    if not (isinstance(threshold, (int, float)) and math.isfinite(threshold)
            and threshold > 0):
        raise InvalidParameterError(f"threshold must be finite and > 0, got {threshold!r}")
    hits = np.nonzero(arr >= threshold)[0]
    return int(hits[-1]) + 1 if hits.size else 0


def _run_mc(scenario: Scenario, engine: str) -> EngineResult:
    if scenario.trials < 2:
        raise PreconditionError(
            f"{engine} needs trials >= 2, got {scenario.trials}")
    if engine == "mc-fixed":
        if not isinstance(scenario.scheme, FixedStep):
            raise PreconditionError(
                "mc-fixed needs a fixed:<dt> scheme in the scenario")
        scheme: SimScheme = scenario.scheme
    else:
        scheme = ExactSSA()
    stats = run_ensemble(scenario.config, scheme, scenario.horizon,
                         scenario.sample_times, scenario.trials,
                         scenario.seed, source=engine)
    return EngineResult(engine=engine, times=scenario.sample_times,
                        mean=np.array(stats.mean),
                        variance=np.array(stats.variance),
                        stderr=np.array(stats.stderr),
                        trials=stats.trials, wall_seconds=0.0)


def _run_oracle(scenario: Scenario) -> EngineResult:
    if scenario.oracle_cap is None:
        raise PreconditionError(
            "oracle engine needs an explicit per-stage occupancy cap "
            "(oracle_cap)")
    n = scenario.config.num_stages
    tt = len(scenario.sample_times)
    mean = np.empty((tt, n))
    var = np.empty((tt, n))
    for j, t in enumerate(scenario.sample_times):
        dist = transient_oracle(scenario.config, scenario.oracle_cap, t)
        for k in range(n):
            mean[j, k] = dist.marginal_mean(k + 1)
            var[j, k] = dist.marginal_variance(k + 1)
    return EngineResult(engine="oracle", times=scenario.sample_times,
                        mean=mean, variance=var, stderr=None, trials=None,
                        wall_seconds=0.0)


def _run_ode_nb(scenario: Scenario) -> EngineResult:
    n = scenario.config.num_stages
    traj = integrate(MomentState.zero(n), scenario.config, scenario.horizon,
                     scenario.sample_times, scenario.ode_settings)
    mean = np.array([st.rho for st in traj])
    var = np.array([st.eta for st in traj])
    return EngineResult(engine="ode-nb", times=scenario.sample_times,
                        mean=mean, variance=var, stderr=None, trials=None,
                        wall_seconds=0.0)


def _run_ode_mf(scenario: Scenario) -> EngineResult:
    n = scenario.config.num_stages
    mean = integrate_mean_field(np.zeros(n), scenario.config, scenario.horizon,
                                scenario.sample_times, scenario.ode_settings)
    return EngineResult(engine="ode-mf", times=scenario.sample_times,
                        mean=np.array(mean), variance=None, stderr=None,
                        trials=None, wall_seconds=0.0)


def _run_stationary(scenario: Scenario) -> EngineResult:
    laws = product_stationary_pmf(scenario.config)
    mean = np.array([stationary_moment(law, 1) for law in laws])
    second = np.array([stationary_moment(law, 2) for law in laws])
    return EngineResult(engine="stationary", times=(), mean=mean,
                        variance=second - mean ** 2, stderr=None, trials=None,
                        wall_seconds=0.0, laws=tuple(laws))


_ENGINE_RUNNERS = {
    "mc-exact": lambda sc: _run_mc(sc, "mc-exact"),
    "mc-fixed": lambda sc: _run_mc(sc, "mc-fixed"),
    "oracle": _run_oracle,
    "ode-nb": _run_ode_nb,
    "ode-mf": _run_ode_mf,
    "stationary": _run_stationary,
}


def _profile_metrics(scenario: Scenario, results: dict[str, EngineResult]
                     ) -> list[MetricRow]:
    """Pairwise stage-profile errors plus per-engine front positions."""
    rows: list[MetricRow] = []
    resolved = [e for e in ENGINES if e in results and results[e].time_resolved]
    for j, t in enumerate(scenario.sample_times):
        for ia, a in enumerate(resolved):
            for b in resolved[ia + 1:]:
                ra, rb = results[a], results[b]
                diff = np.abs(ra.mean[j] - rb.mean[j])
                l1 = float(diff.sum())
                rows.append(MetricRow(t, "l1_mean", a, b, l1))
                rows.append(MetricRow(t, "linf_mean", a, b, float(diff.max())))
                total = float(ra.mean[j].sum())
                if total > 0.0:
                    rows.append(MetricRow(t, "l1_mean_normalized", a, b, l1 / total))
                if ra.variance is not None and rb.variance is not None:
                    dv = np.abs(ra.variance[j] - rb.variance[j])
                    rows.append(MetricRow(t, "l1_variance", a, b, float(dv.sum())))
                    rows.append(MetricRow(t, "linf_variance", a, b, float(dv.max())))
        for e in resolved:
            rows.append(MetricRow(t, "front_position", e, "",
                                  float(front_position(results[e].mean[j],
                                                       scenario.front_threshold))))
    return rows


def run_scenario(scenario: Scenario, out_dir=None) -> ComparisonReport:
    """Run every selected engine from the empty initial state and compare.

    Engine precondition violations are recorded in the report's errors
    map instead of aborting the remaining engines.  When out_dir is given,
    writes one stats CSV per time-resolved engine, the stationary CSVs if
    that engine ran, and summary.csv with the comparison metrics.
    Wall-clock per engine goes to the log, never into the CSVs.
    """
    results: dict[str, EngineResult] = {}
    errors: dict[str, str] = {}
    for engine in scenario.engines:
        begin = _time.perf_counter()
        try:
            res = _ENGINE_RUNNERS[engine](scenario)
        except PreconditionError as exc:
            errors[engine] = str(exc)
            log.warning("engine %s skipped: %s", engine, exc)
            continue
        wall = _time.perf_counter() - begin
        results[engine] = replace(res, wall_seconds=wall)
        log.info("engine %s finished in %.3fs", engine, wall)

    metrics = tuple(_profile_metrics(scenario, results))
    report = ComparisonReport(scenario=scenario, results=results,
                              errors=errors, metrics=metrics)
    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        for engine, res in results.items():
            if res.time_resolved:
                write_engine_csv(os.path.join(out_dir, f"{engine}.csv"), res)
            else:
                write_stationary_csvs(out_dir, res)
        write_summary_csv(os.path.join(out_dir, "summary.csv"), report)
    return report


def write_engine_csv(path, res: EngineResult) -> None:
    """Stats schema shared with the simulation and closure writers."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for j, t in enumerate(res.times):
            for k in range(res.num_stages):
                w.writerow([
                    fmt_float(t),
                    k + 1,
                    fmt_float(res.mean[j, k]),
                    "" if res.variance is None else fmt_float(res.variance[j, k]),
                    "" if res.stderr is None else fmt_float(res.stderr[j, k]),
                    "" if res.trials is None else res.trials,
                    res.engine,
                ])


def write_stationary_csvs(out_dir, res: EngineResult) -> None:
    """stationary_moments.csv (stage,mean,variance) and
    stationary_pmf.csv (stage,j,pi)."""
    import os

    with open(os.path.join(out_dir, "stationary_moments.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "mean", "variance"])
        for k in range(res.num_stages):
            w.writerow([k + 1, fmt_float(res.mean[k]), fmt_float(res.variance[k])])
    with open(os.path.join(out_dir, "stationary_pmf.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "j", "pi"])
        for k, law in enumerate(res.laws):
            for j, p in enumerate(law.pmf):
                w.writerow([k + 1, j, fmt_float(p)])


def write_summary_csv(path, report: ComparisonReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "metric", "engine_a", "engine_b", "value"])
        for row in report.metrics:
            w.writerow([fmt_float(row.time), row.metric, row.engine_a,
                        row.engine_b, fmt_float(row.value)])


def emit_plot_data(report: ComparisonReport, out_dir) -> list[str]:
    """Write per-time stage-profile CSVs plus one long-format table.

    Returns the list of file paths written.  If matplotlib is importable,
    also renders one mean-profile line plot per sample time; the CSVs are
    the contract, the images are a convenience.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    resolved = [e for e in ENGINES
                if e in report.results and report.results[e].time_resolved]
    written: list[str] = []
    times = report.scenario.sample_times

    long_path = os.path.join(out_dir, "profiles_long.csv")
    with open(long_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "stage", "source", "mean", "variance", "stderr"])
        for j, t in enumerate(times):
            for e in resolved:
                res = report.results[e]
                for k in range(res.num_stages):
                    w.writerow([
                        fmt_float(t),
                        k + 1,
                        e,
                        fmt_float(res.mean[j, k]),
                        "" if res.variance is None else fmt_float(res.variance[j, k]),
                        "" if res.stderr is None else fmt_float(res.stderr[j, k]),
                    ])

    for j, t in enumerate(times):
        path = os.path.join(out_dir, f"profile_t{fmt_float(t)}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["stage", "source", "mean", "variance", "stderr"])
            for e in resolved:
                res = report.results[e]
                for k in range(res.num_stages):
                    w.writerow([
                        k + 1,
                        e,
                        fmt_float(res.mean[j, k]),
                        "" if res.variance is None else fmt_float(res.variance[j, k]),
                        "" if res.stderr is None else fmt_float(res.stderr[j, k]),
                    ])
        written.append(path)
    written.append(long_path)

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return written
    for j, t in enumerate(times):
        fig, ax = plt.subplots(figsize=(7, 4))
        for e in resolved:
            res = report.results[e]
            ax.plot(range(1, res.num_stages + 1), res.mean[j], label=e)
        ax.set_xlabel("stage")
        ax.set_ylabel("mean occupancy")
        ax.set_title(f"t = {t:g}")
        ax.legend()
        fig.tight_layout()
        img = os.path.join(out_dir, f"profile_t{fmt_float(t)}.png")
        fig.savefig(img)
        plt.close(fig)
        written.append(img)
    return written
