"""Scenario files: a flat INI format plus the shipped presets.

Sections and keys (see the presets for complete examples):

    [meta]        description (free text, shown by list-presets)
    [model]       stages, max_rate
    [input]       kind = constant | piecewise | sinusoid
                  constant: rate
                  piecewise: points = t0:v0, t1:v1, ...
                  sinusoid: offset, amplitude, omega
    [thresholds]  kind = uniform | per-stage | random
                  uniform: value
                  per-stage: values = s1, s2, ...
                  random: support, probs, seed
    [sim]         scheme = exact | fixed[:dt], dt, trials, seed
    [ode]         atol, rtol, initial_step, min_step, max_step,
                  safety, min_factor, max_factor, project
    [run]         horizon, sample_times, engines, front_threshold,
                  oracle_cap

[model], [input], [thresholds], and [run] are required; the others are
optional and fall back to defaults.  Unknown sections or keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
from importlib import resources

from .closure import IntegratorSettings
from .errors import ConfigError, InvalidParameterError
from .harness import Scenario
from .model import (Constant, ModelConfig, PerStageThresholds,
                    PiecewiseConstant, RandomThresholds, Sinusoid,
                    UniformThresholds)
from .simulate import ExactSSA, FixedStep, SimScheme

__all__ = [
    "load_scenario",
    "load_preset",
    "preset_names",
    "preset_description",
    "parse_scheme",
    "apply_overrides",
]

_KNOWN_KEYS = {
    "meta": {"description"},
    "model": {"stages", "max_rate"},
    "input": {"kind", "rate", "points", "offset", "amplitude", "omega"},
    "thresholds": {"kind", "value", "values", "support", "probs", "seed"},
    "sim": {"scheme", "dt", "trials", "seed"},
    "ode": {"atol", "rtol", "initial_step", "min_step", "max_step",
            "safety", "min_factor", "max_factor", "project"},
    "run": {"horizon", "sample_times", "engines", "front_threshold",
            "oracle_cap"},
}
_REQUIRED_SECTIONS = ("model", "input", "thresholds", "run")


def _fail(origin: str, message: str) -> ConfigError:
    return ConfigError(f"{origin}: {message}")


def _get(cp, section: str, key: str, origin: str, default=None, required=False):
    if cp.has_option(section, key):
        return cp.get(section, key).strip()
    if required:
        raise _fail(origin, f"missing key '{key}' in section [{section}]")
    return default


def _as_float(text: str, where: str, origin: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise _fail(origin, f"{where}: expected a number, got {text!r}") from None


def _as_int(text: str, where: str, origin: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise _fail(origin, f"{where}: expected an integer, got {text!r}") from None
    if value != int(value):
        raise _fail(origin, f"{where}: expected an integer, got {text!r}")
    return int(value)


def _as_bool(text: str, where: str, origin: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise _fail(origin, f"{where}: expected a boolean, got {text!r}")


def _split_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def parse_scheme(text: str, dt: float | None = None) -> SimScheme:
    """Parse 'exact' or 'fixed:<dt>' (or 'fixed' with a separate dt)."""
    text = text.strip().lower()
    if text == "exact":
        return ExactSSA()
    if text == "fixed" or text.startswith("fixed:"):
        if text.startswith("fixed:"):
            try:
                dt = float(text[len("fixed:"):])
            except ValueError:
                raise ConfigError(f"bad fixed-step size in scheme {text!r}") from None
        if dt is None:
            raise ConfigError("fixed scheme needs a step size: 'fixed:<dt>' or dt key")
        try:
            return FixedStep(dt)
        except InvalidParameterError as exc:
            raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown scheme {text!r}; expected exact or fixed:<dt>")


def _parse_input(cp, origin):
    kind = _get(cp, "input", "kind", origin, required=True).lower()
    if kind == "constant":
        rate = _as_float(_get(cp, "input", "rate", origin, required=True),
                         "input.rate", origin)
        return Constant(rate)
    if kind == "piecewise":
        text = _get(cp, "input", "points", origin, required=True)
        points = []
        for item in _split_list(text):
            if ":" not in item:
                raise _fail(origin, f"input.points: expected t:v pairs, got {item!r}")
            t_text, v_text = item.split(":", 1)
            points.append((_as_float(t_text, "input.points time", origin),
                           _as_float(v_text, "input.points value", origin)))
        return PiecewiseConstant(tuple(points))
    if kind == "sinusoid":
        return Sinusoid(
            offset=_as_float(_get(cp, "input", "offset", origin, required=True),
                             "input.offset", origin),
            amplitude=_as_float(_get(cp, "input", "amplitude", origin, required=True),
                                "input.amplitude", origin),
            omega=_as_float(_get(cp, "input", "omega", origin, required=True),
                            "input.omega", origin),
        )
    raise _fail(origin, f"input.kind: unknown kind {kind!r}")


def _parse_thresholds(cp, origin):
    kind = _get(cp, "thresholds", "kind", origin, required=True).lower()
    if kind == "uniform":
        return UniformThresholds(
            _as_int(_get(cp, "thresholds", "value", origin, required=True),
                    "thresholds.value", origin))
    if kind == "per-stage":
        text = _get(cp, "thresholds", "values", origin, required=True)
        values = tuple(_as_int(v, "thresholds.values", origin)
                       for v in _split_list(text))
        return PerStageThresholds(values)
    if kind == "random":
        support = tuple(_as_int(v, "thresholds.support", origin)
                        for v in _split_list(
                            _get(cp, "thresholds", "support", origin, required=True)))
        probs = tuple(_as_float(v, "thresholds.probs", origin)
                      for v in _split_list(
                          _get(cp, "thresholds", "probs", origin, required=True)))
        seed = _as_int(_get(cp, "thresholds", "seed", origin, required=True),
                       "thresholds.seed", origin)
        return RandomThresholds(support=support, probs=probs, seed=seed)
    raise _fail(origin, f"thresholds.kind: unknown kind {kind!r}")


def _parse_settings(cp, origin) -> IntegratorSettings:
    if not cp.has_section("ode"):
        return IntegratorSettings()
    kwargs = {}
    for key in ("atol", "rtol", "initial_step", "min_step", "max_step",
                "safety", "min_factor", "max_factor"):
        text = _get(cp, "ode", key, origin)
        if text is not None:
            kwargs[key] = _as_float(text, f"ode.{key}", origin)
    text = _get(cp, "ode", "project", origin)
    if text is not None:
        kwargs["project"] = _as_bool(text, "ode.project", origin)
    try:
        return IntegratorSettings(**kwargs)
    except InvalidParameterError as exc:
        raise _fail(origin, str(exc)) from None


def _scenario_from_parser(cp: configparser.ConfigParser, origin: str) -> Scenario:
    for section in cp.sections():
        if section not in _KNOWN_KEYS:
            raise _fail(origin, f"unknown section [{section}]")
        unknown = set(cp.options(section)) - _KNOWN_KEYS[section]
        if unknown:
            raise _fail(origin, f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
    for section in _REQUIRED_SECTIONS:
        if not cp.has_section(section):
            raise _fail(origin, f"missing required section [{section}]")

    try:
        config = ModelConfig(
            num_stages=_as_int(_get(cp, "model", "stages", origin, required=True),
                               "model.stages", origin),
            max_rate=_as_float(_get(cp, "model", "max_rate", origin, required=True),
                               "model.max_rate", origin),
            input=_parse_input(cp, origin),
            thresholds=_parse_thresholds(cp, origin),
        )

        dt_text = _get(cp, "sim", "dt", origin) if cp.has_section("sim") else None
        dt = _as_float(dt_text, "sim.dt", origin) if dt_text is not None else None
        scheme_text = (_get(cp, "sim", "scheme", origin, default="exact")
                       if cp.has_section("sim") else "exact")
        scheme = parse_scheme(scheme_text, dt)
        trials = 10_000
        seed = 0
        if cp.has_section("sim"):
            text = _get(cp, "sim", "trials", origin)
            if text is not None:
                trials = _as_int(text, "sim.trials", origin)
            text = _get(cp, "sim", "seed", origin)
            if text is not None:
                seed = _as_int(text, "sim.seed", origin)

        horizon = _as_float(_get(cp, "run", "horizon", origin, required=True),
                            "run.horizon", origin)
        times = tuple(_as_float(v, "run.sample_times", origin)
                      for v in _split_list(
                          _get(cp, "run", "sample_times", origin, required=True)))
        engines_text = _get(cp, "run", "engines", origin, default="mc-exact, ode-nb")
        engines = tuple(_split_list(engines_text))
        kwargs = {}
        text = _get(cp, "run", "front_threshold", origin)
        if text is not None:
            kwargs["front_threshold"] = _as_float(text, "run.front_threshold", origin)
        text = _get(cp, "run", "oracle_cap", origin)
        if text is not None:
            kwargs["oracle_cap"] = _as_int(text, "run.oracle_cap", origin)

        return Scenario(config=config, horizon=horizon, sample_times=times,
                        engines=engines, scheme=scheme, trials=trials,
                        seed=seed, ode_settings=_parse_settings(cp, origin),
                        **kwargs)
    except InvalidParameterError as exc:
        # parameter errors are configuration errors when they come from a file
        raise _fail(origin, str(exc)) from None


def _read_parser(text: str, origin: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                   interpolation=None)
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise _fail(origin, f"malformed config: {exc}") from None
    return cp


def load_scenario(path) -> Scenario:
    """Load a scenario from an INI file on disk."""
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return _scenario_from_parser(_read_parser(text, str(path)), str(path))


def _preset_root():
    return resources.files("stageq").joinpath("presets")


def preset_names() -> list[str]:
    """Names of the shipped presets, sorted."""
    return sorted(entry.name[:-4] for entry in _preset_root().iterdir()
                  if entry.name.endswith(".ini"))


def _preset_text(name: str) -> str:
    entry = _preset_root().joinpath(f"{name}.ini")
    if not entry.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return entry.read_text()


def preset_description(name: str) -> str:
    cp = _read_parser(_preset_text(name), f"preset:{name}")
    if cp.has_option("meta", "description"):
        return cp.get("meta", "description").strip()
    return ""


def load_preset(name: str) -> Scenario:
    """Load one of the shipped presets by name."""
    return _scenario_from_parser(_read_parser(_preset_text(name), f"preset:{name}"),
                                 f"preset:{name}")


def apply_overrides(scenario: Scenario, *, stages=None, trials=None, seed=None,
                    scheme=None, engines=None, sample_times=None, horizon=None,
                    front_threshold=None, oracle_cap=None) -> Scenario:
    """Return a copy of the scenario with CLI-style overrides applied.

    When sample_times are overridden without an explicit horizon, the
    horizon is extended to cover the last sample if needed.
    """
    changes = {}
    if stages is not None:
        changes["config"] = dataclasses.replace(scenario.config, num_stages=stages)
    if trials is not None:
        changes["trials"] = trials
    if seed is not None:
        changes["seed"] = seed
    if scheme is not None:
        changes["scheme"] = parse_scheme(scheme) if isinstance(scheme, str) else scheme
    if engines is not None:
        changes["engines"] = tuple(engines)
    if sample_times is not None:
        changes["sample_times"] = tuple(float(t) for t in sample_times)
        if horizon is None:
            last = max(changes["sample_times"] or (scenario.horizon,))
            changes["horizon"] = max(scenario.horizon, last)
    if horizon is not None:
        changes["horizon"] = horizon
    if front_threshold is not None:
        changes["front_threshold"] = front_threshold
    if oracle_cap is not None:
        changes["oracle_cap"] = oracle_cap
    return dataclasses.replace(scenario, **changes)
