"""Declarative run configuration.

A run is described by one TOML file with nested tables: [walk] for the
step distribution (probabilities as exact "num/den" strings), [model]
for the scenery, [experiment] for sizes and seeds, plus optional
per-subcommand tables.  Matrices are plain nested integer arrays.  This
module turns that file into the frozen objects the experiments consume;
every malformed field raises ConfigError with the offending key.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import tomli

from .experiments import ExperimentConfig
from .scenery import (
    SceneryModel,
    ToralScenery,
    cosine_observable,
    gaussian,
    centered_uniform,
    moving_average,
    rademacher,
    stock_action,
    toral_action,
    toral_scenery,
    trig_polynomial,
    two_point,
    IIDScenery,
)
from .walks import StepDistribution, ssrw, step_distribution


class ConfigError(ValueError):
    """A configuration file entry is missing or malformed."""


def load_config(path: str) -> Dict[str, object]:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc


def _table(raw: Dict[str, object], name: str,
           required: bool = True) -> Dict[str, object]:
    value = raw.get(name)
    if value is None:
        if required:
            raise ConfigError(f"missing [{name}] table")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(value)


def _fraction(value: object, where: str) -> Fraction:
    try:
        if isinstance(value, str):
            return Fraction(value)
        if isinstance(value, bool):
            raise TypeError("boolean")
        if isinstance(value, (int, float)):
            return Fraction(value)
    except (ValueError, ZeroDivisionError, TypeError):
        pass
    raise ConfigError(f"{where}: expected a probability as 'num/den', "
                      f"got {value!r}")


def _int_matrix(value: object, where: str) -> Tuple[Tuple[int, ...], ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where}: expected a nested integer array")
    rows = []
    for row in value:
        if not isinstance(row, list) or not all(
                isinstance(x, int) and not isinstance(x, bool) for x in row):
            raise ConfigError(f"{where}: expected a nested integer array")
        rows.append(tuple(row))
    return tuple(rows)


# ---------------------------------------------------------------------------
# section builders
# ---------------------------------------------------------------------------

def walk_from_config(raw: Dict[str, object]) -> Tuple[StepDistribution, Optional[float]]:
    """Build the step distribution from [walk]; absent means the simple
    random walk.  Returns (walk, c0 override)."""
    sec = _table(raw, "walk", required=False)
    c0 = sec.get("c0")
    if c0 is not None:
        c0 = float(c0)
        if not c0 > 0:
            raise ConfigError("walk.c0 must be positive")
    kind = sec.get("kind", "steps" if "steps" in sec else "ssrw")
    if kind == "ssrw":
        return ssrw(), c0
    if kind != "steps":
        raise ConfigError(f"walk.kind must be 'ssrw' or 'steps', got {kind!r}")
    steps = sec.get("steps")
    if not isinstance(steps, list) or not steps:
        raise ConfigError("walk.steps must be a list of [dx, dy, prob] entries")
    probs = {}
    for entry in steps:
        if (not isinstance(entry, list) or len(entry) != 3
                or not all(isinstance(entry[i], int) for i in (0, 1))):
            raise ConfigError("walk.steps entries must be [dx, dy, prob]")
        probs[(entry[0], entry[1])] = _fraction(entry[2], "walk.steps")
    try:
        return step_distribution(probs), c0
    except ValueError as exc:
        raise ConfigError(f"walk.steps: {exc}") from exc


def _law_from_config(sec: Dict[str, object], where: str):
    law = sec.get("law", "rademacher")
    if law == "rademacher":
        return rademacher()
    if law == "uniform":
        return centered_uniform(float(sec.get("half_width", 1.0)))
    if law == "gaussian":
        return gaussian(float(sec.get("sd", 1.0)))
    if law == "two_point":
        if "hi" not in sec or "prob" not in sec:
            raise ConfigError(f"{where}: two_point needs 'hi' and 'prob'")
        return two_point(float(sec["hi"]), _fraction(sec["prob"], where))
    raise ConfigError(f"{where}: unknown law {law!r}")


def model_from_config(raw: Dict[str, object]) -> SceneryModel:
    """Build the scenery model from [model]; absent means iid Rademacher."""
    sec = _table(raw, "model", required=False)
    if not sec:
        return IIDScenery(law=rademacher())
    kind = sec.get("kind", "iid")
    try:
        if kind == "iid":
            return IIDScenery(law=_law_from_config(sec, "model"))
        if kind == "moving_average":
            coeffs_raw = sec.get("coeffs")
            if not isinstance(coeffs_raw, list) or not coeffs_raw:
                raise ConfigError(
                    "model.coeffs must be a list of [qx, qy, value] entries")
            coeffs = {}
            for entry in coeffs_raw:
                if (not isinstance(entry, list) or len(entry) != 3
                        or not all(isinstance(entry[i], int) for i in (0, 1))):
                    raise ConfigError(
                        "model.coeffs entries must be [qx, qy, value]")
                coeffs[(entry[0], entry[1])] = float(entry[2])
            return moving_average(coeffs, _law_from_config(sec, "model"))
        if kind == "toral":
            return _toral_from_config(sec)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    raise ConfigError(f"model.kind must be 'iid', 'moving_average' or "
                      f"'toral', got {kind!r}")


def _toral_from_config(sec: Dict[str, object]) -> ToralScenery:
    if "a1" in sec or "a2" in sec:
        if "a1" not in sec or "a2" not in sec:
            raise ConfigError("model: toral needs both a1 and a2 matrices")
        action = toral_action(_int_matrix(sec["a1"], "model.a1"),
                              _int_matrix(sec["a2"], "model.a2"))
    else:
        action = stock_action()
    if "terms" in sec:
        terms_raw = sec["terms"]
        if not isinstance(terms_raw, list) or not terms_raw:
            raise ConfigError(
                "model.terms must be a list of [k..., re, im] entries")
        coeffs: Dict[Tuple[int, ...], complex] = {}
        for entry in terms_raw:
            if (not isinstance(entry, list)
                    or len(entry) != action.rho + 2
                    or not all(isinstance(x, int)
                               for x in entry[:action.rho])):
                raise ConfigError(
                    f"model.terms entries must be [{action.rho} integer "
                    "frequency components, re, im]")
            freq = tuple(int(x) for x in entry[:action.rho])
            coeffs[freq] = complex(float(entry[-2]), float(entry[-1]))
        observable = trig_polynomial(action.rho, coeffs)
    else:
        freq_raw = sec.get("frequency", [1] + [0] * (action.rho - 1))
        if (not isinstance(freq_raw, list)
                or len(freq_raw) != action.rho
                or not all(isinstance(x, int) for x in freq_raw)):
            raise ConfigError(
                f"model.frequency must be {action.rho} integers")
        observable = cosine_observable(tuple(freq_raw),
                                       amplitude=float(sec.get("amplitude", 2.0)),
                                       rho=action.rho)
    kwargs = {}
    if "modulus" in sec:
        kwargs["modulus"] = int(sec["modulus"])
    return toral_scenery(action, observable, **kwargs)


def experiment_from_config(raw: Dict[str, object],
                           seed: Optional[int] = None) -> ExperimentConfig:
    """Assemble the full experiment; `seed` overrides [experiment].master_seed."""
    walk, c0 = walk_from_config(raw)
    model = model_from_config(raw)
    sec = _table(raw, "experiment", required=False)
    if seed is None:
        seed = int(sec.get("master_seed", sec.get("seed", 0)))
    grid = sec.get("time_grid", [0.0, 0.25, 0.5, 0.75, 1.0])
    if not isinstance(grid, list):
        raise ConfigError("experiment.time_grid must be an array of floats")
    try:
        return ExperimentConfig(
            walk=walk,
            model=model,
            n=int(sec.get("n", 10000)),
            time_grid=tuple(float(t) for t in grid),
            replicates=int(sec.get("replicates", 2000)),
            omega_replicates=int(sec.get("omega_replicates", 10)),
            master_seed=int(seed),
            normalization=str(sec.get("normalization", "asymptotic")),
            c0=float(sec["c0"]) if "c0" in sec else c0,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"experiment: {exc}") from exc


def subcommand_table(raw: Dict[str, object], name: str) -> Dict[str, object]:
    """Optional per-subcommand parameter table, empty when absent."""
    return _table(raw, name, required=False)


def int_list(sec: Dict[str, object], key: str,
             default: Sequence[int]) -> Tuple[int, ...]:
    value = sec.get(key)
    if value is None:
        return tuple(int(x) for x in default)
    if not isinstance(value, list) or not all(isinstance(x, int) for x in value):
        raise ConfigError(f"{key} must be an array of integers")
    return tuple(int(x) for x in value)
