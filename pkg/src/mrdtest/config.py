"""JSON experiment configs for ``mrdtest simulate``.

A config has four sections: ``scenario`` (shared model settings plus the list
of mean-pattern rows), ``procedures``, ``schedule`` (named schedule recipes)
and ``run``.  See ``docs/config_schema.md``.  Everything is resolved into
scenarios, schedules and fitted procedures before any simulation starts, so a
bad value fails immediately with the path of the offending key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .critical_values import (
    CriticalSchedule,
    schedule_mrd_two_sided,
    schedule_one_sided,
    schedule_step_down,
)
from .exceptions import MRDError, ScheduleError
from .scenarios import MeanPattern, Scenario, mean_pattern_table, triples_pattern
from .simulation import build_procedure

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

RUN_DEFAULTS = {"iterations": 1000, "seed": 0, "workers": 1, "format": "csv", "out": None}
SCENARIO_KEYS = {"kind", "rho", "n", "sigma", "variance_known", "mean_units", "generation",
                 "layout", "null_rule", "M", "rows"}
ROW_KEYS = {"label", "counts", "means", "triples", "value", "M"}


class ConfigError(MRDError, ValueError):
    """Invalid configuration; the message starts with the key path."""


@dataclass
class RunConfig:
    rows: list = field(default_factory=list)
    iterations: int = 1000
    seed: int = 0
    workers: int = 1
    format: str = "csv"
    out: str | None = None

    def grid(self):
        """Grid for :func:`mrdtest.simulation.compare_procedures`."""
        return {"rows": self.rows, "iterations": self.iterations, "seed": self.seed}


def _fail(where, msg):
    raise ConfigError(f"{where}: {msg}")


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        _fail(where, "expected an object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        _fail(f"{where}.{extra[0]}", "unknown key")


def _schedule_from_recipe(recipe, M, where):
    if isinstance(recipe, list):
        values = recipe
    elif isinstance(recipe, dict):
        fam = recipe.get("family")
        kw = {k: v for k, v in recipe.items() if k != "family"}
        try:
            if fam == "values":
                values = kw["values"]
            elif fam == "file":
                return CriticalSchedule.from_csv(kw["path"])
            elif fam == "mrd_two_sided":
                return schedule_mrd_two_sided(M, kw.get("alpha", 0.05), kw.get("factor", 0.71))
            elif fam in ("mrd_one_sided", "lrsd_one_sided", "sd_base"):
                kind = {"mrd_one_sided": "mrd", "lrsd_one_sided": "lrsd"}.get(fam, "sd_base")
                return schedule_one_sided(M, kw.get("alpha", 0.05), kind, kw.get("factor"),
                                          kw.get("first_factor"))
            elif fam == "step_down":
                return schedule_step_down(M, kw.get("alpha", 0.05), kw.get("sided", "one"))
            else:
                _fail(f"{where}.family", f"unknown schedule family {fam!r}")
        except KeyError as exc:
            _fail(f"{where}.{exc.args[0]}", "missing key")
        except ScheduleError as exc:
            _fail(where, str(exc))
        except (TypeError, ValueError, OSError) as exc:
            if isinstance(exc, ConfigError):
                raise
            _fail(where, str(exc))
    else:
        _fail(where, "schedule must be a list of numbers, a recipe object or a name")
    try:
        sched = CriticalSchedule([float(v) for v in values])
    except ScheduleError as exc:
        _fail(where, str(exc))
    except (TypeError, ValueError):
        _fail(where, "schedule values must be numbers")
    if len(sched) != M:
        _fail(where, f"schedule has {len(sched)} constants but the row has M={M}")
    return sched


def _row_means(row, shared, where):
    _check_keys(row, ROW_KEYS, where)
    layout = shared.get("layout", "block")
    null_rule = shared.get("null_rule", "zero")
    M = row.get("M", shared.get("M"))
    try:
        if "means" in row:
            return MeanPattern.from_means(row["means"], null_rule)
        if "triples" in row:
            if M is None:
                _fail(f"{where}.M", "triples rows need M")
            return MeanPattern.from_means(
                triples_pattern(M, row["triples"], row.get("value", 1.0)), null_rule)
        if "counts" in row:
            return mean_pattern_table(row["counts"], M, layout, null_rule)
    except MRDError as exc:
        if isinstance(exc, ConfigError):
            raise
        _fail(where, str(exc))
    _fail(where, "row needs one of 'counts', 'means' or 'triples'")


def _scenarios(section):
    _check_keys(section, SCENARIO_KEYS, "scenario")
    rows = section.get("rows", [])
    if not isinstance(rows, list):
        _fail("scenario.rows", "expected a list")
    shared = {k: v for k, v in section.items()
              if k in ("kind", "rho", "n", "sigma", "variance_known", "mean_units", "generation")}
    out = []
    for r, row in enumerate(rows):
        where = f"scenario.rows[{r}]"
        means = _row_means(row, section, where)
        label = str(row.get("label", r))
        try:
            sc = Scenario(means=means, **shared)
        except TypeError as exc:
            _fail("scenario", str(exc))
        except (MRDError, ValueError) as exc:
            _fail(where, str(exc))
        out.append((label, sc))
    return out


def _procedures(specs, schedules, scenario, row_where):
    if not isinstance(specs, list):
        _fail("procedures", "expected a list")
    model = scenario.model()
    built = []
    seen = set()
    for k, spec in enumerate(specs):
        where = f"procedures[{k}]"
        if not isinstance(spec, dict) or "method" not in spec:
            _fail(where, "each procedure needs a 'method'")
        spec = dict(spec)
        label = str(spec.get("id", spec["method"]))
        if label in seen:
            _fail(f"{where}.id", f"duplicate procedure id {label!r}")
        seen.add(label)
        sched = spec.get("schedule")
        if sched is not None and sched != "auto":
            if isinstance(sched, str):
                if sched not in schedules:
                    _fail(f"{where}.schedule", f"no schedule named {sched!r}")
                recipe, swhere = schedules[sched], f"schedule.{sched}"
            else:
                recipe, swhere = sched, f"{where}.schedule"
            spec["schedule"] = _schedule_from_recipe(recipe, scenario.M, f"{swhere} ({row_where})")
        try:
            built.append((label, build_procedure(spec, model)))
        except TypeError as exc:
            _fail(where, str(exc))
        except (MRDError, ValueError) as exc:
            _fail(where, str(exc))
    return built


def parse_config(data, overrides=None):
    """Validate a config dict and build every scenario and procedure.

    ``overrides`` maps run keys (``seed``, ``iterations``, ``workers``,
    ``format``, ``out``) to values that take precedence over the file.

    Returns
    -------
    RunConfig
        ``rows`` holds ``(label, scenario, procedures)`` triples; the per-row
        seed is applied when the grid runs.
    """
    if not isinstance(data, dict):
        _fail("<root>", "expected an object")
    _check_keys(data, ("scenario", "procedures", "schedule", "run"), "<root>")
    run = dict(RUN_DEFAULTS)
    run_section = data.get("run", {})
    _check_keys(run_section, RUN_DEFAULTS, "run")
    run.update(run_section)
    run.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in ("iterations", "seed", "workers"):
        if not isinstance(run[key], int) or isinstance(run[key], bool):
            _fail(f"run.{key}", "expected an integer")
    if run["iterations"] < 1:
        _fail("run.iterations", "must be at least 1")
    if run["workers"] < 1:
        _fail("run.workers", "must be at least 1")
    if run["format"] not in ("csv", "md"):
        _fail("run.format", "must be 'csv' or 'md'")

    schedules = data.get("schedule", {})
    if not isinstance(schedules, dict):
        _fail("schedule", "expected an object of named schedules")
    rows = []
    for label, sc in (_scenarios(data.get("scenario", {}))):
        procs = _procedures(data.get("procedures", []), schedules, sc, f"row {label!r}")
        rows.append((label, sc, procs))
    return RunConfig(rows, run["iterations"], run["seed"], run["workers"], run["format"],
                     run["out"])


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_config(data, overrides)

