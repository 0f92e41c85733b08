"""Monte Carlo comparison of procedures on simulated scenarios.

Iteration ``i`` of a scenario draws its data from the stream keyed by
``(seed, i)`` and every procedure sees that same dataset.  Per-iteration
counts are gathered and reduced in iteration order, so summaries are
bit-identical for any number of workers.
"""

from __future__ import annotations

import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .estimators import (
    BenjaminiHochberg,
    DunnettStepDown,
    HolmStepDown,
    LikelihoodRatioStepDown,
    MaximumResidualDown,
)
from .exceptions import MRDError
from .scenarios import Scenario, generate

__all__ = [
    "AlwaysAccept",
    "AlwaysReject",
    "METRICS",
    "ResultTable",
    "SimulationError",
    "SimulationSummary",
    "build_procedure",
    "compare_procedures",
    "row_seed",
    "run_simulation",
]

METRICS = ("e_type1", "e_type2", "fdr", "total")
COLUMNS = METRICS + tuple(f"se_{m}" for m in METRICS)


class SimulationError(MRDError, RuntimeError):
    """A procedure failed on a simulated dataset."""

    def __init__(self, message, iteration=None, fingerprint=None):
        super().__init__(message)
        self.iteration = iteration
        self.fingerprint = fingerprint


@dataclass(frozen=True)
class SimulationSummary:
    """Error metrics of one procedure on one scenario."""

    procedure: str
    iterations: int
    e_type1: float
    e_type2: float
    fdr: float
    total: float
    se_e_type1: float
    se_e_type2: float
    se_fdr: float
    se_total: float

    def as_dict(self):
        return asdict(self)


class AlwaysAccept:
    """Reference procedure that never rejects."""

    def __call__(self, dataset):
        return np.zeros(dataset.x.size, dtype=bool)


class AlwaysReject:
    """Reference procedure that rejects everything."""

    def __call__(self, dataset):
        return np.ones(dataset.x.size, dtype=bool)


_METHODS = {
    "mrd": MaximumResidualDown,
    "lrsd": LikelihoodRatioStepDown,
    "bh": BenjaminiHochberg,
    "su": BenjaminiHochberg,
    "holm": HolmStepDown,
    "sd": HolmStepDown,
    "dunnett": DunnettStepDown,
}
_TRIVIAL = {"always_accept": AlwaysAccept, "always_reject": AlwaysReject}


def build_procedure(spec, model):
    """Turn a procedure spec into a fitted estimator (or trivial callable).

    ``spec`` is a dict with a ``method`` key (``mrd``, ``lrsd``, ``bh``/``su``,
    ``holm``/``sd``, ``dunnett``, ``always_accept``, ``always_reject``); every
    other key except ``id`` is passed to the estimator constructor.
    """
    spec = dict(spec)
    method = spec.pop("method", None)
    spec.pop("id", None)
    if method in _TRIVIAL:
        return _TRIVIAL[method]()
    if method not in _METHODS:
        raise ValueError(f"unknown procedure method {method!r}")
    return _METHODS[method](model, **spec).fit()


def _label(spec, k):
    if isinstance(spec, dict):
        return str(spec.get("id", spec.get("method", f"proc{k}")))
    return getattr(spec, "__name__", type(spec).__name__)


def _resolve(procedures, scenario):
    model = scenario.model()
    out = []
    for k, spec in enumerate(procedures):
        if isinstance(spec, tuple):
            label, proc = spec
        else:
            label, proc = _label(spec, k), spec
        if isinstance(proc, dict):
            proc = build_procedure(proc, model)
        out.append((label, proc))
    labels = [lab for lab, _ in out]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate procedure ids {labels}")
    return out


def _apply(proc, dataset):
    if hasattr(proc, "decide"):
        return proc.decide(dataset.x, dataset.variance).reject
    out = proc(dataset)
    return np.asarray(getattr(out, "reject", out), dtype=bool)


def _run_chunk(scenario, procs, start, stop):
    """Counts ``(V, R, type II)`` per iteration and procedure."""
    null = scenario.means.null
    alt = scenario.means.alternative
    counts = np.zeros((stop - start, len(procs), 3), dtype=np.int64)
    for i in range(start, stop):
        data = generate(scenario, i)
        for k, (label, proc) in enumerate(procs):
            try:
                rej = _apply(proc, data)
                if rej.shape != null.shape:
                    raise ValueError(f"decision has shape {rej.shape}, expected {null.shape}")
            except Exception as exc:
                raise SimulationError(
                    f"procedure {label!r} failed at iteration {i} of "
                    f"{scenario.fingerprint()}: {exc}",
                    i, scenario.fingerprint(),
                ) from exc
            counts[i - start, k] = (
                np.count_nonzero(rej & null),
                np.count_nonzero(rej),
                np.count_nonzero(~rej & alt),
            )
    return counts


def _mean_se(values):
    n = values.size
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _chunks(iterations, workers):
    n = max(1, min(iterations, 4 * workers))
    edges = np.linspace(0, iterations, n + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_simulation(scenario, procedures, iterations, workers=1, progress=False):
    """Apply each procedure to ``iterations`` paired draws of ``scenario``.

    Parameters
    ----------
    scenario : Scenario
    procedures : list
        Procedure specs (dicts, see :func:`build_procedure`), fitted
        estimators, callables ``dataset -> reject flags``, or ``(id, proc)``
        pairs.  Parallel runs need picklable procedures.
    iterations : int
    workers : int
        Process count; results do not depend on it.

    Returns
    -------
    list of SimulationSummary
        One per procedure, in input order.
    """
    iterations = int(iterations)
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    procs = _resolve(procedures, scenario)
    chunks = _chunks(iterations, workers)
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_run_chunk, scenario, procs, a, b) for a, b in chunks]
            parts = []
            for f in futures:
                parts.append(f.result())
                if progress:
                    print(f"  {sum(p.shape[0] for p in parts)}/{iterations}", file=sys.stderr)
    else:
        parts = []
        for a, b in chunks:
            parts.append(_run_chunk(scenario, procs, a, b))
            if progress:
                print(f"  {b}/{iterations}", file=sys.stderr)
    counts = np.concatenate(parts, axis=0).astype(float)

    out = []
    for k, (label, _) in enumerate(procs):
        V, R, T2 = counts[:, k, 0], counts[:, k, 1], counts[:, k, 2]
        e1, se1 = _mean_se(V)
        e2, se2 = _mean_se(T2)
        fdr, sef = _mean_se(V / np.maximum(R, 1.0))
        _, set_ = _mean_se(V + T2)
        out.append(SimulationSummary(label, iterations, e1, e2, fdr, e1 + e2,
                                     se1, se2, sef, set_))
    return out


# --------------------------------------------------------------------------
# grids and tables


def row_seed(seed, row):
    """Seed used for grid row ``row`` of an experiment seeded with ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(0x5EED, int(row)))
    return int(ss.generate_state(1)[0])


@dataclass
class ResultTable:
    """Rows of ``label, procedure, iterations`` followed by the metric columns."""

    rows: list

    @property
    def columns(self):
        return ("row", "procedure", "iterations") + COLUMNS

    def to_csv(self, fh=None):
        """Write CSV with full round-trip precision; returns the text if no
        file handle is given."""
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([r["row"], r["procedure"], r["iterations"]]
                       + [repr(float(r[c])) for c in COLUMNS])
        return buf.getvalue() if fh is None else None

    def to_markdown(self, digits=2):
        cells = [list(self.columns)]
        for r in self.rows:
            cells.append([str(r["row"]), str(r["procedure"]), str(r["iterations"])]
                         + [f"{float(r[c]):.{digits}f}" for c in COLUMNS])
        widths = [max(len(row[j]) for row in cells) for j in range(len(cells[0]))]

        def line(row):
            return "| " + " | ".join(c.rjust(w) for c, w in zip(row, widths)) + " |"

        rule = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
        return "\n".join([line(cells[0]), rule] + [line(r) for r in cells[1:]]) + "\n"

    def lookup(self, row, procedure):
        for r in self.rows:
            if r["row"] == row and r["procedure"] == procedure:
                return r
        raise KeyError((row, procedure))


def compare_procedures(grid, workers=1, progress=False):
    """Run every row of an experiment grid.

    Parameters
    ----------
    grid : dict
        ``rows``: list of ``(label, Scenario)`` pairs, or ``(label, Scenario,
        procedures)`` triples with per-row procedures; ``procedures``: list of
        procedure specs shared by pair rows; ``iterations``: int; ``seed``:
        int.  Row ``r`` runs its scenario with seed :func:`row_seed` ``(seed, r)``.

    Returns
    -------
    ResultTable
    """
    rows = grid.get("rows", [])
    seed = grid.get("seed", 0)
    table = []
    for r, row in enumerate(rows):
        label, scenario = row[0], row[1]
        procedures = row[2] if len(row) > 2 else grid["procedures"]
        if not isinstance(scenario, Scenario):
            raise TypeError(f"grid row {label!r} is not a Scenario")
        sc = replace(scenario, seed=row_seed(seed, r))
        if progress:
            print(f"row {label}: {sc.fingerprint()}", file=sys.stderr)
        for s in run_simulation(sc, procedures, grid["iterations"], workers, progress):
            table.append(dict(row=label, **s.as_dict()))
    return ResultTable(table)
