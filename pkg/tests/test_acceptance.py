"""Acceptance criteria 1-11.

Each criterion prints one PASS/FAIL line with its measured runtime.  Run
with ``pytest tests/test_acceptance.py -v -s`` or ``python tests/test_acceptance.py``.
"""

import json
import os
import sys
import tempfile
import time

import numpy as np
import pytest

from mrdtest import cli
from mrdtest import residuals as res
from mrdtest.covariance import CovarianceModel, submatrix_precision
from mrdtest.critical_values import CriticalSchedule, schedule_mrd_two_sided
from mrdtest.projection import project_nonneg_orthant
from mrdtest.scenarios import MeanPattern, Scenario, mean_pattern_table, triples_pattern
from mrdtest.simulation import run_simulation
from mrdtest.verify import (
    WITNESS,
    _random_active,
    _random_model,
    check_covariance_kernels,
    enumerate_projection,
    has_reversal,
    lrsd_witness,
    random_sweep_instance,
    sweep_along_column,
)



def _gap(a, b, metric="total"):
    """(b - a, combined SE) for two summaries."""
    diff = getattr(b, metric) - getattr(a, metric)
    se = np.hypot(getattr(a, f"se_{metric}"), getattr(b, f"se_{metric}"))
    return diff, se


def _by_id(summaries):
    return {s.procedure: s for s in summaries}


# --------------------------------------------------------------------------


def criterion_1():
    """Fast-path and closed-form residuals against the generic engine."""
    rng = np.random.default_rng(101)
    worst_ic = worst_cp = 0.0
    for _ in range(500):
        M = int(rng.integers(2, 101))
        rho = float(rng.uniform(-0.9 / (M - 1), 0.95))
        model = CovarianceModel.intraclass(M, rho, float(rng.uniform(0.5, 2)))
        active = _random_active(rng, M)
        x = rng.standard_normal(M) * 2
        fast = res.residual_vector_intraclass_fast(rho, active, x, model.scale).values
        gen = res.residual_vector_generic(model, active, x).values
        worst_ic = max(worst_ic, float(np.max(np.abs(fast - gen))))
    for _ in range(500):
        M = int(rng.integers(2, 101))
        model = CovarianceModel.changepoint(M)
        active = _random_active(rng, M)
        zbar = np.cumsum(rng.standard_normal(M + 1))
        x = np.diff(zbar)
        gen = res.residual_vector_generic(model, active, x).values
        closed = np.array([res.residual_changepoint_closed_form(zbar, active.rejected, i)
                           for i in active.remaining])
        worst_cp = max(worst_cp, float(np.max(np.abs(np.abs(closed) - np.abs(gen)))))
    ok = worst_ic <= 1e-10 and worst_cp <= 1e-9
    return ok, f"intraclass max err {worst_ic:.1e}, change-point max err {worst_cp:.1e}", 30


def criterion_2():
    """Shift along the first column moves U_1 by exactly r, others unchanged."""
    rng = np.random.default_rng(202)
    worst_lit = worst_scaled = worst_other = 0.0
    for _ in range(200):
        M = int(rng.integers(2, 41))
        model = _random_model(rng, M)
        active = _random_active(rng, M, keep=0)
        x = rng.standard_normal(M) * 2
        r = float(rng.uniform(-5, 5))
        g = model.column(0)
        u0 = res.residual_vector(model, active, x).values
        u1 = res.residual_vector(model, active, x + r * g).values
        _, diag = submatrix_precision(model, active)
        d = u1[0] - u0[0]
        worst_lit = max(worst_lit, abs(d - r))
        worst_scaled = max(worst_scaled, abs(d - r / np.sqrt(diag[0])))
        worst_other = max(worst_other, float(np.max(np.abs(u1[1:] - u0[1:]), initial=0.0)))
    ok = worst_lit <= 1e-9 and worst_other <= 1e-9
    detail = (f"max |dU1 - r| = {worst_lit:.3g}, others max {worst_other:.1e}; "
              f"max |dU1 - r*sd(x1|rest)| = {worst_scaled:.1e}")
    return ok, detail, 5


def criterion_3():
    """One-sided MRD: rejection of H1 along g is a half-line."""
    rng = np.random.default_rng(303)
    reversals = breaks = 0
    for _ in range(200):
        x, model, sched = random_sweep_instance(rng, max_size=40)
        _, flags = sweep_along_column(x, model, sched, "one")
        reversals += has_reversal(flags)
        breaks += bool(np.any(flags[:-1] & ~flags[1:]))
    ok = reversals == 0 and breaks == 0
    return ok, f"{reversals}/200 reversals, {breaks}/200 reject->accept steps", 30


def criterion_4():
    """LRSD reversal witness and no MRD reversal at the same point."""
    w = lrsd_witness()
    lrsd_rev = bool(w["at_x"].reject[0]) and not bool(w["at_shift"].reject[0])
    disc = w["discriminant"]
    x = np.asarray(WITNESS["x"])
    model = CovarianceModel.intraclass(4, WITNESS["rho"])
    mrd_rev = False
    for sched in (schedule_mrd_two_sided(4, 0.05), schedule_mrd_two_sided(4, 0.5, 0.5),
                  CriticalSchedule(np.sqrt(w["schedule"].values))):
        _, flags = sweep_along_column(x, model, sched, "two", 0.0, WITNESS["gamma"] * 30)
        mrd_rev |= bool(np.any(flags[:-1] & ~flags[1:]))
    ok = lrsd_rev and disc > 0 and abs(disc - 6.045) < 1e-9 and not mrd_rev
    return ok, (f"LRSD reversal {lrsd_rev}, discriminant {disc:.6g} "
                f"(direct {w['direct_gap']:.6g}), MRD reversal {mrd_rev}"), 1


def criterion_5():
    r = check_covariance_kernels(max_size=20, tol=1e-10)
    return r.passed, r.detail, 5


def criterion_6():
    rng = np.random.default_rng(606)
    worst_mu = worst_obj = worst_kkt = 0.0
    for _ in range(200):
        p = int(rng.integers(1, 13))
        A = rng.standard_normal((p, p))
        S = A @ A.T / p + 0.1 * np.eye(p)
        x = rng.standard_normal(p) * 2
        proj = project_nonneg_orthant(x, S)
        mu, val = enumerate_projection(x, np.linalg.inv(S))
        worst_mu = max(worst_mu, float(np.max(np.abs(proj.mu - mu))))
        worst_obj = max(worst_obj, abs(proj.objective - val) / max(1.0, abs(val)))
        worst_kkt = max(worst_kkt, proj.kkt_residual())
    ok = worst_mu <= 1e-7 and worst_obj <= 1e-9 and worst_kkt <= 1e-8
    return ok, (f"max |mu - oracle| {worst_mu:.1e}, objective rel err {worst_obj:.1e}, "
                f"KKT {worst_kkt:.1e}"), 60


def criterion_7():
    sc = Scenario("intraclass", MeanPattern.from_means(np.zeros(200)), rho=0.0, n=1, seed=707)
    (s,) = run_simulation(sc, [{"method": "bh", "q": 0.05}], 2000)
    ok = s.fdr <= 0.05 + 3 * s.se_fdr
    return ok, f"FDR {s.fdr:.4f} +- {s.se_fdr:.4f}", 60


def criterion_8():
    sc = Scenario("treatments_control", mean_pattern_table([(0, 920), (-4, 80)]), n=2,
                  seed=808)
    procs = [{"id": "MRD", "method": "mrd", "factor": 0.71},
             {"id": "SU", "method": "bh", "q": 0.05}]
    out = _by_id(run_simulation(sc, procs, 500))
    diff, se = _gap(out["MRD"], out["SU"])
    ok = diff > 3 * se and out["MRD"].fdr <= 0.10
    return ok, (f"MRD total {out['MRD'].total:.2f}, SU total {out['SU'].total:.2f}, "
                f"gap {diff / se:.1f} SE, MRD FDR {out['MRD'].fdr:.3f}"), 600


def criterion_9():
    sc = Scenario("changepoint", MeanPattern.from_means(triples_pattern(600, 10)), n=1,
                  seed=909)
    procs = [{"id": "MRD", "method": "mrd", "factor": 0.77},
             {"id": "SD", "method": "holm", "alpha": 0.05}]
    out = _by_id(run_simulation(sc, procs, 500))
    diff, se = _gap(out["MRD"], out["SD"])
    ok = diff > 3 * se
    return ok, (f"MRD total {out['MRD'].total:.2f}, SD total {out['SD'].total:.2f}, "
                f"gap {diff / se:.1f} SE"), 300


def criterion_10():
    sc = Scenario("treatments_control", mean_pattern_table([(0, 95), (2, 5)]), n=1, seed=1010)
    procs = [{"id": "MRD", "method": "mrd", "sided": "one"},
             {"id": "LRSD", "method": "lrsd", "sided": "one"},
             {"id": "D05", "method": "dunnett", "alpha": 0.05, "draws": 200_000, "seed": 11},
             {"id": "SD", "method": "holm", "sided": "one"}]
    out = _by_id(run_simulation(sc, procs, 500))
    mrd = out["MRD"]
    gaps = {k: _gap(mrd, out[k]) for k in ("D05", "SD", "LRSD")}
    beats = all(gaps[k][0] > 3 * gaps[k][1] for k in ("D05", "SD"))
    comparable = abs(gaps["LRSD"][0]) <= 3 * gaps["LRSD"][1]
    detail = ", ".join(f"{k} {out[k].total:.2f}+-{out[k].se_total:.2f}" for k in out)
    detail += "; gaps " + ", ".join(f"{k} {d / s:.1f} SE" for k, (d, s) in gaps.items())
    return beats and comparable, detail, 600


def criterion_11():
    cfg = {
        "scenario": {"kind": "treatments_control", "n": 1, "M": 30,
                     "rows": [{"counts": [[0, 25], [2, 5]]}, {"counts": [[0, 30]]}]},
        "procedures": [{"method": "mrd", "sided": "one"}, {"method": "bh", "sided": "one"},
                       {"method": "lrsd", "sided": "one"}],
        "run": {"iterations": 200, "seed": 1111},
    }
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "cfg.json")
        with open(path, "w") as fh:
            json.dump(cfg, fh)
        blobs = []
        for w in (1, 4):
            out = os.path.join(tmp, f"w{w}.csv")
            code = cli.main(["simulate", path, "--workers", str(w), "--out", out])
            with open(out, "rb") as fh:
                blobs.append((code, fh.read()))
    ok = blobs[0][0] == blobs[1][0] == 0 and blobs[0][1] == blobs[1][1]
    return ok, f"{len(blobs[0][1])} bytes, identical: {blobs[0][1] == blobs[1][1]}", 120


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


def evaluate(fn):
    start = time.perf_counter()
    ok, detail, limit = fn()
    elapsed = time.perf_counter() - start
    ok = bool(ok) and elapsed < limit
    n = fn.__name__.split("_")[1]
    line = (f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  "
            f"[{elapsed:.1f}s / {limit}s]  {detail}")
    return ok, line


@pytest.mark.parametrize("fn", CRITERIA, ids=lambda f: f.__name__)
def test_criterion(fn, capsys):
    ok, line = evaluate(fn)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    failed = 0
    for fn in CRITERIA:
        ok, line = evaluate(fn)
        print(line, flush=True)
        failed += not ok
    sys.exit(1 if failed else 0)
