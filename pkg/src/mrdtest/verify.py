"""Self-checks: closed forms against dense linear algebra, shift and
monotonicity sweeps, and the LRSD reversal witness.

Each check returns a :class:`CheckResult`.  The closed-form kernels are
passed in as arguments so a deliberately broken kernel can be swapped in to
confirm that the corresponding check notices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import covariance as cov
from . import residuals as res
from .covariance import ActiveSet, CovarianceModel
from .critical_values import CriticalSchedule, schedule_mrd_two_sided, schedule_one_sided
from .procedures import lrsd, mrd
from .projection import project_nonneg_orthant

__all__ = [
    "CheckResult",
    "WITNESS",
    "lrsd_witness",
    "run_checks",
    "shift_along_column",
    "sweep_along_column",
    "witness_discriminant",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_active(rng, M, keep=None):
    """Random rejection history of random length, never rejecting ``keep``."""
    pool = [j for j in range(M) if j != keep]
    k = int(rng.integers(0, min(len(pool), M - 1) + 1))
    order = rng.permutation(pool)[:k]
    return ActiveSet.from_rejected(M, [int(j) for j in order])


def _random_model(rng, M, kinds=("intraclass", "changepoint", "successive", "dense")):
    kind = kinds[int(rng.integers(len(kinds)))]
    scale = float(rng.uniform(0.5, 2.0))
    if kind == "intraclass":
        lo = -1.0 / (M - 1) if M > 1 else -0.9
        rho = float(rng.uniform(max(lo, -0.9) * 0.9, 0.95))
        return CovarianceModel.intraclass(M, rho, scale)
    if kind == "changepoint":
        return CovarianceModel.changepoint(M, scale)
    if kind == "successive":
        return CovarianceModel.successive(M, float(rng.uniform(-0.45, 0.45)), scale)
    A = rng.standard_normal((M, M))
    return CovarianceModel.dense(A @ A.T / M + 0.5 * np.eye(M), scale)


# --------------------------------------------------------------------------
# kernel checks


def check_intraclass_fast(n=100, max_size=60, seed=0, tol=1e-10):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        M = int(rng.integers(2, max_size + 1))
        model = _random_model(rng, M, ("intraclass",))
        active = _random_active(rng, M)
        x = rng.standard_normal(M) * 2
        fast = res.residual_vector_intraclass_fast(model.rho, active, x, model.scale)
        gen = res.residual_vector_generic(model, active, x)
        worst = max(worst, float(np.max(np.abs(fast.values - gen.values))))
    return CheckResult("intraclass fast path vs generic", bool(worst <= tol), f"max |diff| = {worst:.2e}")


def check_changepoint_closed_form(n=100, max_size=60, seed=1, tol=1e-9,
                                  closed_form=res.residual_changepoint_closed_form):
    """Pooled-means statistic against the generic residual.

    The pooled-means orientation is the negative of the generic one, so the
    comparison is signed: ``closed_form == -generic`` at unit scale.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        M = int(rng.integers(2, max_size + 1))
        model = CovarianceModel.changepoint(M)
        active = _random_active(rng, M)
        zbar = rng.standard_normal(M + 1) * 2
        x = np.diff(zbar)
        gen = res.residual_vector_generic(model, active, x)
        for pos, i in enumerate(active.remaining):
            c = closed_form(zbar, active.rejected, i)
            worst = max(worst, abs(c + gen.values[pos]))
    return CheckResult("change-point closed form vs generic", bool(worst <= tol),
                       f"max |diff| = {worst:.2e}")


def check_structured_engines(n=100, max_size=60, seed=2, tol=1e-9):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        M = int(rng.integers(2, max_size + 1))
        model = _random_model(rng, M, ("changepoint", "successive", "intraclass"))
        active = _random_active(rng, M)
        x = rng.standard_normal(M) * 2
        a = res.residual_vector(model, active, x)
        b = res.residual_vector(model, active, x, engine="generic")
        worst = max(worst, float(np.max(np.abs(a.values - b.values))))
    return CheckResult("structured engines vs generic", bool(worst <= tol), f"max |diff| = {worst:.2e}")


def check_covariance_kernels(max_size=20, tol=1e-10):
    worst = 0.0
    for p in range(1, max_size + 1):
        for rho in (-0.9 / max(p - 1, 1), 0.1, 0.5, 0.9):
            dense = np.linalg.inv(CovarianceModel.intraclass(p, rho).to_dense())
            worst = max(worst, float(np.max(np.abs(cov.intraclass_inverse(rho, p) - dense))))
        inv = np.linalg.inv(CovarianceModel.changepoint(p).to_dense())
        first, last = cov.tridiag_inverse_boundary_rows(p)
        worst = max(worst, float(np.max(np.abs(first - inv[0]))),
                    float(np.max(np.abs(last - inv[-1]))))
        for rho in (-0.45, -0.2, 0.3, 0.45):
            S = CovarianceModel.successive(p, rho).to_dense()
            worst = max(worst, abs(cov.succ_det(p, rho) - np.linalg.det(S)))
            row = cov.succ_inverse_first_row(p, rho)
            worst = max(worst, float(np.max(np.abs(row - np.linalg.inv(S)[0]))))
    return CheckResult("covariance kernels vs dense", bool(worst <= tol), f"max |diff| = {worst:.2e}")


def enumerate_projection(x, precision):
    """Exact ``argmin_{mu >= 0} (x - mu)' P (x - mu)`` by trying every free set."""
    p = x.size
    best, best_val = np.zeros(p), float(x @ precision @ x)
    for mask in itertools.product((False, True), repeat=p):
        free = np.flatnonzero(mask)
        if free.size == 0:
            continue
        fixed = np.flatnonzero(~np.array(mask))
        # stationarity on the free block with the fixed block at zero
        rhs = precision[np.ix_(free, free)] @ x[free] + precision[np.ix_(free, fixed)] @ x[fixed]
        mu_f = np.linalg.solve(precision[np.ix_(free, free)], rhs)
        if np.any(mu_f < 0):
            continue
        mu = np.zeros(p)
        mu[free] = mu_f
        d = x - mu
        val = float(d @ precision @ d)
        if val < best_val:
            best, best_val = mu, val
    return best, best_val


def check_projection(n=30, max_size=8, seed=3, tol=1e-8):
    rng = np.random.default_rng(seed)
    worst, worst_kkt = 0.0, 0.0
    for _ in range(n):
        p = int(rng.integers(1, max_size + 1))
        A = rng.standard_normal((p, p))
        S = A @ A.T / p + 0.3 * np.eye(p)
        P = np.linalg.inv(S)
        x = rng.standard_normal(p) * 2
        proj = project_nonneg_orthant(x, precision=P)
        _, val = enumerate_projection(x, P)
        worst = max(worst, abs(proj.objective - val) / max(1.0, abs(val)))
        worst_kkt = max(worst_kkt, proj.kkt_residual())
    ok = bool(worst <= tol and worst_kkt <= tol)
    return CheckResult("orthant projection vs enumeration", ok,
                       f"objective gap = {worst:.2e}, KKT residual = {worst_kkt:.2e}")


# --------------------------------------------------------------------------
# shift and monotonicity along the first column


def shift_along_column(model, active, x, r, j=0):
    """Residuals before and after moving ``x`` by ``r`` times column ``j``.

    Returns ``(delta_j, expected_j, others)``: the change in ``U_j``, the
    exact change ``r * sqrt(conditional variance of x_j)``, and the largest
    change among the other remaining coordinates (zero in exact arithmetic).
    """
    if j not in active.remaining:
        raise ValueError(f"coordinate {j} is not active")
    pos = active.remaining.index(j)
    g = model.column(j)
    u0 = res.residual_vector(model, active, x).values
    u1 = res.residual_vector(model, active, x + r * g).values
    _, diag = cov.submatrix_precision(model, active)
    expected = r / np.sqrt(diag[pos])
    others = np.delete(u1 - u0, pos)
    return float(u1[pos] - u0[pos]), float(expected), float(np.max(np.abs(others), initial=0.0))


def check_shift(n=200, max_size=40, seed=4, tol=1e-9):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        M = int(rng.integers(2, max_size + 1))
        model = _random_model(rng, M)
        active = _random_active(rng, M, keep=0)
        x = rng.standard_normal(M) * 2
        r = float(rng.uniform(-5, 5))
        d, e, o = shift_along_column(model, active, x, r)
        worst = max(worst, abs(d - e), o)
    return CheckResult("shift along first column", bool(worst <= tol), f"max error = {worst:.2e}")


def sweep_along_column(x, model, schedule, sided="one", lo=-6.0, hi=6.0, points=64, j=0,
                       procedure=mrd):
    """Decision on ``H_j`` at ``x + r g`` for an evenly spaced grid of ``r``."""
    g = model.column(j)
    rs = np.linspace(lo, hi, points)
    flags = np.array([procedure(x + r * g, model, schedule, sided).reject[j] for r in rs])
    return rs, flags


def has_reversal(flags):
    """True if the sequence goes reject -> accept -> reject."""
    f = np.asarray(flags, dtype=bool)
    seen_rej = seen_gap = False
    for v in f:
        if v and seen_gap:
            return True
        if v:
            seen_rej = True
        elif seen_rej:
            seen_gap = True
    return False


def random_sweep_instance(rng, max_size=30):
    """A random one-sided MRD instance of the kind used in the sweeps."""
    M = int(rng.integers(2, max_size + 1))
    choice = int(rng.integers(4))
    if choice < 3:
        model = CovarianceModel.intraclass(M, (0.25, 0.5, 0.75)[choice])
    else:
        model = CovarianceModel.changepoint(M)
    x = rng.standard_normal(M) * np.sqrt(model.diagonal())
    hot = rng.random(M) < 0.3
    x[hot] += rng.uniform(2, 5, hot.sum()) * np.sqrt(model.diagonal()[hot])
    alpha = float(rng.uniform(0.01, 0.3))
    return x, model, schedule_one_sided(M, alpha, "mrd")


def check_monotone_sweep(n=100, seed=5):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n):
        x, model, sched = random_sweep_instance(rng)
        _, flags = sweep_along_column(x, model, sched, "one")
        # one-sided: once rejected, rejected for every larger shift
        if np.any(flags[:-1] & ~flags[1:]):
            bad += 1
    return CheckResult("one-sided MRD rejection is a half-line along g", bad == 0,
                       f"{bad}/{n} instances broke monotonicity")


# --------------------------------------------------------------------------
# LRSD witness

WITNESS = {"rho": 0.5, "x": (2.0, -3.0, 4.0, -4.1), "gamma": 0.2,
           "a": 2.0, "b": 4.0, "delta": 1.0, "eps": 0.1}


def witness_discriminant(a, b, delta, eps, rho):
    """Closed-form gap between the stage-two statistics at ``x*`` and
    ``x* + (eps/rho) g`` in the M = 4 intraclass reversal construction."""
    lead = 1.0 / (1.0 + rho - 2.0 * rho**2)
    quad = eps**2 * (rho - 1.0 + 1.0 / rho + 1.0 / rho**2)
    lin = eps * (2 * a / rho + 2 * a - 4 * a * rho - 2 * rho * delta + 2 * (1 + rho) * b)
    return lead * (4 * delta * b * rho - quad - lin)


def lrsd_witness(rho=0.5, x=WITNESS["x"], gamma=WITNESS["gamma"]):
    """Run two-sided LRSD at the witness point and its shift along ``g``.

    ``C_2`` is the stage-two statistic at ``x*`` itself, computed by the same
    code path the procedure uses, so ``x*`` sits exactly on the boundary.

    Returns
    -------
    dict with the schedule, both decisions, the direct stage-two difference
    and the closed-form discriminant.
    """
    x = np.asarray(x, dtype=float)
    model = CovarianceModel.intraclass(x.size, rho)
    g = model.column(0)
    first = res.quadratic_form(model, x)
    c2 = res.quadratic_form(model, x, ActiveSet.from_rejected(x.size, [3]))
    sched = CriticalSchedule([np.floor(first) - 30.0, c2, 20.0, 3.0])
    d0 = lrsd(x, model, sched, "two")
    d1 = lrsd(x + gamma * g, model, sched, "two")
    second = d1.stage_stats[1][2] if len(d1.stage_stats) > 1 else float("nan")
    return {
        "schedule": sched,
        "at_x": d0,
        "at_shift": d1,
        "direct_gap": c2 - second,
        "discriminant": witness_discriminant(WITNESS["a"], WITNESS["b"], WITNESS["delta"],
                                             WITNESS["eps"], rho),
    }


def check_witness():
    w = lrsd_witness()
    d0, d1 = w["at_x"], w["at_shift"]
    reversal = bool(d0.reject[0]) and not bool(d1.reject[0])
    agree = abs(w["direct_gap"] - w["discriminant"]) <= 1e-9
    x = np.asarray(WITNESS["x"])
    model = CovarianceModel.intraclass(4, WITNESS["rho"])
    mrd_rev = False
    for sched in (schedule_mrd_two_sided(4, 0.05), schedule_mrd_two_sided(4, 0.5, 0.5),
                  CriticalSchedule(np.sqrt(w["schedule"].values))):
        _, flags = sweep_along_column(x, model, sched, "two", 0.0, 6.0)
        if np.any(flags[:-1] & ~flags[1:]):
            mrd_rev = True
    ok = bool(reversal and agree and w["discriminant"] > 0 and not mrd_rev)
    return CheckResult(
        "LRSD reversal witness", ok,
        f"discriminant = {w['discriminant']:.6g} (direct {w['direct_gap']:.6g}); "
        f"LRSD rejects H1 at x*: {bool(d0.reject[0])}, at x*+gamma g: {bool(d1.reject[0])}; "
        f"MRD reversal: {mrd_rev}",
    )


def run_checks(closed_form=res.residual_changepoint_closed_form):
    """Run every check; ``closed_form`` replaces the change-point kernel."""
    return [
        check_covariance_kernels(),
        check_intraclass_fast(),
        check_changepoint_closed_form(closed_form=closed_form),
        check_structured_engines(),
        check_projection(),
        check_shift(),
        check_monotone_sweep(),
        check_witness(),
    ]
