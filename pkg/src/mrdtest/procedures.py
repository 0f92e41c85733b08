"""Multiple testing procedures.

Every procedure returns a :class:`DecisionVector`.  Indices are 0-based.
The reject rule is ``statistic >= threshold`` throughout, so a statistic
sitting exactly on its constant is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .covariance import ActiveSet, submatrix_precision
from .critical_values import CriticalSchedule, DunnettCalibration
from .exceptions import ParameterDomainError
from .projection import one_sided_lrt
from .residuals import quadratic_form, residual_vector, studentize

__all__ = [
    "DecisionVector",
    "bh_step_up",
    "dunnett_step_down",
    "holm_step_down_marginal",
    "lrsd",
    "marginal_pvalue",
    "mrd",
]

SIDES = ("two", "one")


@dataclass
class DecisionVector:
    """Outcome of a multiple testing procedure.

    Attributes
    ----------
    reject : ndarray of bool
        One flag per hypothesis.
    order : tuple of int
        Rejected indices in the order they were rejected.
    statistic, threshold : ndarray
        For a rejected hypothesis, the statistic and constant at the step that
        rejected it.  For an accepted one, its statistic and the constant at
        the step where the procedure stopped (NaN if it was never examined).
    stage_stats : list of (stage, index, statistic, threshold)
        One entry per step that was evaluated, including the stopping step.
    """

    reject: np.ndarray
    order: tuple
    statistic: np.ndarray
    threshold: np.ndarray
    stage_stats: list = field(default_factory=list)

    @property
    def n_rejected(self):
        return len(self.order)

    def rows(self):
        """(index, statistic, threshold, rejected) per hypothesis."""
        return [
            (j, float(self.statistic[j]), float(self.threshold[j]), bool(self.reject[j]))
            for j in range(self.reject.size)
        ]


def _check_sided(sided):
    if sided not in SIDES:
        raise ValueError(f"sided must be 'one' or 'two', got {sided!r}")


def _as_schedule(schedule, M):
    if not isinstance(schedule, CriticalSchedule):
        schedule = CriticalSchedule(schedule)
    if len(schedule) != M:
        raise ParameterDomainError(
            f"schedule has {len(schedule)} constants but there are {M} hypotheses"
        )
    return schedule


def _empty_decision(M):
    return (
        np.zeros(M, dtype=bool),
        np.full(M, np.nan),
        np.full(M, np.nan),
    )


def mrd(x, model, schedule, sided="two", variance=None, studentize_mode="s", engine="auto"):
    """Maximum residual down.

    At each stage the standardized conditional residuals of the remaining
    coordinates are computed; the hypothesis with the largest ``|U|`` (or
    ``U`` when one-sided) is rejected if that value reaches the stage
    constant, otherwise every remaining hypothesis is accepted.

    Parameters
    ----------
    x : array_like, shape (M,)
    model : CovarianceModel
    schedule : CriticalSchedule or sequence of float
    sided : {"two", "one"}
    variance : (s2, nu), optional
        Independent variance estimate; the residuals are then studentized and
        ``model.scale`` should exclude ``sigma^2``.
    studentize_mode : {"s", "T"}
    engine : {"auto", "generic"}
    """
    _check_sided(sided)
    x = np.asarray(x, dtype=float)
    M = model.size
    if x.shape != (M,):
        raise ValueError(f"observation has shape {x.shape}, expected ({M},)")
    sched = _as_schedule(schedule, M)
    quad = None
    if variance is not None and studentize_mode == "T":
        quad = quadratic_form(model, x)

    reject, statistic, threshold = _empty_decision(M)
    stage_stats = []
    active = ActiveSet.full(M)
    for m in range(M):
        u = residual_vector(model, active, x, engine=engine)
        if variance is not None:
            u = studentize(u, variance[0], variance[1], studentize_mode, quad)
        score = np.abs(u.values) if sided == "two" else u.values
        pos = int(np.argmax(score))
        j = active.remaining[pos]
        c = float(sched[m])
        stage_stats.append((m + 1, j, float(score[pos]), c))
        if score[pos] >= c:
            reject[j] = True
            statistic[j] = score[pos]
            threshold[j] = c
            active = active.reject(j)
        else:
            idx = active.indices()
            statistic[idx] = score
            threshold[idx] = c
            break
    return DecisionVector(reject, active.rejected, statistic, threshold, stage_stats)


def _stage_precision(model, idx):
    if model.kind == "intraclass":
        from .covariance import intraclass_inverse

        return intraclass_inverse(model.rho, idx.size) / model.scale
    sub = model.to_dense()[np.ix_(idx, idx)]
    return np.linalg.inv(sub)


def lrsd(x, model, schedule, sided="two", threshold_scale="statistic"):
    """Likelihood-ratio step-down.

    Stage ``m`` tests the global null on the remaining coordinates: two-sided
    with ``x_A' Sigma_A^{-1} x_A``, one-sided with the constrained statistic
    ``x_A' Sigma_A^{-1} x_A - min_{mu >= 0} (x_A - mu)' Sigma_A^{-1} (x_A - mu)``.
    On rejection the remaining coordinate with the largest standardized
    ``|x_j|`` (two-sided) or ``x_j`` (one-sided) is removed.

    Parameters
    ----------
    threshold_scale : {"statistic", "max"}
        ``"statistic"`` compares the global statistic with ``C_m`` directly.
        ``"max"`` treats the schedule as max-coordinate (z scale) constants and
        compares with ``C_m ** 2``.
    """
    _check_sided(sided)
    x = np.asarray(x, dtype=float)
    M = model.size
    if x.shape != (M,):
        raise ValueError(f"observation has shape {x.shape}, expected ({M},)")
    sched = _as_schedule(schedule, M)
    if threshold_scale == "max":
        consts = sched.values**2
    elif threshold_scale == "statistic":
        consts = sched.values
    else:
        raise ValueError(f"unknown threshold_scale {threshold_scale!r}")
    z = x / np.sqrt(model.diagonal())

    reject, statistic, threshold = _empty_decision(M)
    stage_stats = []
    active = ActiveSet.full(M)
    for m in range(M):
        idx = active.indices()
        xa = x[idx]
        if sided == "two":
            pv, _ = submatrix_precision(model, active, xa)
            stat = float(xa @ pv)
            pos = int(np.argmax(np.abs(z[idx])))
        else:
            stat = one_sided_lrt(xa, precision=_stage_precision(model, idx))
            pos = int(np.argmax(z[idx]))
        j = active.remaining[pos]
        c = float(consts[m])
        stage_stats.append((m + 1, j, stat, c))
        if stat >= c:
            reject[j] = True
            statistic[j] = stat
            threshold[j] = c
            active = active.reject(j)
        else:
            statistic[idx] = stat
            threshold[idx] = c
            break
    return DecisionVector(reject, active.rejected, statistic, threshold, stage_stats)


def _check_pvalues(pvalues):
    p = np.asarray(pvalues, dtype=float).ravel()
    if np.any(np.isnan(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    return p


def _check_unit(level, name):
    if not 0.0 < level < 1.0:
        raise ParameterDomainError(f"{name} must lie in (0, 1), got {level}")


def bh_step_up(pvalues, q=0.05):
    """Benjamini-Hochberg step-up at FDR level ``q``."""
    _check_unit(q, "q")
    p = _check_pvalues(pvalues)
    M = p.size
    order = np.argsort(p, kind="stable")
    crit = q * np.arange(1, M + 1) / M
    below = np.flatnonzero(p[order] <= crit)
    k = below[-1] + 1 if below.size else 0
    reject = np.zeros(M, dtype=bool)
    reject[order[:k]] = True
    threshold = np.empty(M)
    threshold[order] = crit
    stage_stats = [(r + 1, int(order[r]), float(p[order[r]]), float(crit[r])) for r in range(M)]
    return DecisionVector(reject, tuple(int(j) for j in order[:k]), p.copy(), threshold,
                          stage_stats)


def holm_step_down_marginal(pvalues, alpha=0.05):
    """Holm step-down on marginal p-values at familywise level ``alpha``."""
    _check_unit(alpha, "alpha")
    p = _check_pvalues(pvalues)
    M = p.size
    order = np.argsort(p, kind="stable")
    crit = alpha / np.arange(M, 0, -1)
    reject = np.zeros(M, dtype=bool)
    threshold = np.full(M, np.nan)
    stage_stats = []
    k = 0
    for r in range(M):
        j = int(order[r])
        stage_stats.append((r + 1, j, float(p[j]), float(crit[r])))
        if p[j] <= crit[r]:
            reject[j] = True
            threshold[j] = crit[r]
            k += 1
        else:
            threshold[order[r:]] = crit[r]
            break
    return DecisionVector(reject, tuple(int(j) for j in order[:k]), p.copy(), threshold,
                          stage_stats)


def dunnett_step_down(x, rho, alpha=0.05, calib=None, sided="one", scale=1.0, **calib_kw):
    """Step-down with Dunnett-type constants for equicorrelated statistics.

    With ``k`` hypotheses left, the largest remaining standardized statistic is
    rejected when it reaches the (1 - alpha) quantile of the max of ``k``
    equicorrelated standard normals.

    Parameters
    ----------
    calib : DunnettCalibration, optional
        Precomputed constants; computed on the fly (Monte Carlo) if omitted.
    """
    _check_sided(sided)
    z = np.asarray(x, dtype=float) / np.sqrt(scale)
    M = z.size
    if calib is None:
        calib = DunnettCalibration.compute(M, rho, alpha, two_sided=(sided == "two"), **calib_kw)
    calib.check_compatible(rho, alpha, sided == "two")
    score = np.abs(z) if sided == "two" else z
    order = np.argsort(-score, kind="stable")
    reject, statistic, threshold = _empty_decision(M)
    statistic[:] = score
    stage_stats = []
    k = 0
    for r in range(M):
        j = int(order[r])
        c = calib.threshold(M - r)
        stage_stats.append((r + 1, j, float(score[j]), c))
        if score[j] >= c:
            reject[j] = True
            threshold[j] = c
            k += 1
        else:
            threshold[order[r:]] = c
            break
    return DecisionVector(reject, tuple(int(j) for j in order[:k]), statistic, threshold,
                          stage_stats)


def marginal_pvalue(x, model, sided="two", variance=None):
    """P-values from the marginal distribution of each coordinate.

    Each ``x_j`` is standardized by ``sqrt(scale * sigma_jj)``.  With
    ``variance=(s2, nu)`` the result is a t statistic with ``nu`` degrees of
    freedom.
    """
    _check_sided(sided)
    x = np.asarray(x, dtype=float)
    sd = np.sqrt(model.diagonal())
    if x.ndim == 0:
        sd = sd[0]
    z = x / sd
    if variance is None:
        dist = stats.norm
    else:
        s2, nu = variance
        z = z / np.sqrt(s2)
        dist = stats.t(nu)
    out = 2.0 * dist.sf(np.abs(z)) if sided == "two" else dist.sf(z)
    out = np.minimum(out, 1.0)
    return float(out) if np.ndim(out) == 0 else out
