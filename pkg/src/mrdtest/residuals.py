"""Standardized conditional residuals of the remaining coordinates.

For an active index set ``A`` and precision ``P = (scale * Sigma_A)^{-1}``
the residual of coordinate ``j`` given the other active coordinates is

    U_j = (x_j - E0[x_j | x_{A \\ j}]) / sd(x_j | x_{A \\ j}) = (P x_A)_j / sqrt(P_jj)

so one solve per stage yields the whole vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .covariance import ActiveSet, submatrix_precision
from .exceptions import FactorizationError, ParameterDomainError

__all__ = [
    "ResidualVector",
    "changepoint_residuals",
    "conditional_pvalue",
    "quadratic_form",
    "residual_changepoint_closed_form",
    "residual_vector",
    "residual_vector_generic",
    "residual_vector_intraclass_fast",
    "studentize",
]

# Conditional variances at or below this are treated as a degenerate model.
MIN_COND_VAR = 1e-14


@dataclass(frozen=True)
class ResidualVector:
    """Residuals at one stage, aligned with ``active.remaining``."""

    stage: int
    values: np.ndarray
    active: ActiveSet

    def as_dict(self):
        return dict(zip(self.active.remaining, self.values.tolist()))

    def __len__(self):
        return self.values.size


def _finish(active, pv, diag):
    if np.any(diag >= 1.0 / MIN_COND_VAR):
        bad = [active.remaining[k] for k in np.flatnonzero(diag >= 1.0 / MIN_COND_VAR)]
        raise FactorizationError("conditional variance is numerically zero", bad)
    values = pv / np.sqrt(diag)
    return ResidualVector(active.stage, values, active)


def _as_active(model, active):
    if active is None:
        return ActiveSet.full(model.size)
    return active


def _check_x(model, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.size,):
        raise ValueError(f"observation has shape {x.shape}, expected ({model.size},)")
    return x


def residual_vector_generic(model, active, x):
    """Residuals by dense Cholesky on the active principal submatrix.

    This path ignores any structure in ``model`` and serves as the reference
    the structured paths are checked against.
    """
    active = _as_active(model, active)
    x = _check_x(model, x)
    idx = active.indices()
    sub = model.to_dense()[np.ix_(idx, idx)]
    try:
        L = linalg.cholesky(sub, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError("active submatrix is not positive definite", idx) from exc
    pv = linalg.cho_solve((L, True), x[idx])
    Linv = linalg.solve_triangular(L, np.eye(idx.size), lower=True)
    diag = np.einsum("ij,ij->j", Linv, Linv)
    return _finish(active, pv, diag)


def residual_vector_intraclass_fast(rho, active, x, scale=1.0):
    """Residuals for an intraclass model in O(p) from the running sum.

    With ``p`` active coordinates and ``S`` their sum, the residual of
    coordinate ``j`` is proportional to ``x_j - c (S - x_j)`` where
    ``c = rho / (1 + (p - 2) rho)``.
    """
    x = np.asarray(x, dtype=float)
    if active is None:
        active = ActiveSet.full(x.size)
    xa = x[active.indices()]
    p = xa.size
    if p == 1:
        return ResidualVector(active.stage, xa / np.sqrt(scale), active)
    if rho >= 1.0 or 1.0 + (p - 1) * rho <= 0.0:
        raise ParameterDomainError(f"intraclass rho={rho} is not valid for size {p}")
    denom = 1.0 + (p - 2) * rho
    c = rho / denom
    cond_var = scale * (1.0 - rho) * (1.0 + (p - 1) * rho) / denom
    if cond_var <= MIN_COND_VAR:
        raise FactorizationError("conditional variance is numerically zero", active.remaining)
    resid = xa - c * (xa.sum() - xa)
    return ResidualVector(active.stage, resid / np.sqrt(cond_var), active)


def residual_changepoint_closed_form(zbar, rejected, i):
    """Pooled-means statistic for change-point difference ``i``.

    ``zbar`` holds the ``M + 1`` sample means and ``X_i = zbar[i+1] - zbar[i]``.
    The statistic compares the means on either side of the boundary inside the
    segment delimited by the nearest rejected differences (or the ends of the
    sequence).  It equals the generic residual up to a global sign: this
    orientation is mean(left) - mean(right).  Unit ``sigma^2 / n``.
    """
    zbar = np.asarray(zbar, dtype=float)
    M = zbar.size - 1
    rej = sorted(int(j) for j in rejected)
    i = int(i)
    if i in rej:
        raise ParameterDomainError(f"difference {i} has already been rejected")
    if not 0 <= i < M:
        raise ParameterDomainError(f"difference index {i} out of range for M={M}")
    # 1-based positions with sentinels 0 and M + 1
    i1 = i + 1
    lo = max((j + 1 for j in rej if j < i), default=0)
    hi = min((j + 1 for j in rej if j > i), default=M + 1)
    csum = np.concatenate(([0.0], np.cumsum(zbar)))
    n1 = i1 - lo
    n2 = hi - i1
    length = hi - lo
    left = csum[i1] - csum[lo]
    total = csum[hi] - csum[lo]
    return float(np.sqrt(length / (n1 * n2)) * (left - n1 * total / length))


def changepoint_residuals(x, active, scale=1.0):
    """All change-point residuals at one stage, in the generic orientation.

    Vectorized form of :func:`residual_changepoint_closed_form`.  The pooled
    means are recovered from the differences up to an additive constant, which
    the statistic ignores.
    """
    x = np.asarray(x, dtype=float)
    M = x.size
    if active is None:
        active = ActiveSet.full(M)
    csum = np.concatenate(([0.0, 0.0], np.cumsum(np.cumsum(x))))
    i1 = active.indices() + 1
    rej = np.sort(np.asarray(active.rejected, dtype=np.intp)) + 1
    bounds = np.concatenate(([0], rej, [M + 1]))
    pos = np.searchsorted(bounds, i1)
    lo = bounds[pos - 1]
    hi = bounds[pos]
    n1 = i1 - lo
    length = hi - lo
    left = csum[i1] - csum[lo]
    total = csum[hi] - csum[lo]
    stat = np.sqrt(length / (n1 * (hi - i1))) * (left - n1 * total / length)
    return ResidualVector(active.stage, -stat / np.sqrt(scale), active)


def residual_vector(model, active, x, engine="auto"):
    """Residual vector using the fastest exact path available for ``model``.

    Parameters
    ----------
    engine : {"auto", "generic"}
        ``"generic"`` forces the dense reference computation.
    """
    active = _as_active(model, active)
    if engine == "generic":
        return residual_vector_generic(model, active, x)
    if engine != "auto":
        raise ValueError(f"unknown engine {engine!r}")
    x = _check_x(model, x)
    if model.kind == "intraclass":
        return residual_vector_intraclass_fast(model.rho, active, x, model.scale)
    if model.kind == "changepoint":
        return changepoint_residuals(x, active, model.scale)
    if model.kind == "successive":
        pv, diag = submatrix_precision(model, active, x[active.indices()])
        return _finish(active, pv, diag)
    return residual_vector_generic(model, active, x)


def quadratic_form(model, x, active=None):
    """``x_A' (scale * Sigma_A)^{-1} x_A``."""
    active = _as_active(model, active)
    xa = np.asarray(x, dtype=float)[active.indices()]
    pv, _ = submatrix_precision(model, active, xa)
    return float(xa @ pv)


def studentize(u, s2, nu, mode="s", quad=None):
    """Scale residuals by an independent variance estimate.

    Parameters
    ----------
    u : ResidualVector
    s2 : float
        Unbiased estimate of ``sigma^2`` with ``nu`` degrees of freedom.
    mode : {"s", "T"}
        ``"s"`` divides by ``sqrt(s2)``.  ``"T"`` divides by
        ``sqrt(nu * s2 + quad)`` where ``quad`` is ``x' Sigma^{-1} x``.
    """
    if not s2 > 0:
        raise ValueError("s2 must be positive")
    if nu < 1:
        raise ValueError("nu must be at least 1")
    if mode == "s":
        denom = np.sqrt(s2)
    elif mode == "T":
        if quad is None:
            raise ValueError("mode 'T' needs the quadratic form")
        denom = np.sqrt(nu * s2 + quad)
    else:
        raise ValueError(f"unknown studentization mode {mode!r}")
    return ResidualVector(u.stage, u.values / denom, u.active)


def conditional_pvalue(u, sided="two"):
    """Normal tail probability of a residual under the conditional null."""
    u = np.asarray(u, dtype=float)
    if sided == "two":
        out = 2.0 * special.ndtr(-np.abs(u))
    elif sided == "one":
        out = special.ndtr(-u)
    else:
        raise ValueError(f"sided must be 'one' or 'two', got {sided!r}")
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out
