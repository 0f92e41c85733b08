"""Projection onto the nonnegative orthant in a Mahalanobis metric.

Solves ``min_{mu >= 0} (x - mu)' P (x - mu)`` for a positive definite ``P``
with a Lawson-Hanson style primal active-set method.  The one-sided global
likelihood ratio statistic is ``x' P x`` minus the optimal value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import FactorizationError, NumericalFailure

__all__ = ["Projection", "project_nonneg_orthant", "one_sided_lrt"]


@dataclass(frozen=True)
class Projection:
    """Result of the orthant projection.

    ``multipliers`` is ``P (x - mu)``; at the optimum it is nonpositive and
    vanishes wherever ``mu`` is positive.
    """

    mu: np.ndarray
    objective: float
    multipliers: np.ndarray
    iterations: int

    def kkt_residual(self):
        s = self.multipliers
        return max(
            float(np.max(s, initial=0.0)),
            float(np.max(np.abs(self.mu * s), initial=0.0)),
            float(np.max(-self.mu, initial=0.0)),
        )


def _precision_from_cov(cov):
    try:
        c = linalg.cho_factor(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError("covariance submatrix is not positive definite") from exc
    return linalg.cho_solve(c, np.eye(cov.shape[0]))


def project_nonneg_orthant(x, cov=None, *, precision=None, max_iter=None):
    """Project ``x`` onto ``{mu >= 0}`` in the metric of ``cov^{-1}``.

    Parameters
    ----------
    x : array_like, shape (p,)
    cov : array_like, shape (p, p), optional
        Covariance submatrix.  Ignored when ``precision`` is given.
    precision : array_like, shape (p, p), optional
        Its inverse, if already available.
    max_iter : int, optional
        Guard on active-set changes; default ``2 ** min(p, 30)``.

    Returns
    -------
    Projection
    """
    x = np.asarray(x, dtype=float).ravel()
    p = x.size
    if precision is None:
        if cov is None:
            raise ValueError("either cov or precision is required")
        P = _precision_from_cov(np.asarray(cov, dtype=float))
    else:
        P = np.asarray(precision, dtype=float)
    if P.shape != (p, p):
        raise ValueError("metric matrix shape does not match x")
    if max_iter is None:
        max_iter = 2 ** min(p, 30)

    Px = P @ x
    scale = max(1.0, float(np.abs(Px).max(initial=0.0)))
    tol = 1e-12 * scale
    mu = np.zeros(p)
    free = np.zeros(p, dtype=bool)
    s = Px.copy()
    it = 0

    while True:
        cand = np.flatnonzero(~free & (s > tol))
        if cand.size == 0:
            break
        free[cand[np.argmax(s[cand])]] = True
        while True:
            it += 1
            if it > max_iter:
                raise NumericalFailure(
                    f"orthant projection did not settle within {max_iter} active-set changes"
                )
            idx = np.flatnonzero(free)
            z = np.zeros(p)
            if idx.size == 0:
                mu = z
                break
            z[idx] = linalg.solve(P[np.ix_(idx, idx)], Px[idx], assume_a="pos")
            if np.all(z[idx] > 0):
                mu = z
                break
            neg = idx[z[idx] <= 0]
            step = np.min(mu[neg] / (mu[neg] - z[neg]))
            mu = mu + step * (z - mu)
            drop = free & (mu <= tol * 1e-3)
            drop[neg[np.argmin(mu[neg] / (mu[neg] - z[neg]))]] = True
            mu[drop] = 0.0
            free &= ~drop
        s = Px - P @ mu

    resid = x - mu
    s = P @ resid
    return Projection(mu, float(resid @ s), s, it)


def one_sided_lrt(x, cov=None, *, precision=None):
    """``x' P x - min_{mu >= 0} (x - mu)' P (x - mu)``."""
    x = np.asarray(x, dtype=float).ravel()
    if precision is None:
        precision = _precision_from_cov(np.asarray(cov, dtype=float))
    proj = project_nonneg_orthant(x, precision=precision)
    return max(0.0, float(x @ precision @ x) - proj.objective)
