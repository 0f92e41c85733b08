"""Estimator-style wrappers around the procedures.

Each class follows the scikit-learn conventions: hyperparameters are stored
verbatim by ``__init__`` (so ``get_params``/``set_params``/``clone`` work),
``fit`` validates them and resolves derived state into trailing-underscore
attributes, and ``predict`` maps observation vectors (rows of ``X``) to
boolean rejection flags.  Nothing is learned from data: the covariance is
known, so ``fit`` ignores ``X`` apart from checking its width.

>>> from mrdtest import CovarianceModel, MaximumResidualDown
>>> est = MaximumResidualDown(CovarianceModel.changepoint(2), schedule=[10, 9]).fit()
>>> est.predict([1.0, -1.0]).tolist()
[False, False]
"""

from __future__ import annotations

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_covariance, check_observations, check_variance
from .covariance import ActiveSet
from .critical_values import (
    CriticalSchedule,
    DunnettCalibration,
    schedule_mrd_two_sided,
    schedule_one_sided,
    schedule_step_down,
)
from .procedures import (
    bh_step_up,
    dunnett_step_down,
    holm_step_down_marginal,
    lrsd,
    marginal_pvalue,
    mrd,
)
from .residuals import residual_vector, studentize

__all__ = [
    "BenjaminiHochberg",
    "DunnettStepDown",
    "HolmStepDown",
    "LikelihoodRatioStepDown",
    "MaximumResidualDown",
]


class _Procedure(BaseEstimator):
    """Shared fit/predict plumbing."""

    def fit(self, X=None, y=None):
        self.model_ = check_covariance(self.covariance)
        self.n_hypotheses_ = self.model_.size
        if self.sided not in ("one", "two"):
            raise ValueError(f"sided must be 'one' or 'two', got {self.sided!r}")
        if X is not None:
            check_observations(X, self.n_hypotheses_)
        self._resolve()
        return self

    def _resolve(self):
        pass

    def decide(self, x, variance=None):
        """Apply the procedure to one observation vector.

        Returns
        -------
        DecisionVector
        """
        check_is_fitted(self, "model_")
        return self._decide(np.asarray(x, dtype=float), variance)

    def predict(self, X, s2=None, nu=None):
        """Rejection flags, one row per observation vector in ``X``."""
        check_is_fitted(self, "model_")
        X, single = check_observations(X, self.n_hypotheses_)
        variances = check_variance(s2, nu, X.shape[0])
        out = np.vstack([self._decide(x, v).reject for x, v in zip(X, variances)])
        return out[0] if single else out

    def fit_predict(self, X, y=None, s2=None, nu=None):
        return self.fit(X).predict(X, s2=s2, nu=nu)


def _as_schedule(schedule):
    return schedule if isinstance(schedule, CriticalSchedule) else CriticalSchedule(schedule)


class MaximumResidualDown(TransformerMixin, _Procedure):
    """Maximum residual down (MRD) step-down procedure.

    Parameters
    ----------
    covariance : CovarianceModel or array of shape (M, M)
    schedule : "auto" or sequence of float
        ``"auto"`` builds the two-sided recipe
        ``C_1 = Phi^{-1}(1 - alpha/2M)``, ``C_i = factor Phi^{-1}(1 - alpha/2(M-i+1))``
        or the one-sided recipe with ``alpha/M`` and ``factor`` (default 0.7).
    sided : {"two", "one"}
    alpha : float
    factor : float, optional
        Shrink factor for stages 2..M; defaults to 0.71 (two-sided) or 0.7
        (one-sided).
    studentize : {"s", "T"}
        How to scale residuals when a variance estimate accompanies the data.
    engine : {"auto", "generic"}

    Attributes
    ----------
    schedule_ : CriticalSchedule
    model_ : CovarianceModel
    """

    def __init__(self, covariance, schedule="auto", sided="two", alpha=0.05, factor=None,
                 studentize="s", engine="auto"):
        self.covariance = covariance
        self.schedule = schedule
        self.sided = sided
        self.alpha = alpha
        self.factor = factor
        self.studentize = studentize
        self.engine = engine

    def _resolve(self):
        M = self.n_hypotheses_
        if isinstance(self.schedule, str):
            if self.schedule != "auto":
                raise ValueError(f"unknown schedule {self.schedule!r}")
            if self.sided == "two":
                f = 0.71 if self.factor is None else self.factor
                self.schedule_ = schedule_mrd_two_sided(M, self.alpha, f)
            else:
                self.schedule_ = schedule_one_sided(M, self.alpha, "mrd", self.factor)
        else:
            self.schedule_ = _as_schedule(self.schedule)

    def _decide(self, x, variance):
        return mrd(x, self.model_, self.schedule_, self.sided, variance,
                   self.studentize, self.engine)

    def transform(self, X, s2=None, nu=None):
        """Stage-one residuals of every coordinate, one row per observation."""
        check_is_fitted(self, "model_")
        X, single = check_observations(X, self.n_hypotheses_)
        variances = check_variance(s2, nu, X.shape[0])
        full = ActiveSet.full(self.n_hypotheses_)
        rows = []
        for x, v in zip(X, variances):
            u = residual_vector(self.model_, full, x, self.engine)
            if v is not None:
                u = studentize(u, v[0], v[1], "s")
            rows.append(u.values)
        out = np.vstack(rows)
        return out[0] if single else out


class LikelihoodRatioStepDown(_Procedure):
    """Step-down on global likelihood ratio tests (LRSD).

    Parameters
    ----------
    schedule : "auto" or sequence of float
        ``"auto"``: one-sided uses ``1.25 C_1(SD)``, ``1.2 C_i(SD)`` on the
        max-coordinate scale (compared after squaring); two-sided uses
        chi-square (1 - alpha) quantiles with ``M - m + 1`` degrees of freedom.
    threshold_scale : {"auto", "statistic", "max"}
        How the schedule relates to the statistic; ``"auto"`` picks ``"max"``
        for the automatic one-sided schedule and ``"statistic"`` otherwise.
    """

    def __init__(self, covariance, schedule="auto", sided="one", alpha=0.05,
                 threshold_scale="auto"):
        self.covariance = covariance
        self.schedule = schedule
        self.sided = sided
        self.alpha = alpha
        self.threshold_scale = threshold_scale

    def _resolve(self):
        M = self.n_hypotheses_
        scale = self.threshold_scale
        if isinstance(self.schedule, str):
            if self.schedule != "auto":
                raise ValueError(f"unknown schedule {self.schedule!r}")
            if self.sided == "one":
                self.schedule_ = schedule_one_sided(M, self.alpha, "lrsd")
                auto_scale = "max"
            else:
                dof = np.arange(M, 0, -1)
                self.schedule_ = CriticalSchedule(
                    stats.chi2.isf(self.alpha, dof),
                    {"family": "chi2", "alpha": self.alpha, "M": M},
                )
                auto_scale = "statistic"
        else:
            self.schedule_ = _as_schedule(self.schedule)
            auto_scale = "statistic"
        self.threshold_scale_ = auto_scale if scale == "auto" else scale

    def _decide(self, x, variance):
        if variance is not None:
            raise ValueError("LRSD here assumes a known variance")
        return lrsd(x, self.model_, self.schedule_, self.sided, self.threshold_scale_)


class BenjaminiHochberg(_Procedure):
    """Step-up at FDR level ``q`` on marginal p-values."""

    def __init__(self, covariance, q=0.05, sided="two"):
        self.covariance = covariance
        self.q = q
        self.sided = sided

    def _decide(self, x, variance):
        return bh_step_up(marginal_pvalue(x, self.model_, self.sided, variance), self.q)


class HolmStepDown(_Procedure):
    """Step-down at familywise level ``alpha`` on marginal p-values."""

    def __init__(self, covariance, alpha=0.05, sided="two"):
        self.covariance = covariance
        self.alpha = alpha
        self.sided = sided

    def _resolve(self):
        self.schedule_ = schedule_step_down(self.n_hypotheses_, self.alpha, self.sided)

    def _decide(self, x, variance):
        return holm_step_down_marginal(
            marginal_pvalue(x, self.model_, self.sided, variance), self.alpha
        )


class DunnettStepDown(_Procedure):
    """Step-down with Monte Carlo Dunnett constants for an intraclass model.

    Parameters
    ----------
    draws, seed : int
        Monte Carlo size and seed for the calibration done in ``fit``.
    cache_path : str, optional
        JSON sidecar for reusing calibrations across runs.
    """

    def __init__(self, covariance, alpha=0.05, sided="one", draws=200_000, seed=0,
                 cache_path=None, workers=1):
        self.covariance = covariance
        self.alpha = alpha
        self.sided = sided
        self.draws = draws
        self.seed = seed
        self.cache_path = cache_path
        self.workers = workers

    def _resolve(self):
        if self.model_.kind != "intraclass":
            raise ValueError("Dunnett step-down needs an intraclass covariance")
        self.calibration_ = DunnettCalibration.compute(
            self.n_hypotheses_, self.model_.rho, self.alpha, self.draws, self.seed,
            self.sided == "two", self.workers, self.cache_path,
        )

    def _decide(self, x, variance):
        if variance is not None:
            raise ValueError("Dunnett step-down here assumes a known variance")
        return dunnett_step_down(x, self.model_.rho, self.alpha, self.calibration_,
                                 self.sided, self.model_.scale)
