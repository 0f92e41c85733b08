"""Input checks shared by the estimators and the CLI."""

import numpy as np
from sklearn.utils import check_array

from .covariance import CovarianceModel


def check_observations(X, n_hypotheses=None):
    """Return ``X`` as a 2-D float array of observation vectors and a flag
    telling whether the input was a single 1-D vector."""
    single = np.ndim(X) == 1
    X = check_array(np.atleast_2d(X) if single else X, dtype=np.float64)
    if n_hypotheses is not None and X.shape[1] != n_hypotheses:
        raise ValueError(
            f"observations have {X.shape[1]} coordinates but the model has {n_hypotheses}"
        )
    return X, single


def check_variance(s2, nu, n_rows):
    """Broadcast an optional variance estimate to one ``(s2, nu)`` per row."""
    if s2 is None:
        if nu is not None:
            raise ValueError("nu given without s2")
        return [None] * n_rows
    if nu is None:
        raise ValueError("s2 given without nu")
    s2 = np.broadcast_to(np.asarray(s2, dtype=float), (n_rows,))
    nu = np.broadcast_to(np.asarray(nu), (n_rows,))
    if np.any(s2 <= 0) or np.any(nu < 1):
        raise ValueError("s2 must be positive and nu at least 1")
    return [(float(a), int(b)) for a, b in zip(s2, nu)]


def check_covariance(covariance):
    if isinstance(covariance, CovarianceModel):
        return covariance
    arr = np.asarray(covariance, dtype=float)
    if arr.ndim == 2:
        return CovarianceModel.dense(arr)
    raise TypeError("covariance must be a CovarianceModel or a square matrix")
