"""Critical-value schedules and the quantile machinery behind them."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .exceptions import ParameterDomainError, ScheduleError

__all__ = [
    "CriticalSchedule",
    "DunnettCalibration",
    "MaxQuantile",
    "dunnett_table",
    "mc_max_quantile",
    "normal_quantile",
    "normal_upper_quantile",
    "schedule_mrd_two_sided",
    "schedule_one_sided",
    "schedule_step_down",
    "stream",
]

# Rational approximation to the normal quantile (P. J. Acklam).  Accurate to
# about 1e-9 relative before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _lower_quantile(p):
    """Quantile for p in (0, 0.5]; returns values <= 0."""
    x = np.empty_like(p)
    tail = p < _P_LOW
    q = np.sqrt(-2.0 * np.log(p[tail]))
    x[tail] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    )
    mid = ~tail
    q = p[mid] - 0.5
    r = q * q
    x[mid] = (
        (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    )
    # one Halley step against the full-precision CDF
    xm = x[mid]
    e = special.ndtr(xm) - p[mid]
    u = e * np.sqrt(2.0 * np.pi) * np.exp(0.5 * xm * xm)
    x[mid] = xm - u / (1.0 + 0.5 * xm * u)
    # tail: Newton on log Phi, which stays accurate down to the smallest doubles
    if np.any(tail):
        xt, target = x[tail], np.log(p[tail])
        for _ in range(8):
            lp = special.log_ndtr(xt)
            log_pdf = -0.5 * xt * xt - 0.5 * np.log(2.0 * np.pi)
            xt = xt - (lp - target) * np.exp(lp - log_pdf)
        x[tail] = xt
    return x


def normal_quantile(p):
    """Inverse of the standard normal CDF.

    Works on scalars or arrays.  Probabilities above one half are mapped
    through the symmetry ``Phi^{-1}(p) = -Phi^{-1}(1 - p)`` so the refinement
    always runs in the lower tail, where ``Phi`` keeps full relative accuracy.
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ParameterDomainError("probability must lie strictly between 0 and 1")
    flat = np.atleast_1d(p).ravel()
    upper = flat > 0.5
    work = np.where(upper, 1.0 - flat, flat)
    x = _lower_quantile(work)
    x = np.where(upper, -x, x)
    x[flat == 0.5] = 0.0
    out = x.reshape(p.shape)
    return float(out) if out.ndim == 0 else out


def normal_upper_quantile(q):
    """``Phi^{-1}(1 - q)`` without forming ``1 - q`` (exact for tiny q)."""
    q = np.asarray(q, dtype=float)
    if np.any(~((q > 0.0) & (q < 1.0))):
        raise ParameterDomainError("tail probability must lie strictly between 0 and 1")
    out = -np.asarray(normal_quantile(q))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# schedules


@dataclass(frozen=True, eq=False)
class CriticalSchedule:
    """Strictly decreasing positive constants, one per stage."""

    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ScheduleError("schedule is empty")
        bad = np.flatnonzero(~np.isfinite(v) | (v <= 0))
        if bad.size:
            k = int(bad[0])
            raise ScheduleError(
                f"stage {k + 1}: constant {float(v[k])!r} is not a positive number", k + 1
            )
        steps = np.flatnonzero(np.diff(v) >= 0)
        if steps.size:
            k = int(steps[0]) + 1
            raise ScheduleError(
                f"stage {k + 1}: constant {float(v[k])!r} is not below stage {k} "
                f"constant {float(v[k - 1])!r}; schedules must be strictly decreasing",
                k + 1,
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def __getitem__(self, k):
        return self.values[k]

    def __eq__(self, other):
        if not isinstance(other, CriticalSchedule):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def squared(self):
        """Schedule on the squared scale, for quadratic-form statistics."""
        prov = dict(self.provenance, squared=True)
        return CriticalSchedule(self.values**2, prov)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["stage", "value"])
            for k, c in enumerate(self.values, start=1):
                w.writerow([k, repr(float(c))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["stage"]))
        return cls([float(r["value"]) for r in rows], {"family": "file", "path": str(path)})


def _check_level(alpha):
    if not 0.0 < alpha < 1.0:
        raise ParameterDomainError(f"alpha must lie in (0, 1), got {alpha}")


def schedule_mrd_two_sided(M, alpha=0.05, factor=0.71):
    """Two-sided MRD constants.

    ``C_1 = Phi^{-1}(1 - alpha / 2M)`` and, for stage ``i >= 2``,
    ``C_i = factor * Phi^{-1}(1 - alpha / (2 (M - i + 1)))``.
    """
    M = int(M)
    _check_level(alpha)
    if not 0.0 < factor <= 1.0:
        raise ParameterDomainError(f"factor must lie in (0, 1], got {factor}")
    remaining = np.arange(M, 0, -1, dtype=float)
    c = normal_upper_quantile(alpha / (2.0 * remaining))
    c = np.atleast_1d(c)
    c[1:] *= factor
    return CriticalSchedule(
        c, {"family": "mrd_two_sided", "alpha": alpha, "factor": factor, "M": M}
    )


def schedule_step_down(M, alpha=0.05, sided="one"):
    """Bonferroni-Holm constants on the z scale, ``Phi^{-1}(1 - alpha/(M-i+1))``.

    Halve ``alpha`` for two-sided use.
    """
    M = int(M)
    _check_level(alpha)
    remaining = np.arange(M, 0, -1, dtype=float)
    a = alpha if sided == "one" else alpha / 2.0
    c = np.atleast_1d(normal_upper_quantile(a / remaining))
    return CriticalSchedule(c, {"family": "sd_base", "alpha": alpha, "sided": sided, "M": M})


def schedule_one_sided(M, alpha=0.05, family="mrd", factor=None, first_factor=None):
    """One-sided schedules built from the step-down base ``C_i(SD)``.

    Families
    --------
    ``"sd_base"``
        ``C_i(SD) = Phi^{-1}(1 - alpha / (M - i + 1))``.
    ``"mrd"``
        ``C_1 = C_1(SD)``, ``C_i = 0.7 C_i(SD)`` for ``i >= 2``.
    ``"lrsd"``
        ``C_1 = 1.25 C_1(SD)``, ``C_i = 1.2 C_i(SD)`` for ``i >= 2``.  These are
        on the max-coordinate scale; see :func:`mrdtest.procedures.lrsd`.
    """
    base = schedule_step_down(M, alpha, "one").values.copy()
    if family == "sd_base":
        return CriticalSchedule(base, {"family": "sd_base", "alpha": alpha, "M": int(M)})
    if family == "mrd":
        first = 1.0 if first_factor is None else first_factor
        rest = 0.7 if factor is None else factor
    elif family == "lrsd":
        first = 1.25 if first_factor is None else first_factor
        rest = 1.2 if factor is None else factor
    else:
        raise ValueError(f"unknown schedule family {family!r}")
    base[0] *= first
    base[1:] *= rest
    return CriticalSchedule(
        base,
        {"family": f"{family}_one_sided", "alpha": alpha, "factor": rest,
         "first_factor": first, "M": int(M)},
    )


# --------------------------------------------------------------------------
# Monte Carlo calibration


def stream(seed, *key):
    """Independent counter-based generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class MaxQuantile:
    threshold: float
    se: float
    draws: int


def _batch_maxima_quantiles(k_max, rho, alpha, n, rng, two_sided):
    """Per-k empirical (1 - alpha) quantiles of the running max in one batch."""
    if rho >= 0:
        w0 = rng.standard_normal(n)
        w = rng.standard_normal((k_max, n))
        x = np.sqrt(rho) * w0 + np.sqrt(1.0 - rho) * w
    else:
        from .covariance import CovarianceModel, cholesky_factor

        L = cholesky_factor(CovarianceModel.intraclass(k_max, rho))
        x = L @ rng.standard_normal((k_max, n))
    if two_sided:
        np.abs(x, out=x)
    np.maximum.accumulate(x, axis=0, out=x)
    return np.quantile(x, 1.0 - alpha, axis=1)


def _batch_task(args):
    k_max, rho, alpha, n, seed, b, two_sided = args
    return _batch_maxima_quantiles(k_max, rho, alpha, n, stream(seed, 0xD0, b), two_sided)


def dunnett_table(k_max, rho, alpha=0.05, draws=200_000, seed=0, two_sided=False,
                  batches=20, workers=1):
    """Monte Carlo (1 - alpha) quantiles of the max of k equicorrelated normals.

    Returns thresholds and standard errors for ``k = 1, ..., k_max``.  Draws
    are split into ``batches`` fixed substreams keyed by ``(seed, batch)``; the
    estimate is the mean of the batch quantiles and the standard error is the
    batch-means standard error, so results do not depend on ``workers``.

    For ``rho >= 0`` the one-factor representation
    ``X_i = sqrt(rho) W_0 + sqrt(1 - rho) W_i`` is used; negative ``rho``
    falls back to Cholesky sampling.
    """
    k_max = int(k_max)
    if k_max < 1:
        raise ParameterDomainError("k must be at least 1")
    _check_level(alpha)
    if rho >= 1.0 or 1.0 + (k_max - 1) * rho <= 0.0:
        raise ParameterDomainError(f"rho={rho} is not a valid equicorrelation for k={k_max}")
    batches = max(2, int(batches))
    n = max(1, int(draws) // batches)
    tasks = [(k_max, float(rho), alpha, n, seed, b, two_sided) for b in range(batches)]
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_batch = list(ex.map(_batch_task, tasks))
    else:
        per_batch = [_batch_task(t) for t in tasks]
    q = np.vstack(per_batch)
    est = q.mean(axis=0)
    se = q.std(axis=0, ddof=1) / np.sqrt(batches)
    return est, se


def mc_max_quantile(k, rho, alpha=0.05, draws=1_000_000, seed=0, two_sided=False,
                    batches=20, workers=1):
    """Monte Carlo (1 - alpha) quantile of the max of ``k`` equicorrelated normals.

    Shares its random streams with :func:`dunnett_table`, so for a fixed seed
    the result is nondecreasing in ``k``.
    """
    est, se = dunnett_table(k, rho, alpha, draws, seed, two_sided, batches, workers)
    return MaxQuantile(float(est[-1]), float(se[-1]), batches * max(1, int(draws) // batches))


@dataclass(frozen=True, eq=False)
class DunnettCalibration:
    """Dunnett-type step-down constants ``c(k)`` for ``k = 1, ..., k_max``."""

    rho: float
    alpha: float
    thresholds: np.ndarray
    se: np.ndarray
    seed: int = 0
    draws: int = 0
    two_sided: bool = False

    @property
    def k_max(self):
        return self.thresholds.size

    def threshold(self, k):
        if not 1 <= k <= self.k_max:
            raise ParameterDomainError(
                f"no Dunnett constant calibrated for k={k} (available 1..{self.k_max})"
            )
        return float(self.thresholds[k - 1])

    def check_compatible(self, rho, alpha, two_sided):
        if (float(rho), float(alpha), bool(two_sided)) != (self.rho, self.alpha, self.two_sided):
            raise ParameterDomainError(
                "Dunnett calibration was built for different (rho, alpha, sidedness)"
            )

    def _key(self):
        return _calib_key(self.rho, self.alpha, self.seed, self.draws, self.two_sided)

    @classmethod
    def compute(cls, k_max, rho, alpha=0.05, draws=200_000, seed=0, two_sided=False,
                workers=1, cache_path=None):
        """Calibrate by Monte Carlo, reusing a JSON sidecar cache when given."""
        key = _calib_key(rho, alpha, seed, draws, two_sided)
        if cache_path is not None:
            hit = _cache_load(cache_path).get(key)
            if hit is not None and len(hit["thresholds"]) >= k_max:
                return cls(float(rho), float(alpha), np.array(hit["thresholds"]),
                           np.array(hit["se"]), int(seed), int(draws), bool(two_sided))
        est, se = dunnett_table(k_max, rho, alpha, draws, seed, two_sided, workers=workers)
        out = cls(float(rho), float(alpha), est, se, int(seed), int(draws), bool(two_sided))
        if cache_path is not None:
            _cache_store(cache_path, key, est, se)
        return out


def _calib_key(rho, alpha, seed, draws, two_sided):
    return f"rho={float(rho)!r};alpha={float(alpha)!r};seed={int(seed)};draws={int(draws)};two_sided={bool(two_sided)}"


def _cache_load(path):
    if not os.path.exists(path):
        return {}
    with open(path) as fh:
        return json.load(fh)


def _cache_store(path, key, est, se):
    data = _cache_load(path)
    data[key] = {"thresholds": [float(v) for v in est], "se": [float(v) for v in se]}
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
    os.replace(tmp, path)
