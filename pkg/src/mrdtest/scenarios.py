"""Synthetic data for treatments-vs-control, change-point and other models.

Every generator is a pure function of ``(scenario, iteration)``: iteration
``i`` draws from its own counter-based stream keyed by ``(seed, i)``, so
serial and parallel runs see identical data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covariance import CovarianceModel, cholesky_factor
from .critical_values import stream
from .exceptions import ParameterDomainError

__all__ = [
    "Dataset",
    "MeanPattern",
    "Scenario",
    "gen_changepoint",
    "gen_mvn",
    "gen_successive",
    "gen_treatments_control",
    "generate",
    "mean_pattern_table",
    "triples_pattern",
]

KINDS = ("treatments_control", "intraclass", "changepoint", "successive", "mvn")


@dataclass(frozen=True, eq=False)
class MeanPattern:
    """True mean vector and the null/alternative split it induces."""

    mu: np.ndarray
    null: np.ndarray
    alternative: np.ndarray

    @classmethod
    def from_means(cls, mu, null_rule="zero"):
        mu = np.array(mu, dtype=float).ravel()
        if null_rule == "zero":
            null = mu == 0.0
        elif null_rule == "nonpositive":
            null = mu <= 0.0
        else:
            raise ValueError(f"unknown null rule {null_rule!r}")
        for a in (mu, null):
            a.setflags(write=False)
        alt = ~null
        alt.setflags(write=False)
        return cls(mu, null, alt)

    @property
    def size(self):
        return self.mu.size


def _pairs(counts):
    if isinstance(counts, dict):
        items = list(counts.items())
    else:
        items = [tuple(c) for c in counts]
    out = []
    for v, c in items:
        c = int(c)
        if c < 0:
            raise ParameterDomainError(f"negative count {c} for value {v}")
        out.append((float(v), c))
    return out


def triples_pattern(M, n_triples, value=1.0):
    """Zeros with ``n_triples`` runs of three ``value`` entries, evenly spaced.

    The ``M - 3 n_triples`` zeros are split into ``n_triples + 1`` gaps of equal
    length (leading and trailing gaps included); any remainder is added to the
    final gap.
    """
    M, k = int(M), int(n_triples)
    nulls = M - 3 * k
    if k < 0 or nulls < 0:
        raise ParameterDomainError(f"{k} triples do not fit in M={M}")
    mu = np.zeros(M)
    if k == 0:
        return mu
    gap = nulls // (k + 1)
    for t in range(k):
        start = gap * (t + 1) + 3 * t
        mu[start:start + 3] = value
    return mu


def mean_pattern_table(counts, M=None, layout="block", null_rule="zero"):
    """Build a mean pattern from value counts.

    Parameters
    ----------
    counts : dict or sequence of (value, count)
        For ``"block"`` layout, values are laid out in the given order.  For
        ``"triples"``, zero must map to the number of nulls and a single nonzero
        value to a multiple of three.
    M : int, optional
        Expected total; checked when given.
    layout : {"block", "triples"}
    """
    pairs = _pairs(counts)
    total = sum(c for _, c in pairs)
    if M is not None and total != int(M):
        raise ParameterDomainError(f"counts sum to {total}, expected M={M}")
    if layout == "block":
        mu = np.concatenate([np.full(c, v) for v, c in pairs]) if pairs else np.zeros(0)
    elif layout == "triples":
        nonzero = [(v, c) for v, c in pairs if v != 0.0 and c > 0]
        if len(nonzero) > 1:
            raise ParameterDomainError("triples layout takes a single nonzero value")
        if nonzero and nonzero[0][1] % 3:
            raise ParameterDomainError(
                f"{nonzero[0][1]} alternatives cannot be split into triples"
            )
        value, c = nonzero[0] if nonzero else (1.0, 0)
        mu = triples_pattern(total, c // 3, value)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return MeanPattern.from_means(mu, null_rule)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A data-generating model.

    Attributes
    ----------
    kind : str
        One of ``treatments_control``, ``intraclass``, ``changepoint``,
        ``successive``, ``mvn``.
    means : MeanPattern
    rho : float
        Correlation for ``intraclass`` and ``successive``; ``treatments_control``
        always uses 1/2.
    n : int
        Replications per population.
    sigma : float
    variance_known : bool
        When False, each draw also carries a pooled ``s2`` with
        ``(M + 1)(n - 1)`` degrees of freedom and the model scale omits
        ``sigma^2``.
    mean_units : {"raw", "marginal_sd"}
        ``"marginal_sd"`` multiplies the means by each coordinate's standard
        deviation, i.e. they are noncentrality parameters.
    generation : {"factor", "raw"}
        Treatments-vs-control only: one-factor shortcut or raw sample means.
    """

    kind: str
    means: MeanPattern
    rho: float = 0.5
    n: int = 2
    sigma: float = 1.0
    variance_known: bool = True
    seed: int = 0
    mean_units: str = "raw"
    generation: str = "factor"
    cov: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterDomainError(f"unknown scenario kind {self.kind!r}")
        if not isinstance(self.means, MeanPattern):
            object.__setattr__(self, "means", MeanPattern.from_means(self.means))
        if self.n < 1:
            raise ParameterDomainError("n must be at least 1")
        if not self.sigma > 0:
            raise ParameterDomainError("sigma must be positive")
        if not self.variance_known and self.n < 2:
            raise ParameterDomainError("unknown variance needs n >= 2 to form s2")
        if self.mean_units not in ("raw", "marginal_sd"):
            raise ValueError(f"unknown mean units {self.mean_units!r}")
        if self.generation not in ("factor", "raw"):
            raise ValueError(f"unknown generation mode {self.generation!r}")
        if self.kind == "mvn" and self.cov is None:
            raise ParameterDomainError("mvn scenario needs a covariance matrix")
        self.model()  # validates structure parameters

    @property
    def M(self):
        return self.means.size

    @property
    def nu(self):
        return (self.M + 1) * (self.n - 1)

    def _unit_scale(self):
        if self.kind == "treatments_control":
            return 2.0 / self.n
        if self.kind in ("changepoint", "intraclass", "successive"):
            return 1.0 / self.n
        return 1.0

    def true_model(self):
        """Covariance of the generated ``x`` (``sigma^2`` included)."""
        return self._model(self.sigma**2 * self._unit_scale())

    def model(self):
        """Covariance the procedures should assume.

        Equal to :meth:`true_model` when the variance is known; otherwise the
        ``sigma^2`` factor is left out and supplied through ``s2``.
        """
        s = self._unit_scale()
        return self._model(s * self.sigma**2 if self.variance_known else s)

    def _model(self, scale):
        M = self.M
        if self.kind == "treatments_control":
            return CovarianceModel.intraclass(M, 0.5, scale)
        if self.kind == "intraclass":
            return CovarianceModel.intraclass(M, self.rho, scale)
        if self.kind == "changepoint":
            return CovarianceModel.changepoint(M, scale)
        if self.kind == "successive":
            return CovarianceModel.successive(M, self.rho, scale)
        return CovarianceModel.dense(self.cov, scale)

    def mu(self):
        """Mean of ``x`` in raw units."""
        mu = self.means.mu
        if self.mean_units == "marginal_sd":
            mu = mu * np.sqrt(self.true_model().diagonal())
        return np.asarray(mu, dtype=float)

    def fingerprint(self):
        return (
            f"{self.kind}(M={self.M}, rho={self.rho}, n={self.n}, sigma={self.sigma}, "
            f"variance_known={self.variance_known}, seed={self.seed}, "
            f"alternatives={int(self.means.alternative.sum())})"
        )


@dataclass(frozen=True)
class Dataset:
    """One draw: observation vector plus optional variance estimate."""

    x: np.ndarray
    s2: float | None = None
    nu: int | None = None
    zbar: np.ndarray | None = None

    @property
    def variance(self):
        return None if self.s2 is None else (self.s2, self.nu)


def _pooled_s2(scenario, rng):
    nu = scenario.nu
    return scenario.sigma**2 * rng.chisquare(nu) / nu, nu


def _dataset(scenario, x, rng, zbar=None):
    if scenario.variance_known:
        return Dataset(x, zbar=zbar)
    s2, nu = _pooled_s2(scenario, rng)
    return Dataset(x, s2, nu, zbar)


def gen_treatments_control(scenario, iteration=0, rng=None):
    """Treatment-minus-control differences with intraclass correlation 1/2."""
    if scenario.kind not in ("treatments_control", "intraclass"):
        raise ParameterDomainError("scenario is not a treatments-vs-control model")
    rng = stream(scenario.seed, iteration) if rng is None else rng
    M, n, sigma = scenario.M, scenario.n, scenario.sigma
    mu = scenario.mu()
    if scenario.kind == "treatments_control" and scenario.generation == "raw":
        nus = np.concatenate((mu, [0.0]))
        Z = nus[:, None] + sigma * rng.standard_normal((M + 1, n))
        zbar = Z.mean(axis=1)
        x = zbar[:M] - zbar[M]
        if scenario.variance_known:
            return Dataset(x, zbar=zbar)
        s2 = float(((Z - zbar[:, None]) ** 2).sum() / scenario.nu)
        return Dataset(x, s2, scenario.nu, zbar)
    rho = 0.5 if scenario.kind == "treatments_control" else scenario.rho
    if rho < 0:
        return _dataset(scenario, gen_mvn(scenario.true_model(), mu, rng=rng), rng)
    scale = scenario.true_model().scale
    w0 = rng.standard_normal()
    w = rng.standard_normal(M)
    x = mu + np.sqrt(scale) * (np.sqrt(rho) * w0 + np.sqrt(1.0 - rho) * w)
    return _dataset(scenario, x, rng)


def gen_changepoint(scenario, iteration=0, rng=None):
    """Consecutive differences of ``M + 1`` sample means.

    The population means are the cumulative sums of the difference means,
    starting from zero.  The pooled means are returned as ``zbar``.
    """
    if scenario.kind != "changepoint":
        raise ParameterDomainError("scenario is not a change-point model")
    rng = stream(scenario.seed, iteration) if rng is None else rng
    M = scenario.M
    levels = np.concatenate(([0.0], np.cumsum(scenario.mu())))
    zbar = levels + scenario.sigma / np.sqrt(scenario.n) * rng.standard_normal(M + 1)
    return _dataset(scenario, np.diff(zbar), rng, zbar)


def gen_successive(scenario, iteration=0, rng=None):
    """Successive-correlation draws.

    For ``|rho| <= 1/2`` this uses the moving-average form
    ``x_i = a e_i + b e_{i+1}`` with ``a^2 + b^2 = 1`` and ``ab = rho``;
    otherwise it falls back to a Cholesky factor.
    """
    if scenario.kind != "successive":
        raise ParameterDomainError("scenario is not a successive-correlation model")
    rng = stream(scenario.seed, iteration) if rng is None else rng
    model = scenario.true_model()
    rho = scenario.rho
    if abs(rho) <= 0.5:
        a = 0.5 * (np.sqrt(1 + 2 * rho) + np.sqrt(1 - 2 * rho))
        b = 0.5 * (np.sqrt(1 + 2 * rho) - np.sqrt(1 - 2 * rho))
        e = rng.standard_normal(scenario.M + 1)
        x = scenario.mu() + np.sqrt(model.scale) * (a * e[:-1] + b * e[1:])
    else:
        x = gen_mvn(model, scenario.mu(), rng=rng)
    return _dataset(scenario, x, rng)


def gen_mvn(model, mu, seed=0, rng=None):
    """``mu + L z`` with ``L`` the Cholesky factor of the model covariance."""
    rng = stream(seed) if rng is None else rng
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (model.size,):
        raise ValueError("mean vector length does not match the model")
    return mu + cholesky_factor(model) @ rng.standard_normal(model.size)


def generate(scenario, iteration=0):
    """Draw dataset number ``iteration`` of ``scenario``."""
    if scenario.kind in ("treatments_control", "intraclass"):
        return gen_treatments_control(scenario, iteration)
    if scenario.kind == "changepoint":
        return gen_changepoint(scenario, iteration)
    if scenario.kind == "successive":
        return gen_successive(scenario, iteration)
    rng = stream(scenario.seed, iteration)
    return _dataset(scenario, gen_mvn(scenario.true_model(), scenario.mu(), rng=rng), rng)
