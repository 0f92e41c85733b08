"""Structured covariance models and the linear-algebra kernels built on them.

Four structures are supported, each stored at unit scale together with a
positive multiplier ``scale``:

* ``intraclass``   -- unit diagonal, constant off-diagonal ``rho``
* ``changepoint``  -- tridiagonal with 2 on the diagonal and -1 beside it
* ``successive``   -- tridiagonal with 1 on the diagonal and ``rho`` beside it
* ``dense``        -- any symmetric positive definite matrix

All indices are 0-based.  Deleting coordinates from an intraclass matrix
leaves a smaller intraclass matrix, and deleting coordinates from a
tridiagonal matrix splits it into independent tridiagonal blocks; the
submatrix kernels below exploit both facts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .exceptions import FactorizationError, ParameterDomainError

__all__ = [
    "ActiveSet",
    "CovarianceModel",
    "cholesky_factor",
    "intraclass_inverse",
    "principal_submatrix_solve",
    "read_matrix_csv",
    "submatrix_precision",
    "succ_det",
    "succ_inverse_first_row",
    "tridiag_inverse_boundary_rows",
    "write_matrix_csv",
]

KINDS = ("intraclass", "changepoint", "successive", "dense")

# Cholesky pivots at or below this fraction of the diagonal are treated as singular.
PIVOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """A covariance matrix ``scale * Sigma`` with known structure.

    Use the classmethod constructors rather than calling this directly.
    """

    kind: str
    size: int
    rho: float = 0.0
    scale: float = 1.0
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterDomainError(f"unknown covariance kind {self.kind!r}")
        if self.size < 1:
            raise ParameterDomainError("model size must be at least 1")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ParameterDomainError(f"scale must be positive, got {self.scale}")
        if self.kind == "intraclass":
            _check_intraclass(self.rho, self.size)
        elif self.kind == "successive":
            _check_successive(self.rho, self.size)
        elif self.kind == "dense":
            m = np.array(self.matrix, dtype=float)
            if m.shape != (self.size, self.size):
                raise ParameterDomainError("dense matrix shape does not match size")
            if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
                raise ParameterDomainError("dense matrix is not symmetric")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
            _dense_cholesky(m, np.arange(self.size))

    # constructors -------------------------------------------------------

    @classmethod
    def intraclass(cls, size, rho, scale=1.0):
        return cls("intraclass", int(size), float(rho), float(scale))

    @classmethod
    def identity(cls, size, scale=1.0):
        return cls("intraclass", int(size), 0.0, float(scale))

    @classmethod
    def changepoint(cls, size, scale=1.0):
        return cls("changepoint", int(size), 0.0, float(scale))

    @classmethod
    def successive(cls, size, rho, scale=1.0):
        return cls("successive", int(size), float(rho), float(scale))

    @classmethod
    def dense(cls, matrix, scale=1.0):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ParameterDomainError("dense covariance must be a 2-D array")
        return cls("dense", matrix.shape[0], 0.0, float(scale), matrix)

    # views ----------------------------------------------------------------

    @property
    def is_tridiagonal(self):
        return self.kind in ("changepoint", "successive")

    def unit_matrix(self):
        """Dense ``Sigma`` without the scale factor."""
        M = self.size
        if self.kind == "intraclass":
            out = np.full((M, M), self.rho)
            np.fill_diagonal(out, 1.0)
            return out
        if self.is_tridiagonal:
            d, b = self._tridiag_coefs()
            return (
                np.diag(np.full(M, d))
                + np.diag(np.full(M - 1, b), 1)
                + np.diag(np.full(M - 1, b), -1)
            )
        return np.array(self.matrix)

    def to_dense(self):
        """Dense covariance ``scale * Sigma``."""
        return self.scale * self.unit_matrix()

    def diagonal(self):
        """Marginal variances, scale included."""
        if self.kind == "dense":
            return self.scale * np.diag(self.matrix).copy()
        d = 2.0 if self.kind == "changepoint" else 1.0
        return np.full(self.size, self.scale * d)

    def column(self, j):
        """Column ``j`` of the scaled covariance."""
        M = self.size
        if self.kind == "dense":
            return self.scale * self.matrix[:, j].copy()
        if self.kind == "intraclass":
            col = np.full(M, self.rho)
            col[j] = 1.0
            return self.scale * col
        d, b = self._tridiag_coefs()
        col = np.zeros(M)
        col[j] = d
        if j > 0:
            col[j - 1] = b
        if j < M - 1:
            col[j + 1] = b
        return self.scale * col

    def _tridiag_coefs(self):
        if self.kind == "changepoint":
            return 2.0, -1.0
        return 1.0, self.rho

    def __eq__(self, other):
        if not isinstance(other, CovarianceModel):
            return NotImplemented
        same = (self.kind, self.size, self.rho, self.scale) == (
            other.kind,
            other.size,
            other.rho,
            other.scale,
        )
        if same and self.kind == "dense":
            return bool(np.array_equal(self.matrix, other.matrix))
        return same

    def __hash__(self):
        return hash((self.kind, self.size, self.rho, self.scale))


@dataclass(frozen=True)
class ActiveSet:
    """Procedure state: indices still under test and those already rejected.

    ``rejected`` keeps the order of rejection.
    """

    remaining: tuple
    rejected: tuple = ()

    @classmethod
    def full(cls, size):
        return cls(tuple(range(size)), ())

    @classmethod
    def from_rejected(cls, size, rejected):
        rejected = tuple(int(j) for j in rejected)
        if len(set(rejected)) != len(rejected):
            raise ValueError("rejected indices must be distinct")
        gone = set(rejected)
        if any(j < 0 or j >= size for j in gone):
            raise ValueError("rejected index out of range")
        return cls(tuple(j for j in range(size) if j not in gone), rejected)

    @property
    def size(self):
        return len(self.remaining) + len(self.rejected)

    @property
    def stage(self):
        """1-based stage number, i.e. number of rejections plus one."""
        return len(self.rejected) + 1

    def reject(self, j):
        if j not in self.remaining:
            raise ValueError(f"index {j} is not active")
        return ActiveSet(
            tuple(i for i in self.remaining if i != j), self.rejected + (j,)
        )

    def indices(self):
        return np.asarray(self.remaining, dtype=np.intp)


# --------------------------------------------------------------------------
# parameter checks


def _check_intraclass(rho, p):
    if not np.isfinite(rho) or rho >= 1.0 or 1.0 + (p - 1) * rho <= 0.0:
        raise ParameterDomainError(
            f"intraclass matrix with rho={rho}, size={p} is not positive definite"
        )


def _check_successive(rho, p):
    if not np.isfinite(rho):
        raise ParameterDomainError("rho must be finite")
    ratios = _tridiag_ratios(1.0, float(rho), p)
    if ratios.min() <= PIVOT_TOL:
        raise ParameterDomainError(
            f"successive-correlation matrix with rho={rho}, size={p} "
            "is not positive definite"
        )


# --------------------------------------------------------------------------
# closed forms


def intraclass_inverse(rho, p):
    """Exact inverse of the ``p x p`` unit-diagonal intraclass matrix.

    Sigma^{-1} = (I - G 11') / (1 - rho) with G = rho / (1 + (p - 1) rho).
    """
    p = int(p)
    if p < 1:
        raise ParameterDomainError("size must be at least 1")
    _check_intraclass(rho, p)
    G = rho / (1.0 + (p - 1) * rho)
    out = np.full((p, p), -G / (1.0 - rho))
    np.fill_diagonal(out, (1.0 - G) / (1.0 - rho))
    return out


def tridiag_inverse_boundary_rows(p):
    """First and last rows of the inverse of the change-point matrix of size p."""
    p = int(p)
    if p < 1:
        raise ParameterDomainError("size must be at least 1")
    first = np.arange(p, 0, -1, dtype=float) / (p + 1)
    return first, first[::-1].copy()


def succ_det(r, rho):
    """Determinant of the ``r x r`` successive-correlation matrix.

    Uses the three-term recursion with the empty determinant equal to 1.
    """
    r = int(r)
    if r < 0:
        raise ParameterDomainError("size must be non-negative")
    prev, cur = 1.0, 1.0  # |Sigma(-1)| is never used with a nonzero weight
    if r == 0:
        return 1.0
    for _ in range(r - 1):
        prev, cur = cur, cur - rho * rho * prev
    return cur


def _succ_dets(r, rho):
    dets = np.empty(r + 1)
    dets[0] = 1.0
    if r >= 1:
        dets[1] = 1.0
    for k in range(2, r + 1):
        dets[k] = dets[k - 1] - rho * rho * dets[k - 2]
    return dets


def succ_inverse_first_row(r, rho):
    """First row of the inverse of the ``r x r`` successive-correlation matrix."""
    r = int(r)
    if r < 1:
        raise ParameterDomainError("size must be at least 1")
    dets = _succ_dets(r, rho)
    if np.any(dets <= 0):
        raise ParameterDomainError(
            f"successive-correlation matrix with rho={rho}, size={r} "
            "is not positive definite"
        )
    i = np.arange(1, r + 1)
    return (-rho) ** (i - 1) * dets[r - i] / dets[r]


_RATIO_CACHE = {}


def _tridiag_ratios(d, b, n):
    """Ratios of consecutive leading minors of a constant tridiagonal matrix.

    Entry k-1 holds |T_k| / |T_{k-1}|.  Prefixes are shared between sizes, so
    one array per (d, b) is cached and grown on demand.
    """
    cached = _RATIO_CACHE.get((d, b))
    if cached is not None and cached.size >= n:
        return cached[:n]
    size = max(n, 2 * (0 if cached is None else cached.size), 16)
    out = np.empty(size)
    r = d
    out[0] = r
    b2 = b * b
    for k in range(1, size):
        r = d - b2 / r if r > 0 else r
        out[k] = r
    out.setflags(write=False)
    _RATIO_CACHE[(d, b)] = out
    return out[:n]


# --------------------------------------------------------------------------
# submatrix kernels


def _segments(idx):
    """Split sorted indices into runs of consecutive integers."""
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) != 1) + 1
    return np.split(np.arange(idx.size), breaks)


def _dense_cholesky(sub, idx):
    try:
        L = linalg.cholesky(sub, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError(
            f"submatrix on indices {list(idx)[:10]}... is not positive definite",
            idx,
        ) from exc
    piv = np.diag(L) ** 2
    bad = np.flatnonzero(piv <= PIVOT_TOL * np.diag(sub))
    if bad.size:
        raise FactorizationError(
            f"near-singular pivot at index {int(idx[bad[0]])}", idx[bad]
        )
    return L


def _tridiag_block(d, b, v):
    """Apply the inverse of a constant tridiagonal block and return its diagonal."""
    n = v.shape[0]
    ratios = _tridiag_ratios(d, b, n)
    if ratios.min() <= PIVOT_TOL * d:
        raise FactorizationError("tridiagonal block is not positive definite")
    if n == 1:
        return v / d, np.array([1.0 / d])
    ab = np.empty((2, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = b
    ab[1] = d
    pv = linalg.solveh_banded(ab, v, check_finite=False)
    b2 = b * b
    denom = np.full(n, d)
    # leading block ends at i-1, trailing block starts at i+1
    denom[1:] -= b2 / ratios[: n - 1]
    denom[:-1] -= b2 / ratios[: n - 1][::-1]
    return pv, 1.0 / denom


def submatrix_precision(model, active, v=None):
    """Precision of the principal submatrix on the active indices.

    Parameters
    ----------
    model : CovarianceModel
    active : ActiveSet or array of int
        Indices (sorted ascending) of the retained coordinates.
    v : array, optional
        Vector of length ``len(active)``.

    Returns
    -------
    pv : ndarray or None
        ``P @ v`` where ``P`` is the inverse of ``scale * Sigma_A``.
    diag : ndarray
        Diagonal of ``P``.
    """
    idx = active.indices() if isinstance(active, ActiveSet) else np.asarray(active)
    p = idx.size
    vv = np.zeros(p) if v is None else np.asarray(v, dtype=float)
    if vv.shape != (p,):
        raise ValueError(f"vector has length {vv.shape}, expected {p}")
    s = model.scale

    if model.kind == "intraclass":
        rho = model.rho
        G = rho / (1.0 + (p - 1) * rho)
        pv = (vv - G * vv.sum()) / ((1.0 - rho) * s)
        diag = np.full(p, (1.0 - G) / ((1.0 - rho) * s))
    elif model.is_tridiagonal:
        d, b = model._tridiag_coefs()
        order = np.argsort(idx, kind="stable")
        sidx = idx[order]
        pv_sorted = np.empty(p)
        diag_sorted = np.empty(p)
        for seg in _segments(sidx):
            try:
                pv_sorted[seg], diag_sorted[seg] = _tridiag_block(d, b, vv[order][seg])
            except FactorizationError as exc:
                raise FactorizationError(str(exc), sidx[seg]) from None
        pv = np.empty(p)
        diag = np.empty(p)
        pv[order] = pv_sorted / s
        diag[order] = diag_sorted / s
    else:
        sub = s * model.matrix[np.ix_(idx, idx)]
        L = _dense_cholesky(sub, idx)
        pv = linalg.cho_solve((L, True), vv, check_finite=False)
        Linv = linalg.solve_triangular(L, np.eye(p), lower=True, check_finite=False)
        diag = np.einsum("ij,ij->j", Linv, Linv)
    return (None if v is None else pv), diag


def principal_submatrix_solve(model, active, v):
    """Solve ``(scale * Sigma_A) y = v`` on the active principal submatrix."""
    pv, _ = submatrix_precision(model, active, v)
    return pv


def cholesky_factor(model):
    """Lower Cholesky factor of ``scale * Sigma``."""
    idx = np.arange(model.size)
    return _dense_cholesky(model.to_dense(), idx)


# --------------------------------------------------------------------------
# CSV round trip


def write_matrix_csv(path, matrix):
    """Write a matrix row-major as comma-separated values at full precision."""
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")


def read_matrix_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))
