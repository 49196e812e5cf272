"""Bayes linear algebra primitives.

Adjusted expectation and variance, resolved variance, and Mahalanobis
discrepancies, all built on a spectral Moore-Penrose pseudo-inverse so that
rank-deficient covariance matrices (common here because of min-function
degeneracies) are handled consistently.  A single relative tolerance governs
both the pseudo-inverse and the rank used to normalize discrepancies, so the
numerator and denominator of every discrepancy ratio agree about which
directions carry information.

All functions are pure; there is no shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVarianceError, ShapeError

#: Relative eigenvalue cutoff shared by pseudo_inverse and rank computation.
DEFAULT_RTOL = 1e-10

#: Relative Frobenius tolerance for symmetry checks.
SYMMETRY_RTOL = 1e-8

#: Eigenvalues of a covariance may dip this far (relative to the largest
#: eigenvalue) below zero before we call the matrix indefinite.
PSD_RTOL = 1e-8


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def _as_square(m, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(m, dtype=float))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be a square matrix, got shape {arr.shape}")
    return arr


def check_symmetric(m: np.ndarray, rtol: float = SYMMETRY_RTOL, name: str = "matrix") -> None:
    scale = np.linalg.norm(m)
    if scale == 0.0:
        return
    if np.linalg.norm(m - m.T) > rtol * scale:
        raise ShapeError(f"{name} is not symmetric within tolerance {rtol}")


@dataclass
class MomentPair:
    """First- and second-order belief specification for a vector quantity."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = _as_vector(self.mean, "mean")
        self.covariance = _as_square(self.covariance, "covariance")
        n = self.mean.shape[0]
        if self.covariance.shape != (n, n):
            raise ShapeError(
                f"covariance shape {self.covariance.shape} does not match mean length {n}"
            )
        check_symmetric(self.covariance, 1e-10, name="covariance")
        eig = np.linalg.eigvalsh(self.covariance)
        top = max(eig[-1], 0.0)
        if eig[0] < -PSD_RTOL * max(top, np.finfo(float).tiny):
            raise ShapeError(
                f"covariance is not positive semi-definite (min eigenvalue {eig[0]:g})"
            )

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class CrossMoment:
    """cov(targets, data): rows index targets, columns index data."""

    matrix: np.ndarray = field()

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if self.matrix.ndim != 2:
            raise ShapeError(f"cross-moment must be a matrix, got shape {self.matrix.shape}")


def _eig_pinv(m: np.ndarray, rtol: float):
    """Spectral pseudo-inverse; returns (pinv, rank)."""
    vals, vecs = np.linalg.eigh(m)
    cutoff = rtol * np.max(np.abs(vals)) if vals.size else 0.0
    keep = np.abs(vals) > cutoff
    inv_vals = np.zeros_like(vals)
    inv_vals[keep] = 1.0 / vals[keep]
    pinv = (vecs * inv_vals) @ vecs.T
    return pinv, int(np.count_nonzero(keep))


def pseudo_inverse(m, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix via eigendecomposition.

    Eigenvalues with magnitude below ``rtol`` times the largest magnitude
    eigenvalue are treated as exactly zero.
    """
    arr = _as_square(m, "matrix")
    check_symmetric(arr, name="matrix")
    pinv, _ = _eig_pinv(arr, rtol)
    return pinv


def pinv_with_rank(m, rtol: float = DEFAULT_RTOL):
    """Pseudo-inverse together with the numerical rank at the same cutoff."""
    arr = _as_square(m, "matrix")
    check_symmetric(arr, name="matrix")
    return _eig_pinv(arr, rtol)


def _check_adjustment_dims(prior, data_prior, cross):
    mat = cross.matrix if isinstance(cross, CrossMoment) else np.atleast_2d(np.asarray(cross, float))
    if prior is not None and mat.shape[0] != prior.dim:
        raise ShapeError(
            f"cross-moment has {mat.shape[0]} rows but prior has dimension {prior.dim}"
        )
    if mat.shape[1] != data_prior.dim:
        raise ShapeError(
            f"cross-moment has {mat.shape[1]} columns but data prior has dimension {data_prior.dim}"
        )
    return mat


def adjusted_expectation(
    prior: MomentPair,
    data_prior: MomentPair,
    cross,
    observed,
    rtol: float = DEFAULT_RTOL,
) -> np.ndarray:
    """E_D(B) = E(B) + cov(B,D) var(D)^+ (d - E(D))."""
    cov_bd = _check_adjustment_dims(prior, data_prior, cross)
    d = _as_vector(observed, "observed")
    if d.shape[0] != data_prior.dim:
        raise ShapeError(
            f"observed has length {d.shape[0]} but data prior has dimension {data_prior.dim}"
        )
    pinv, _ = _eig_pinv(data_prior.covariance, rtol)
    return prior.mean + cov_bd @ (pinv @ (d - data_prior.mean))


def resolved_variance(data_prior: MomentPair, cross, rtol: float = DEFAULT_RTOL) -> np.ndarray:
    """Rvar_D(B) = cov(B,D) var(D)^+ cov(D,B)."""
    cov_bd = _check_adjustment_dims(None, data_prior, cross)
    pinv, _ = _eig_pinv(data_prior.covariance, rtol)
    rv = cov_bd @ pinv @ cov_bd.T
    return 0.5 * (rv + rv.T)


def adjusted_variance(
    prior: MomentPair, data_prior: MomentPair, cross, rtol: float = DEFAULT_RTOL
) -> np.ndarray:
    """var_D(B) = var(B) - Rvar_D(B)."""
    cov_bd = _check_adjustment_dims(prior, data_prior, cross)
    return prior.covariance - resolved_variance(data_prior, cov_bd, rtol)


def _finite_sample_factor(rank: int, sample_size) -> float:
    # Quadratic forms through the pseudo-inverse of a covariance estimated
    # from a finite ensemble are inflated by roughly (n-1)/(n-rank-2); undo
    # that so the expected discrepancy stays at unity.
    if sample_size is None:
        return 1.0
    n = int(sample_size)
    if n - rank - 2 <= 0:
        return 1.0
    return (n - rank - 2) / (n - 1)


def mahalanobis_raw(observed, prior: MomentPair, rtol: float = DEFAULT_RTOL):
    """Unnormalized quadratic form (y-E(Y))' var(Y)^+ (y-E(Y)) and its rank."""
    y = _as_vector(observed, "observed")
    if y.shape[0] != prior.dim:
        raise ShapeError(f"observed has length {y.shape[0]} but prior has dimension {prior.dim}")
    pinv, rank = _eig_pinv(prior.covariance, rtol)
    resid = y - prior.mean
    return float(resid @ pinv @ resid), rank


def mahalanobis_discrepancy(
    observed,
    prior: MomentPair,
    rtol: float = DEFAULT_RTOL,
    sample_size=None,
) -> float:
    """Rank-normalized Mahalanobis discrepancy; expectation 1 under the prior.

    When the prior moments were estimated from ``sample_size`` Monte Carlo
    realizations, a finite-ensemble bias correction is applied.
    """
    raw, rank = mahalanobis_raw(observed, prior, rtol)
    if rank == 0:
        raise DegenerateVarianceError("variance matrix has rank zero")
    return raw / rank * _finite_sample_factor(rank, sample_size)


def adjustment_discrepancy(
    adjusted_mean,
    prior_mean,
    resolved_var,
    rtol: float = DEFAULT_RTOL,
    sample_size=None,
) -> float:
    """Rank-normalized discrepancy of the mean shift against resolved variance.

    (E_D(B)-E(B))' Rvar^+ (E_D(B)-E(B)) / rank(Rvar).  When the resolved
    variance is singular the pseudo-inverse restricts the form to its column
    space.
    """
    a = _as_vector(adjusted_mean, "adjusted_mean")
    p = _as_vector(prior_mean, "prior_mean")
    if a.shape != p.shape:
        raise ShapeError("adjusted_mean and prior_mean have different lengths")
    rv = _as_square(resolved_var, "resolved_var")
    if rv.shape[0] != a.shape[0]:
        raise ShapeError("resolved_var dimension does not match means")
    pinv, rank = _eig_pinv(rv, rtol)
    if rank == 0:
        raise DegenerateVarianceError("resolved variance has rank zero")
    shift = a - p
    return float(shift @ pinv @ shift) / rank * _finite_sample_factor(rank, sample_size)
