"""Small dense statistics kernel: plug-in moments, vech, SPD solves, OLS.

All covariances use divisor n so that the stacked estimating equations are
solved exactly by the closed-form estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InsufficientData, NearSingular, NotSymmetric, RankDeficient

SYMMETRY_RTOL = 1e-9
COND_LIMIT = 1e12


@dataclass(frozen=True)
class SampleMoments:
    mean: np.ndarray
    cov: np.ndarray
    n: int


def sample_moments(samples) -> SampleMoments:
    """Mean and divisor-n covariance of a list of equal-length vectors."""
    a = np.asarray(samples, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] < 2:
        raise InsufficientData(f"need at least 2 samples, got {a.shape[0]}")
    mean = a.mean(axis=0)
    d = a - mean
    cov = d.T @ d / a.shape[0]
    cov = 0.5 * (cov + cov.T)
    return SampleMoments(mean=mean, cov=cov, n=a.shape[0])


def _check_symmetric(m: np.ndarray, rtol: float = SYMMETRY_RTOL) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    if np.abs(m - m.T).max(initial=0.0) > rtol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")


def vech(m) -> np.ndarray:
    """Half-vectorization: lower triangle stacked column by column."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    _check_symmetric(m)
    # row-major upper triangle of m.T is column-major lower triangle of m
    return m.T[np.triu_indices(m.shape[0])]


def unvech(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if d is None:
        d = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if v.size != d * (d + 1) // 2:
        raise ValueError(f"vech length {v.size} does not match dimension {d}")
    m = np.zeros((d, d))
    rows, cols = np.triu_indices(d)
    m[cols, rows] = v
    m[rows, cols] = v
    return m


def solve_symmetric(m, rhs, name: str = "matrix") -> np.ndarray:
    """Solve m @ s = rhs for symmetric m.

    Cholesky first; symmetric-indefinite (pivoted LDL) solve if m is not
    positive definite. Raises NearSingular when the 2-norm condition number
    exceeds 1e12.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    rhs = np.asarray(rhs, dtype=float)
    _check_symmetric(m)
    if m.shape[0] == 0:
        return np.zeros_like(rhs)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NearSingular(name, float(cond))
    try:
        factor = scipy.linalg.cho_factor(m, check_finite=False)
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.solve(m, rhs, assume_a="sym", check_finite=False)


def ols(design, response, weights=None) -> np.ndarray:
    """Least-squares coefficients, optionally with nonnegative row weights."""
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim == 1:
        design = design[:, None]
    nrow, ncol = design.shape
    if nrow < ncol:
        raise RankDeficient(f"{nrow} rows for {ncol} columns")
    if weights is not None:
        sw = np.sqrt(np.asarray(weights, dtype=float))
        design = design * sw[:, None]
        response = response * sw
    coef, _, rank, _ = np.linalg.lstsq(design, response, rcond=None)
    if rank < ncol:
        raise RankDeficient(f"design rank {rank} < {ncol} columns")
    return coef


def ols_vcov(design, response, coef) -> np.ndarray:
    """Classical homoskedastic OLS variance, residual divisor n - k."""
    design = np.asarray(design, dtype=float)
    resid = np.asarray(response, dtype=float) - design @ coef
    nrow, ncol = design.shape
    s2 = resid @ resid / max(nrow - ncol, 1)
    xtx = design.T @ design
    return s2 * solve_symmetric(xtx, np.eye(ncol), name="X'X")
