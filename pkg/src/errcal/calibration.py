"""Regression calibration point estimates for the three subset designs.

The calibrated regression replaces X by a best linear predictor
X_hat = E[X | X*, Z] and the outcome by Y_hat = Y* - E[T~ | X*, Z] (or
Y* - c* with c* from an auxiliary regression in the biomarker design), then
regresses Y_hat on (1, X_hat, Z).

Every closed-form nuisance estimate here is the exact root of the matching
estimating-function row in :mod:`errcal.inference`; keep the two in step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core_stats import ols, ols_vcov, solve_symmetric
from .data import Dataset, as_dataset
from .errors import DegenerateNuisance, InsufficientData

METHODS = ("true", "naive", "rc_case1", "rc_case2", "rc_case3", "mm_case1", "mm_case2")
DESIGN_METHODS = {
    "reliability": ("true", "naive", "rc_case1", "mm_case1"),
    "validation": ("true", "naive", "rc_case2", "mm_case2"),
    "biomarker": ("true", "naive", "rc_case3"),
}
PAIR_WEIGHTS = {"subject": 1.0, "replicate": 2.0}


@dataclass
class NuisanceEstimates:
    """First and second moments feeding the calibration formulas.

    Case 1 sets ``mu_T``, ``mu_Ttilde``, ``sigma_T_z`` and ``sigma_Ttilde_z``
    to zero. Case 3 fills only the cohort moments and the two auxiliary
    regression coefficient sets.
    """

    design: str
    mu_xstar: np.ndarray
    mu_z: np.ndarray
    sigma_xstar: np.ndarray
    sigma_z: np.ndarray
    sigma_xstar_z: np.ndarray
    sigma_T: Optional[np.ndarray] = None
    sigma_T_Ttilde: Optional[np.ndarray] = None
    mu_T: Optional[np.ndarray] = None
    mu_Ttilde: float = 0.0
    sigma_T_z: Optional[np.ndarray] = None
    sigma_Ttilde_z: Optional[np.ndarray] = None
    case3_alpha: Optional[np.ndarray] = None   # (p, 1+p+q): X_hat regression
    case3_c: Optional[np.ndarray] = None       # (1+p+q,): c* regression

    @property
    def p(self) -> int:
        return self.mu_xstar.size

    @property
    def q(self) -> int:
        return self.mu_z.size

    @property
    def mu_x(self) -> np.ndarray:
        return self.mu_xstar - self.mu_T

    @property
    def sigma_x(self) -> np.ndarray:
        """Var(X) = Cov(X, X*) = Sigma_X* - Sigma_T."""
        return self.sigma_xstar - self.sigma_T

    @property
    def sigma_x_z(self) -> np.ndarray:
        return self.sigma_xstar_z - self.sigma_T_z

    def check(self) -> "NuisanceEstimates":
        if self.sigma_T is not None:
            diag = np.diag(self.sigma_x)
            bad = np.flatnonzero(diag <= 0)
            if bad.size:
                raise DegenerateNuisance(int(bad[0]), float(diag[bad[0]]))
        return self

    def to_dict(self) -> dict:
        out = {"design": self.design}
        for name in ("mu_xstar", "mu_z", "sigma_xstar", "sigma_z", "sigma_xstar_z",
                     "sigma_T", "sigma_T_Ttilde", "mu_T", "sigma_T_z", "sigma_Ttilde_z",
                     "case3_alpha", "case3_c"):
            val = getattr(self, name)
            if val is not None:
                out[name] = np.asarray(val).tolist()
        if self.design != "biomarker":
            out["mu_Ttilde"] = float(self.mu_Ttilde)
        return out


@dataclass
class CalibrationFit:
    beta: np.ndarray
    method: str
    n_used: tuple
    vcov: Optional[np.ndarray] = None
    variance_method: Optional[str] = None
    nuisance: Optional[NuisanceEstimates] = None
    diagnostics: list = field(default_factory=list)
    variance_info: dict = field(default_factory=dict)

    @property
    def se(self) -> Optional[np.ndarray]:
        if self.vcov is None:
            return None
        return np.sqrt(np.clip(np.diag(self.vcov), 0, None))

    def coef_names(self) -> list[str]:
        if self.nuisance is None:
            return [f"b{i}" for i in range(len(self.beta))]
        p = self.nuisance.p
        return coef_names(p, len(self.beta) - 1 - p)

    def to_dict(self) -> dict:
        se = self.se
        return {
            "method": self.method,
            "coef": self.coef_names(),
            "beta": self.beta.tolist(),
            "se": None if se is None else se.tolist(),
            "variance_method": self.variance_method,
            "vcov": None if self.vcov is None else self.vcov.tolist(),
            "n_used": {"N": int(self.n_used[0]), "n": int(self.n_used[1])},
            "nuisance": None if self.nuisance is None else self.nuisance.to_dict(),
            "diagnostics": list(self.diagnostics),
            "variance_info": dict(self.variance_info),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def coef_names(p: int, q: int) -> list[str]:
    xs = ["beta_x"] if p == 1 else [f"beta_x{k + 1}" for k in range(p)]
    zs = ["beta_z"] if q == 1 else [f"beta_z{k + 1}" for k in range(q)]
    return ["beta0"] + xs + zs


def _design_matrix(x, z) -> np.ndarray:
    return np.column_stack([np.ones(x.shape[0]), x, z])


def _blp(mu_target, cov_target_obs, cov_obs, centered_obs, name):
    """mu + Cov(target, obs) Cov(obs)^{-1} (obs - E obs), row-wise."""
    g = solve_symmetric(cov_obs, centered_obs.T, name=name)
    return mu_target + (np.atleast_2d(cov_target_obs) @ g).T


# ---------------------------------------------------------------- predictions

def single_predictions(nu: NuisanceEstimates, xstar, z):
    """X_hat and c* for subjects observed once (cases 1 and 2)."""
    p = nu.p
    cov_obs = np.block([[nu.sigma_xstar, nu.sigma_xstar_z],
                        [nu.sigma_xstar_z.T, nu.sigma_z]])
    obs = np.column_stack([xstar - nu.mu_xstar, z - nu.mu_z])
    xhat = _blp(nu.mu_x, np.hstack([nu.sigma_x, nu.sigma_x_z]), cov_obs, obs,
                "Cov(X*, Z)")
    c_row = np.concatenate([nu.sigma_T_Ttilde, nu.sigma_Ttilde_z])[None, :]
    cstar = _blp(np.atleast_1d(nu.mu_Ttilde), c_row, cov_obs, obs, "Cov(X*, Z)")[:, 0]
    return xhat.reshape(-1, p), cstar


def pair_predictions(nu: NuisanceEstimates, x1, x2, z):
    """X_hat and the replicate-averaged c* for reliability pairs.

    Equal to the best linear predictor over (X*_1, X*_2, Z): the difference
    X*_1 - X*_2 is uncorrelated with X, Z and the replicate mean, and its
    contributions to c*_1 and c*_2 cancel in their average.
    """
    p = nu.p
    xbar = 0.5 * (x1 + x2)
    var_xbar = 0.5 * (nu.sigma_xstar + nu.sigma_x)
    cov_obs = np.block([[var_xbar, nu.sigma_xstar_z],
                        [nu.sigma_xstar_z.T, nu.sigma_z]])
    obs = np.column_stack([xbar - nu.mu_xstar, z - nu.mu_z])
    xhat = _blp(nu.mu_x, np.hstack([nu.sigma_x, nu.sigma_x_z]), cov_obs, obs,
                "Cov(mean X*, Z)")
    c_row = np.concatenate([0.5 * nu.sigma_T_Ttilde, np.zeros(nu.q)])[None, :]
    cbar = _blp(np.zeros(1), c_row, cov_obs, obs, "Cov(mean X*, Z)")[:, 0]
    return xhat.reshape(-1, p), cbar


def case1_predictions(nu: NuisanceEstimates, data: Dataset, pair_weight: str = "subject"):
    """(X_hat, Y_hat, weight) per subject for the reliability design.

    Pairs contribute the mean of their two calibrated outcomes; ``pair_weight``
    sets whether a pair counts once ("subject") or once per replicate
    ("replicate") in the final regression.
    """
    v = data.in_subset
    xhat = np.empty_like(data.xstar)
    yhat = np.empty(data.N)
    s = ~v
    if s.any():
        xs, cs = single_predictions(nu, data.xstar[s], data.z[s])
        xhat[s] = xs
        yhat[s] = data.ystar[s] - cs
    if v.any():
        xp, cp = pair_predictions(nu, data.xstar[v], data.xstar_rep[v], data.z[v])
        xhat[v] = xp
        yhat[v] = 0.5 * (data.ystar[v] + data.ystar_rep[v]) - cp
    w = np.where(v, PAIR_WEIGHTS[pair_weight], 1.0)
    return xhat, yhat, w


def case3_predictions(nu: NuisanceEstimates, data: Dataset):
    d = _design_matrix(data.xstar, data.z)
    xhat = d @ nu.case3_alpha.T
    yhat = data.ystar - d @ nu.case3_c
    return xhat, yhat


# ------------------------------------------------------------ nuisance moments

def _cohort_moments(xstar, z, mu_x, extra_x=None):
    """Cohort second moments, pooling an optional second set of X* rows."""
    N = xstar.shape[0]
    mu_z = z.mean(axis=0)
    zc = z - mu_z
    dx = xstar - mu_x
    sxx = dx.T @ dx
    sxz = dx.T @ zc
    count = N
    if extra_x is not None:
        rows, zrows = extra_x
        d2 = rows - mu_x
        sxx = sxx + d2.T @ d2
        sxz = sxz + d2.T @ zrows
        count += rows.shape[0]
    sxx = sxx / count
    return mu_z, 0.5 * (sxx + sxx.T), zc.T @ zc / N, sxz / count


def _require_reliability(data: Dataset):
    if data.design != "reliability":
        raise InsufficientData(f"reliability design required, got {data.design}")
    v = data.in_subset
    if data.xstar_rep is None or np.isnan(data.ystar_rep[v]).any() or np.isnan(data.xstar_rep[v]).any():
        raise InsufficientData("every subset member needs a second replicate")
    if v.sum() < 2 or data.N < 2:
        raise InsufficientData("need at least 2 subjects with replicate pairs")


def nuisance_case1(data) -> NuisanceEstimates:
    data = as_dataset(data, "reliability")
    _require_reliability(data)
    v = data.in_subset
    p, q = data.p, data.q
    x1 = data.xstar
    x2 = data.xstar_rep[v]
    xbar = x1.copy()
    xbar[v] = 0.5 * (x1[v] + x2)
    mu = xbar.mean(axis=0)
    mu_z, sxs, sz, sxsz = _cohort_moments(x1, data.z, mu, extra_x=(x2, data.z[v] - data.z.mean(axis=0)))
    dx = x1[v] - x2
    dy = data.ystar[v] - data.ystar_rep[v]
    n = int(v.sum())
    st = dx.T @ dx / (2 * n)
    return NuisanceEstimates(
        design="reliability", mu_xstar=mu, mu_z=mu_z, sigma_xstar=sxs, sigma_z=sz,
        sigma_xstar_z=sxsz, sigma_T=0.5 * (st + st.T), sigma_T_Ttilde=dx.T @ dy / (2 * n),
        mu_T=np.zeros(p), mu_Ttilde=0.0, sigma_T_z=np.zeros((p, q)), sigma_Ttilde_z=np.zeros(q),
    ).check()


def nuisance_case2(data) -> NuisanceEstimates:
    data = as_dataset(data, "validation")
    if data.design != "validation" or data.x_true is None:
        raise InsufficientData("validation design with x_true/y_true required")
    v = data.in_subset
    if v.sum() < 2 or np.isnan(data.x_true[v]).any() or np.isnan(data.y_true[v]).any():
        raise InsufficientData("need at least 2 validated subjects with x_true and y_true")
    mu_xs = data.xstar.mean(axis=0)
    mu_z, sxs, sz, sxsz = _cohort_moments(data.xstar, data.z, mu_xs)
    d = data.xstar[v] - data.x_true[v]
    e = data.ystar[v] - data.y_true[v]
    n = int(v.sum())
    mu_t = d.mean(axis=0)
    mu_tt = float(e.mean())
    dc = d - mu_t
    ec = e - mu_tt
    zc = data.z[v] - mu_z
    st = dc.T @ dc / n
    return NuisanceEstimates(
        design="validation", mu_xstar=mu_xs, mu_z=mu_z, sigma_xstar=sxs, sigma_z=sz,
        sigma_xstar_z=sxsz, sigma_T=0.5 * (st + st.T), sigma_T_Ttilde=dc.T @ ec / n,
        mu_T=mu_t, mu_Ttilde=mu_tt, sigma_T_z=dc.T @ zc / n, sigma_Ttilde_z=zc.T @ ec / n,
    ).check()


def nuisance_case3(data) -> NuisanceEstimates:
    data = as_dataset(data, "biomarker")
    if data.design != "biomarker" or data.x_bio is None:
        raise InsufficientData("biomarker design with x_bio/y_bio required")
    v = data.in_subset
    p, q = data.p, data.q
    if v.sum() < p + q + 2:
        raise InsufficientData(f"biomarker subset of {int(v.sum())} < p+q+2 = {p + q + 2}")
    d = _design_matrix(data.xstar[v], data.z[v])
    alpha = np.vstack([ols(d, data.x_bio[v, k]) for k in range(p)])
    c = ols(d, data.ystar[v] - data.y_bio[v])
    mu_xs = data.xstar.mean(axis=0)
    mu_z, sxs, sz, sxsz = _cohort_moments(data.xstar, data.z, mu_xs)
    return NuisanceEstimates(
        design="biomarker", mu_xstar=mu_xs, mu_z=mu_z, sigma_xstar=sxs, sigma_z=sz,
        sigma_xstar_z=sxsz, case3_alpha=alpha, case3_c=c,
    )


# ----------------------------------------------------------------- estimators

def _n_used(data: Dataset):
    return (data.N, data.n)


def calibrate_case1(data, pair_weight: str = "subject") -> CalibrationFit:
    data = as_dataset(data, "reliability")
    nu = nuisance_case1(data)
    xhat, yhat, w = case1_predictions(nu, data, pair_weight)
    beta = ols(_design_matrix(xhat, data.z), yhat, weights=w)
    diag = [] if pair_weight == "subject" else [f"pair_weight={pair_weight}"]
    return CalibrationFit(beta=beta, method="rc_case1", n_used=_n_used(data), nuisance=nu,
                          diagnostics=diag)


def calibrate_case2(data) -> CalibrationFit:
    data = as_dataset(data, "validation")
    nu = nuisance_case2(data)
    xhat, cstar = single_predictions(nu, data.xstar, data.z)
    beta = ols(_design_matrix(xhat, data.z), data.ystar - cstar)
    return CalibrationFit(beta=beta, method="rc_case2", n_used=_n_used(data), nuisance=nu)


def calibrate_case3(data) -> CalibrationFit:
    data = as_dataset(data, "biomarker")
    nu = nuisance_case3(data)
    xhat, yhat = case3_predictions(nu, data)
    beta = ols(_design_matrix(xhat, data.z), yhat)
    return CalibrationFit(beta=beta, method="rc_case3", n_used=_n_used(data), nuisance=nu)


def _plain_fit(x, z, y, method, data, nu=None) -> CalibrationFit:
    d = _design_matrix(x, z)
    beta = ols(d, y)
    return CalibrationFit(beta=beta, method=method, n_used=_n_used(data),
                          vcov=ols_vcov(d, y, beta), variance_method="ols", nuisance=nu)


def _cohort_only(data: Dataset) -> NuisanceEstimates:
    mu_xs = data.xstar.mean(axis=0)
    mu_z, sxs, sz, sxsz = _cohort_moments(data.xstar, data.z, mu_xs)
    return NuisanceEstimates(design=data.design, mu_xstar=mu_xs, mu_z=mu_z,
                             sigma_xstar=sxs, sigma_z=sz, sigma_xstar_z=sxsz)


def naive_fit(data) -> CalibrationFit:
    """OLS of the first-replicate Y* on (1, X*, Z)."""
    data = as_dataset(data)
    return _plain_fit(data.xstar, data.z, data.ystar, "naive", data, _cohort_only(data))


def true_fit(data) -> CalibrationFit:
    """OLS on the error-free (X, Y); simulation only."""
    data = as_dataset(data)
    if data.x_latent is not None:
        x, y = data.x_latent, data.y_latent
    elif data.x_true is not None and not np.isnan(data.x_true).any():
        x, y = data.x_true, data.y_true
    else:
        raise InsufficientData("true_fit needs X and Y on every record")
    return _plain_fit(x, data.z, y, "true", data, _cohort_only(data))


def moment_correction(data, design: str | None = None) -> CalibrationFit:
    """Method-of-moments correction sharing the RC nuisance estimates.

    Solves Cov(W, W) beta = Cov(W, Y) for W = (X, Z), writing both sides in
    observed moments minus error moments.

    Reliability: subject-level means (X*_bar, Y*_bar) whose error covariance is
    Sigma_T / k_i, corrected by Sigma_T * mean(1 / k_i).
    Validation: cohort moments of (X*, Z, Y*) corrected by Sigma_T,
    Sigma_TT~, Sigma_TZ and Sigma_T~Z.
    """
    data = as_dataset(data, design)
    design = design or data.design
    p = data.p
    if design == "reliability":
        nu = nuisance_case1(data)
        v = data.in_subset
        xbar = data.xstar.copy()
        ybar = data.ystar.copy()
        xbar[v] = 0.5 * (data.xstar[v] + data.xstar_rep[v])
        ybar[v] = 0.5 * (data.ystar[v] + data.ystar_rep[v])
        shrink = float(np.mean(1.0 / (1.0 + v)))
        xc = xbar - nu.mu_xstar
        zc = data.z - nu.mu_z
        mu_y = ybar.mean()
        yc = ybar - mu_y
        N = data.N
        sxx = xc.T @ xc / N
        lhs = np.block([[sxx - shrink * nu.sigma_T, xc.T @ zc / N],
                        [zc.T @ xc / N, nu.sigma_z]])
        rhs = np.concatenate([xc.T @ yc / N - shrink * nu.sigma_T_Ttilde, zc.T @ yc / N])
        slopes = solve_symmetric(0.5 * (lhs + lhs.T), rhs, name="moment-corrected Cov(W)")
        method = "mm_case1"
    elif design == "validation":
        nu = nuisance_case2(data)
        mu_y = float(data.ystar.mean())
        yc = data.ystar - mu_y
        xc = data.xstar - nu.mu_xstar
        zc = data.z - nu.mu_z
        N = data.N
        lhs = np.block([[nu.sigma_xstar - nu.sigma_T, nu.sigma_xstar_z],
                        [nu.sigma_x_z.T, nu.sigma_z]])
        rhs = np.concatenate([xc.T @ yc / N - nu.sigma_T_Ttilde, zc.T @ yc / N - nu.sigma_Ttilde_z])
        slopes = np.linalg.solve(lhs, rhs)
        mu_y = mu_y - nu.mu_Ttilde
        method = "mm_case2"
    else:
        raise ValueError(f"moment correction is defined for reliability/validation, not {design}")
    bx, bz = slopes[:p], slopes[p:]
    beta0 = mu_y - bx @ nu.mu_x - bz @ nu.mu_z
    return CalibrationFit(beta=np.concatenate([[beta0], slopes]), method=method,
                          n_used=_n_used(data), nuisance=nu)


_ESTIMATORS = {
    "true": true_fit,
    "naive": naive_fit,
    "rc_case1": calibrate_case1,
    "rc_case2": calibrate_case2,
    "rc_case3": calibrate_case3,
    "mm_case1": lambda d: moment_correction(d, "reliability"),
    "mm_case2": lambda d: moment_correction(d, "validation"),
}


def fit_point(data, method: str) -> CalibrationFit:
    """Point estimate only (no variance) for any method tag."""
    if method not in _ESTIMATORS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return _ESTIMATORS[method](as_dataset(data))
