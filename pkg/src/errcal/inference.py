"""Variance estimation for calibrated fits.

Two routes: the stacked estimating-function sandwich A^{-1} B A^{-T} / N with
a finite-difference Jacobian, and a bootstrap that resamples subjects within
the subset and within the remainder of the cohort.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .calibration import (
    CalibrationFit,
    NuisanceEstimates,
    _design_matrix,
    case1_predictions,
    case3_predictions,
    fit_point,
    single_predictions,
    PAIR_WEIGHTS,
)
from .core_stats import COND_LIMIT, unvech, vech
from .data import Dataset, as_dataset
from .errors import (
    ErrcalError,
    LayoutError,
    NearSingular,
    PsiNotRoot,
    UnstableBootstrap,
)

ROOT_TOL = 1e-6
FD_REL_STEP = 1e-5
BOOTSTRAP_RETRIES = 5
BOOTSTRAP_MAX_FAIL = 0.10

METHOD_DESIGN = {"rc_case1": "reliability", "rc_case2": "validation", "rc_case3": "biomarker"}


# -------------------------------------------------------------------- layout

@dataclass(frozen=True)
class ThetaLayout:
    """Ordered named blocks; ``kind`` is 'vec', 'sym' (vech) or 'mat' (row-major)."""

    design: str
    p: int
    q: int
    blocks: tuple  # of (name, kind, shape)

    @property
    def slices(self) -> dict:
        out, i = {}, 0
        for name, kind, shape in self.blocks:
            size = _block_size(kind, shape)
            out[name] = slice(i, i + size)
            i += size
        return out

    @property
    def dim(self) -> int:
        return sum(_block_size(k, s) for _, k, s in self.blocks)

    @property
    def names(self) -> list[str]:
        return [b[0] for b in self.blocks]


def _block_size(kind, shape):
    if kind == "sym":
        return shape[0] * (shape[0] + 1) // 2
    return int(np.prod(shape))


def make_layout(design: str, p: int, q: int) -> ThetaLayout:
    k = 1 + p + q
    beta = [("beta", "vec", (k,))]
    cohort = [
        ("mu_xstar", "vec", (p,)),
        ("sigma_xstar", "sym", (p, p)),
        ("mu_z", "vec", (q,)),
        ("sigma_z", "sym", (q, q)),
        ("sigma_xstar_z", "mat", (p, q)),
    ]
    if design == "ols":
        blocks = beta
    elif design == "reliability":
        blocks = beta + cohort + [("sigma_T", "sym", (p, p)), ("sigma_T_Ttilde", "vec", (p,))]
    elif design == "validation":
        blocks = beta + cohort + [
            ("mu_T", "vec", (p,)),
            ("mu_Ttilde", "vec", (1,)),
            ("sigma_T", "sym", (p, p)),
            ("sigma_T_Ttilde", "vec", (p,)),
            ("sigma_T_z", "mat", (p, q)),
            ("sigma_Ttilde_z", "vec", (q,)),
        ]
    elif design == "biomarker":
        blocks = beta + [("case3_alpha", "mat", (p, k)), ("case3_c", "vec", (k,))]
    else:
        raise LayoutError(f"no parameter layout for design {design!r}")
    return ThetaLayout(design=design, p=p, q=q, blocks=tuple(blocks))


@dataclass
class ThetaVector:
    values: np.ndarray
    layout: ThetaLayout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.layout.dim,):
            raise LayoutError(f"theta has length {self.values.size}, layout needs {self.layout.dim}")

    @classmethod
    def pack(cls, layout: ThetaLayout, parts: dict) -> "ThetaVector":
        chunks = []
        for name, kind, shape in layout.blocks:
            if name not in parts or parts[name] is None:
                raise LayoutError(f"missing block {name!r} for {layout.design} layout")
            a = np.asarray(parts[name], dtype=float)
            if kind == "sym":
                chunks.append(vech(a.reshape(shape)))
            else:
                if a.size != _block_size(kind, shape):
                    raise LayoutError(f"block {name!r} has size {a.size}, expected shape {shape}")
                chunks.append(a.reshape(-1))
        return cls(np.concatenate(chunks) if chunks else np.zeros(0), layout)

    def unpack(self) -> dict:
        out = {}
        for name, kind, shape in self.layout.blocks:
            v = self.values[self.layout.slices[name]]
            out[name] = unvech(v, shape[0]) if kind == "sym" else v.reshape(shape).copy()
        return out

    @property
    def beta(self) -> np.ndarray:
        return self.values[self.layout.slices["beta"]]

    def with_values(self, values) -> "ThetaVector":
        return ThetaVector(np.asarray(values, dtype=float), self.layout)


def theta_from_fit(fit: CalibrationFit) -> ThetaVector:
    """Pack beta and the fit's nuisance estimates into one parameter vector."""
    nu = fit.nuisance
    if fit.method in METHOD_DESIGN:
        design = METHOD_DESIGN[fit.method]
    elif fit.method in ("naive", "true"):
        design = "ols"
    else:
        raise LayoutError(f"no estimating functions for method {fit.method!r}")
    p = nu.p
    q = len(fit.beta) - 1 - p
    layout = make_layout(design, p, q)
    parts = {"beta": fit.beta}
    for name in layout.names[1:]:
        parts[name] = np.atleast_1d(getattr(nu, name))
    return ThetaVector.pack(layout, parts)


def nuisance_from_theta(theta: ThetaVector) -> NuisanceEstimates:
    lay = theta.layout
    parts = theta.unpack()
    p, q = lay.p, lay.q
    if lay.design == "biomarker":
        z = np.zeros
        return NuisanceEstimates(
            design="biomarker", mu_xstar=z(p), mu_z=z(q), sigma_xstar=z((p, p)),
            sigma_z=z((q, q)), sigma_xstar_z=z((p, q)),
            case3_alpha=parts["case3_alpha"], case3_c=parts["case3_c"],
        )
    nu = NuisanceEstimates(
        design=lay.design,
        mu_xstar=parts["mu_xstar"], mu_z=parts["mu_z"], sigma_xstar=parts["sigma_xstar"],
        sigma_z=parts["sigma_z"], sigma_xstar_z=parts["sigma_xstar_z"],
        sigma_T=parts["sigma_T"], sigma_T_Ttilde=parts["sigma_T_Ttilde"],
        mu_T=np.zeros(p), mu_Ttilde=0.0, sigma_T_z=np.zeros((p, q)), sigma_Ttilde_z=np.zeros(q),
    )
    if lay.design == "validation":
        nu.mu_T = parts["mu_T"]
        nu.mu_Ttilde = float(parts["mu_Ttilde"][0])
        nu.sigma_T_z = parts["sigma_T_z"]
        nu.sigma_Ttilde_z = parts["sigma_Ttilde_z"]
    return nu


# --------------------------------------------------------- estimating functions

def _outer_rows(a, b):
    """Row-wise flattened outer products a_i b_i^T, shape (N, pa*pb)."""
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def _vech_rows(a, sym):
    """Row-wise vech(a_i a_i^T - sym)."""
    d = a.shape[1]
    rows, cols = np.triu_indices(d)
    # lower triangle column-major: entries (cols, rows) of a a^T
    return a[:, cols] * a[:, rows] - sym[cols, rows]


def _score_rows(design, response, beta, weights=None):
    resid = response - design @ beta
    if weights is not None:
        resid = resid * weights
    return resid[:, None] * design


def _cohort_rows(parts, xstar, z, extra=None):
    mu, mu_z = parts["mu_xstar"], parts["mu_z"]
    dx = xstar - mu
    zc = z - mu_z
    sxx = _vech_rows(dx, parts["sigma_xstar"])
    sxz = _outer_rows(dx, zc) - parts["sigma_xstar_z"].reshape(-1)
    if extra is not None:
        v, x2 = extra
        d2 = x2 - mu
        sxx = sxx + v[:, None] * _vech_rows(d2, parts["sigma_xstar"])
        sxz = sxz + v[:, None] * (_outer_rows(d2, zc) - parts["sigma_xstar_z"].reshape(-1))
    return [sxx, zc, _vech_rows(zc, parts["sigma_z"]), sxz]


def psi_matrix(theta: ThetaVector, data: Dataset, pair_weight: str = "subject") -> np.ndarray:
    """Per-subject estimating-function values, shape (N, dim theta).

    The calibrated covariate and outcome are rebuilt from ``theta`` on every
    call so that the Jacobian differentiates through the calibration step.
    Layout 'ols' gives the plain least-squares score of Y* on (1, X*, Z).
    """
    lay = theta.layout
    if (data.p, data.q) != (lay.p, lay.q):
        raise LayoutError(f"theta layout is (p={lay.p}, q={lay.q}), data is (p={data.p}, q={data.q})")
    if lay.design not in ("ols", data.design):
        raise LayoutError(f"theta layout is for {lay.design}, data design is {data.design}")
    parts = theta.unpack()
    beta = parts["beta"]
    z = data.z

    if lay.design == "ols":
        return _score_rows(_design_matrix(data.xstar, z), data.ystar, beta)

    nu = nuisance_from_theta(theta)
    v = data.in_subset.astype(float)

    if lay.design == "biomarker":
        xhat, yhat = case3_predictions(nu, data)
        dstar = _design_matrix(data.xstar, z)
        xb = np.nan_to_num(data.x_bio)
        yb = np.nan_to_num(data.y_bio)
        alpha_rows = [v[:, None] * _score_rows(dstar, xb[:, k], nu.case3_alpha[k]) for k in range(lay.p)]
        c_rows = v[:, None] * _score_rows(dstar, data.ystar - yb, nu.case3_c)
        cols = [_score_rows(_design_matrix(xhat, z), yhat, beta)] + alpha_rows + [c_rows]
        return np.column_stack(cols)

    if lay.design == "reliability":
        xhat, yhat, w = case1_predictions(nu, data, pair_weight)
        x1 = data.xstar
        x2 = np.nan_to_num(data.xstar_rep)
        y2 = np.nan_to_num(data.ystar_rep)
        xbar = x1 + v[:, None] * (x2 - x1) / 2.0
        cols = [_score_rows(_design_matrix(xhat, z), yhat, beta, w), xbar - parts["mu_xstar"]]
        cohort = _cohort_rows(parts, x1, z, extra=(v, x2))
        cols += cohort
        d = (x1 - x2) * v[:, None]
        e = (data.ystar - y2) * v
        cols.append(v[:, None] * (_vech_rows(d / np.sqrt(2.0), parts["sigma_T"])))
        cols.append(v[:, None] * (d * e[:, None] / 2.0 - parts["sigma_T_Ttilde"]))
        return np.column_stack(cols)

    # validation
    xhat, cstar = single_predictions(nu, data.xstar, z)
    cols = [_score_rows(_design_matrix(xhat, z), data.ystar - cstar, beta),
            data.xstar - parts["mu_xstar"]]
    cols += _cohort_rows(parts, data.xstar, z)
    d = np.nan_to_num(data.xstar - data.x_true) - parts["mu_T"]
    e = np.nan_to_num(data.ystar - data.y_true) - parts["mu_Ttilde"][0]
    zc = z - parts["mu_z"]
    vv = v[:, None]
    cols += [
        vv * d,
        vv * e[:, None],
        vv * _vech_rows(d, parts["sigma_T"]),
        vv * (d * e[:, None] - parts["sigma_T_Ttilde"]),
        vv * (_outer_rows(d, zc) - parts["sigma_T_z"].reshape(-1)),
        vv * (zc * e[:, None] - parts["sigma_Ttilde_z"]),
    ]
    return np.column_stack(cols)


def psi(design: str, theta: ThetaVector, record, pair_weight: str = "subject") -> np.ndarray:
    """Estimating-function value for one subject.

    A lone record carries no cohort context beyond what ``theta`` already
    holds, so this is simply the matching row of :func:`psi_matrix`.
    """
    if theta.layout.design not in (design, "ols"):
        raise LayoutError(f"theta layout is for {theta.layout.design}, requested {design}")
    data = Dataset.from_records([record], design=design)
    return psi_matrix(theta, data, pair_weight)[0]


# ------------------------------------------------------------------ sandwich

@dataclass
class SandwichResult:
    vcov: np.ndarray
    beta_vcov: np.ndarray
    a_matrix: np.ndarray
    b_matrix: np.ndarray
    psi_residual_norm: float
    theta: ThetaVector
    newton_steps: int = 0

    def to_dict(self) -> dict:
        return {
            "psi_residual_norm": self.psi_residual_norm,
            "newton_steps": self.newton_steps,
            "a_matrix": self.a_matrix.tolist(),
            "b_matrix": self.b_matrix.tolist(),
            "theta_layout": [[n, s.start, s.stop] for n, s in self.theta.layout.slices.items()],
        }


def fd_steps(theta) -> np.ndarray:
    return np.maximum(FD_REL_STEP, FD_REL_STEP * np.abs(theta))


def jacobian(fn: Callable, theta, stencil: int = 2) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at ``theta`` (2- or 4-point)."""
    theta = np.asarray(theta, dtype=float)
    h = fd_steps(theta)
    cols = []
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h[j]
        if stencil == 2:
            col = (fn(theta + e) - fn(theta - e)) / (2 * h[j])
        elif stencil == 4:
            col = (-fn(theta + 2 * e) + 8 * fn(theta + e) - 8 * fn(theta - e) + fn(theta - 2 * e)) / (12 * h[j])
        else:
            raise ValueError("stencil must be 2 or 4")
        cols.append(col)
    return np.column_stack(cols)


def _mean_psi_fn(theta: ThetaVector, data: Dataset, pair_weight: str):
    def fn(values):
        return psi_matrix(theta.with_values(values), data, pair_weight).mean(axis=0)
    return fn


def refine_root(theta: ThetaVector, data: Dataset, pair_weight: str = "subject",
                max_iter: int = 50) -> tuple[ThetaVector, int]:
    """Damped Newton on the averaged estimating function until the root tolerance holds."""
    fn = _mean_psi_fn(theta, data, pair_weight)
    x = theta.values.copy()
    g = fn(x)
    for it in range(max_iter + 1):
        if np.abs(g).max(initial=0.0) <= ROOT_TOL:
            return theta.with_values(x), it
        if it == max_iter:
            break
        step = np.linalg.solve(jacobian(fn, x), g)
        t = 1.0
        while t > 1e-4:
            cand = x - t * step
            gc = fn(cand)
            if np.abs(gc).max() < np.abs(g).max():
                x, g = cand, gc
                break
            t /= 2
        else:
            break
    raise PsiNotRoot(f"sum of estimating functions not zero: max |mean psi| = {np.abs(g).max():.3g}")


def sandwich(design: str, data, theta_hat: ThetaVector, pair_weight: str = "subject",
             stencil: int = 2) -> SandwichResult:
    data = as_dataset(data, None if design == "ols" else design)
    if theta_hat.layout.design != design:
        raise LayoutError(f"theta layout is for {theta_hat.layout.design}, requested {design}")
    theta, steps = refine_root(theta_hat, data, pair_weight)
    N = data.N
    fn = _mean_psi_fn(theta, data, pair_weight)
    a = -jacobian(fn, theta.values, stencil)
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NearSingular("A", float(cond))
    rows = psi_matrix(theta, data, pair_weight)
    b = rows.T @ rows / N
    a_inv_b = np.linalg.solve(a, b)
    vcov = np.linalg.solve(a, a_inv_b.T).T / N
    vcov = 0.5 * (vcov + vcov.T)
    sl = theta.layout.slices["beta"]
    return SandwichResult(
        vcov=vcov, beta_vcov=vcov[sl, sl].copy(), a_matrix=a, b_matrix=b,
        psi_residual_norm=float(np.abs(rows.sum(axis=0)).max() / N),
        theta=theta, newton_steps=steps,
    )


# ----------------------------------------------------------------- bootstrap

@dataclass
class BootstrapResult:
    se: np.ndarray
    vcov: np.ndarray
    betas: np.ndarray
    n_failed: int
    n_redrawn: int
    b: int

    def to_dict(self) -> dict:
        return {"b": self.b, "n_failed": self.n_failed, "n_redrawn": self.n_redrawn}


def _seed_words(seed) -> list[int]:
    return [int(s) for s in (seed if isinstance(seed, (tuple, list)) else (seed,))]


def stratified_indices(in_subset, rng: np.random.Generator) -> np.ndarray:
    """Resample with replacement separately within and outside the subset."""
    sub = np.flatnonzero(in_subset)
    rest = np.flatnonzero(~np.asarray(in_subset, dtype=bool))
    parts = [rng.choice(grp, size=grp.size, replace=True) for grp in (sub, rest) if grp.size]
    return np.sort(np.concatenate(parts))


def bootstrap(design: str, data, estimator: Callable, b: int, seed,
              retries: int = BOOTSTRAP_RETRIES) -> BootstrapResult:
    """Stratified nonparametric bootstrap SE of ``estimator(data).beta``.

    Resample r, attempt k draws from ``SeedSequence([*seed, r, k])``. A
    resample whose fit raises a library error is redrawn up to ``retries``
    times before it is counted as failed.
    """
    if b < 2:
        raise ValueError("bootstrap needs b >= 2")
    data = as_dataset(data, design)
    words = _seed_words(seed)
    betas, failed, redrawn = [], 0, 0
    for r in range(b):
        for k in range(retries + 1):
            rng = np.random.default_rng(np.random.SeedSequence(words + [r, k]))
            try:
                betas.append(np.asarray(estimator(data.take(stratified_indices(data.in_subset, rng))).beta))
                break
            except ErrcalError:
                redrawn += 1
        else:
            failed += 1
            redrawn -= 1
    if failed > BOOTSTRAP_MAX_FAIL * b:
        raise UnstableBootstrap(f"{failed} of {b} bootstrap resamples failed")
    betas = np.array(betas)
    if betas.shape[0] < 2:
        raise UnstableBootstrap("fewer than 2 successful bootstrap resamples")
    vcov = np.atleast_2d(np.cov(betas, rowvar=False, ddof=1))
    return BootstrapResult(se=betas.std(axis=0, ddof=1), vcov=vcov, betas=betas,
                           n_failed=failed, n_redrawn=redrawn, b=b)


# ------------------------------------------------------------------ dispatch

def parse_variance(spec: str | None) -> tuple[str, int]:
    """'sandwich' -> ('sandwich', 0); 'bootstrap:200' -> ('bootstrap', 200)."""
    if spec is None or spec == "none":
        return "none", 0
    if spec == "sandwich":
        return "sandwich", 0
    if spec.startswith("bootstrap"):
        _, _, b = spec.partition(":")
        b = int(b) if b else 500
        if b < 2:
            raise ValueError("bootstrap needs b >= 2")
        return "bootstrap", b
    raise ValueError(f"unknown variance method {spec!r}")


def fit(data, method: str, variance: str | None = "sandwich", seed=0,
        pair_weight: str = "subject") -> CalibrationFit:
    """Point estimate plus variance for one method.

    ``variance`` is 'sandwich', 'bootstrap:<b>' or None. Under 'sandwich'
    naive/true fits keep the classical OLS variance and moment-correction fits
    get none (their SEs are bootstrap-only).
    """
    data = as_dataset(data)
    kind, b = parse_variance(variance)
    if pair_weight not in PAIR_WEIGHTS:
        raise ValueError(f"pair_weight must be one of {tuple(PAIR_WEIGHTS)}")

    def estimate(d):
        if method == "rc_case1":
            from .calibration import calibrate_case1
            return calibrate_case1(d, pair_weight)
        return fit_point(d, method)

    result = estimate(data)
    if kind == "none":
        result.vcov, result.variance_method = None, None
        return result
    if kind == "bootstrap":
        boot = bootstrap(data.design, data, estimate, b, seed)
        result.vcov = boot.vcov
        result.variance_method = f"bootstrap:{b}"
        result.variance_info = boot.to_dict()
        return result
    if method in METHOD_DESIGN:
        sw = sandwich(METHOD_DESIGN[method], data, theta_from_fit(result), pair_weight)
        result.beta = sw.theta.beta.copy()
        result.vcov = sw.beta_vcov
        result.variance_method = "sandwich"
        result.variance_info = sw.to_dict()
    elif method.startswith("mm_"):
        result.vcov, result.variance_method = None, None
        result.diagnostics.append("moment correction has bootstrap-only variance")
    return result
