"""Generative scenarios: outcome model, error model, seeded generators.

Parameter conventions
---------------------
* ``sigma_x``, ``sigma_z``, ``ErrorSpec.sigma_T`` and ``bio_sigma_eta`` are
  covariance matrices.
* ``sigma_eps``, ``sigma_Ttilde`` and ``bio_sigma_nu`` are standard deviations.
* ``rho_xz`` is the p x q correlation block between X and Z.
* ``rho_TTtilde`` holds cor(T_k, T~) for each covariate component k.

Seeds are numpy ``SeedSequence`` entropy: an int or a tuple of ints such as
``(base_seed, replicate)``. Draw order is fixed and does not depend on the
design or on ``subset_n``, so one seed yields the same latent cohort for every
subset size.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .data import DESIGNS, Dataset
from .errors import InvalidScenario

ERROR_SHAPES = ("gaussian", "normal_mixture", "log_normal")

# normal_mixture: 0.5 N(-a s, s^2) + 0.5 N(a s, s^2) with variance (1 + a^2) s^2 = 1
MIXTURE_OFFSET = 1.5
MIXTURE_SD = 1.0 / np.sqrt(1.0 + MIXTURE_OFFSET**2)
# log_normal: exp(N(0, s^2)) shifted/scaled to mean 0, variance 1
LOGNORMAL_SIGMA = 0.8


def _arr(x, shape=None) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a.reshape(shape) if shape is not None else a


@dataclass
class ModelSpec:
    beta0: float
    beta_x: np.ndarray
    beta_z: np.ndarray
    sigma_eps: float

    def __post_init__(self):
        self.beta_x = _arr(self.beta_x).reshape(-1)
        self.beta_z = _arr(self.beta_z).reshape(-1)
        self.beta0 = float(self.beta0)
        self.sigma_eps = float(self.sigma_eps)
        if self.sigma_eps < 0:
            raise InvalidScenario("sigma_eps must be >= 0")

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([[self.beta0], self.beta_x, self.beta_z])


@dataclass
class ErrorSpec:
    sigma_T: np.ndarray
    sigma_Ttilde: float
    rho_TTtilde: np.ndarray = 0.0
    alpha0: np.ndarray | None = None      # systematic_x intercept (p,)
    alpha1: np.ndarray | None = None      # systematic_x slope on Z (p, q)
    gamma0: float = 0.0                   # systematic_y intercept
    gamma1: np.ndarray | None = None      # systematic_y slope on Z (q,)
    bio_sigma_eta: np.ndarray | None = None
    bio_sigma_nu: float = 0.0
    error_shape: str = "gaussian"

    def __post_init__(self):
        self.sigma_T = np.atleast_2d(_arr(self.sigma_T))
        p = self.sigma_T.shape[0]
        self.sigma_Ttilde = float(self.sigma_Ttilde)
        self.rho_TTtilde = np.broadcast_to(_arr(self.rho_TTtilde), (p,)).copy()
        self.alpha0 = np.zeros(p) if self.alpha0 is None else _arr(self.alpha0).reshape(p)
        if self.alpha1 is not None:
            self.alpha1 = _arr(self.alpha1).reshape(p, -1)
        if self.gamma1 is not None:
            self.gamma1 = _arr(self.gamma1).reshape(-1)
        self.gamma0 = float(self.gamma0)
        self.bio_sigma_eta = (np.zeros((p, p)) if self.bio_sigma_eta is None
                              else np.atleast_2d(_arr(self.bio_sigma_eta)))
        self.bio_sigma_nu = float(self.bio_sigma_nu)
        if self.error_shape not in ERROR_SHAPES:
            raise InvalidScenario(f"unknown error_shape {self.error_shape!r}")

    @property
    def p(self) -> int:
        return self.sigma_T.shape[0]

    def joint_cov(self) -> np.ndarray:
        """Covariance of (T, T~) (or (U, U~) in the biomarker design)."""
        p = self.p
        sd_t = np.sqrt(np.clip(np.diag(self.sigma_T), 0, None))
        c = self.rho_TTtilde * sd_t * self.sigma_Ttilde
        out = np.zeros((p + 1, p + 1))
        out[:p, :p] = self.sigma_T
        out[:p, p] = out[p, :p] = c
        out[p, p] = self.sigma_Ttilde**2
        return out

    def has_systematic(self) -> bool:
        return bool(
            np.any(self.alpha0 != 0)
            or (self.alpha1 is not None and np.any(self.alpha1 != 0))
            or self.gamma0 != 0
            or (self.gamma1 is not None and np.any(self.gamma1 != 0))
        )


@dataclass
class ScenarioSpec:
    model: ModelSpec
    error: ErrorSpec
    mu_x: np.ndarray
    sigma_x: np.ndarray
    mu_z: np.ndarray
    sigma_z: np.ndarray
    rho_xz: np.ndarray
    cohort_n: int
    subset_n: int
    design: str
    name: str = "custom"

    def __post_init__(self):
        self.mu_x = _arr(self.mu_x).reshape(-1)
        p = self.mu_x.size
        self.mu_z = _arr(self.mu_z).reshape(-1)
        q = self.mu_z.size
        self.sigma_x = _arr(self.sigma_x).reshape(p, p)
        self.sigma_z = _arr(self.sigma_z).reshape(q, q)
        self.rho_xz = _arr(self.rho_xz).reshape(p, q)
        self.cohort_n = int(self.cohort_n)
        self.subset_n = int(self.subset_n)

    @property
    def p(self) -> int:
        return self.mu_x.size

    @property
    def q(self) -> int:
        return self.mu_z.size

    def xz_cov(self) -> np.ndarray:
        p, q = self.p, self.q
        cross = (np.sqrt(np.diag(self.sigma_x))[:, None] * self.rho_xz
                 * np.sqrt(np.diag(self.sigma_z))[None, :])
        out = np.zeros((p + q, p + q))
        out[:p, :p] = self.sigma_x
        out[p:, p:] = self.sigma_z
        out[:p, p:] = cross
        out[p:, :p] = cross.T
        return out

    def validate(self) -> "ScenarioSpec":
        p, q = self.p, self.q
        m, e = self.model, self.error
        if self.design not in DESIGNS:
            raise InvalidScenario(f"unknown design {self.design!r}")
        if m.beta_x.size != p or m.beta_z.size != q:
            raise InvalidScenario("beta dimensions do not match mu_x/mu_z")
        if e.p != p:
            raise InvalidScenario("sigma_T dimension does not match mu_x")
        if e.alpha1 is not None and e.alpha1.shape != (p, q):
            raise InvalidScenario("alpha1 must be p x q")
        if e.gamma1 is not None and e.gamma1.size != q:
            raise InvalidScenario("gamma1 must have length q")
        if not 2 <= self.subset_n <= self.cohort_n:
            raise InvalidScenario("need 2 <= subset_n <= cohort_n")
        if np.any(np.abs(self.rho_xz) > 1) or np.any(np.abs(e.rho_TTtilde) > 1):
            raise InvalidScenario("correlations must lie in [-1, 1]")
        if np.any(np.diag(self.sigma_x) < 0) or np.any(np.diag(self.sigma_z) < 0):
            raise InvalidScenario("sigma_x and sigma_z need nonnegative diagonals")
        if e.sigma_Ttilde < 0 or e.bio_sigma_nu < 0:
            raise InvalidScenario("standard deviations must be >= 0")
        for label, mat in (("(X, Z)", self.xz_cov()), ("(T, T~)", e.joint_cov()),
                           ("eta", e.bio_sigma_eta)):
            _require_psd(label, mat)
        if self.design == "reliability" and e.has_systematic():
            raise InvalidScenario("reliability design requires zero systematic error")
        return self

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        e = self.error
        return {
            "name": self.name,
            "design": self.design,
            "cohort_n": self.cohort_n,
            "subset_n": self.subset_n,
            "model": {
                "beta0": self.model.beta0,
                "beta_x": self.model.beta_x.tolist(),
                "beta_z": self.model.beta_z.tolist(),
                "sigma_eps": self.model.sigma_eps,
            },
            "error": {
                "sigma_T": e.sigma_T.tolist(),
                "sigma_Ttilde": e.sigma_Ttilde,
                "rho_TTtilde": e.rho_TTtilde.tolist(),
                "systematic_x": {
                    "alpha0": e.alpha0.tolist(),
                    "alpha1": None if e.alpha1 is None else e.alpha1.tolist(),
                },
                "systematic_y": {
                    "gamma0": e.gamma0,
                    "gamma1": None if e.gamma1 is None else e.gamma1.tolist(),
                },
                "bio_sigma_eta": e.bio_sigma_eta.tolist(),
                "bio_sigma_nu": e.bio_sigma_nu,
                "error_shape": e.error_shape,
            },
            "mu_x": self.mu_x.tolist(),
            "sigma_x": self.sigma_x.tolist(),
            "mu_z": self.mu_z.tolist(),
            "sigma_z": self.sigma_z.tolist(),
            "rho_xz": self.rho_xz.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        try:
            e = dict(d["error"])
            sx = e.pop("systematic_x", None) or {}
            sy = e.pop("systematic_y", None) or {}
            error = ErrorSpec(**e, alpha0=sx.get("alpha0"), alpha1=sx.get("alpha1"),
                              gamma0=sy.get("gamma0", 0.0), gamma1=sy.get("gamma1"))
            return cls(
                model=ModelSpec(**d["model"]),
                error=error,
                mu_x=d["mu_x"], sigma_x=d["sigma_x"],
                mu_z=d["mu_z"], sigma_z=d["sigma_z"], rho_xz=d["rho_xz"],
                cohort_n=d["cohort_n"], subset_n=d["subset_n"],
                design=d["design"], name=d.get("name", "custom"),
            ).validate()
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"malformed scenario document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))

    def with_overrides(self, overrides: dict) -> "ScenarioSpec":
        """Apply dotted-path overrides, e.g. ``{"error.rho_TTtilde": 0.5}``."""
        d = copy.deepcopy(self.to_dict())
        for key, value in overrides.items():
            parts = key.split(".")
            node = d
            for part in parts[:-1]:
                if not isinstance(node.get(part), dict):
                    raise InvalidScenario(f"unknown scenario field {key!r}")
                node = node[part]
            if parts[-1] not in node:
                raise InvalidScenario(f"unknown scenario field {key!r}")
            node[parts[-1]] = value
        return ScenarioSpec.from_dict(d)


def _require_psd(label: str, m: np.ndarray) -> None:
    if m.size == 0:
        return
    if not np.allclose(m, m.T, atol=1e-12):
        raise InvalidScenario(f"{label} covariance is not symmetric")
    w = np.linalg.eigvalsh(m)
    if w.min() < -1e-10 * max(1.0, np.abs(w).max()):
        raise InvalidScenario(f"{label} covariance is not positive semidefinite")


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """L with L @ L.T == cov; Cholesky when positive definite."""
    if cov.size == 0:
        return cov
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0, None))


def nonnormal_errors(shape: str, rng: np.random.Generator, size) -> np.ndarray:
    """Standardized draws (mean 0, variance 1) of the requested shape."""
    if shape == "gaussian":
        return rng.standard_normal(size)
    if shape == "normal_mixture":
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return MIXTURE_SD * (MIXTURE_OFFSET * sign + rng.standard_normal(size))
    if shape == "log_normal":
        s2 = LOGNORMAL_SIGMA**2
        mean = np.exp(s2 / 2)
        sd = np.sqrt((np.exp(s2) - 1) * np.exp(s2))
        return (np.exp(LOGNORMAL_SIGMA * rng.standard_normal(size)) - mean) / sd
    raise InvalidScenario(f"unknown error shape {shape!r}")


def make_rng(seed) -> np.random.Generator:
    entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
    return np.random.default_rng(np.random.SeedSequence(entropy))


def generate(spec: ScenarioSpec, seed) -> Dataset:
    """Simulate one cohort. The subset is the first ``subset_n`` subjects."""
    spec.validate()
    rng = make_rng(seed)
    N, n, p, q = spec.cohort_n, spec.subset_n, spec.p, spec.q
    m, e = spec.model, spec.error

    # fixed draw order: (X,Z), eps, replicate-1 errors, replicate-2 errors, biomarker errors
    mean_xz = np.concatenate([spec.mu_x, spec.mu_z])
    xz = mean_xz + rng.standard_normal((N, p + q)) @ _psd_factor(spec.xz_cov()).T
    x, z = xz[:, :p], xz[:, p:]
    eps = m.sigma_eps * rng.standard_normal(N)
    y = m.beta0 + x @ m.beta_x + z @ m.beta_z + eps

    err_factor = _psd_factor(e.joint_cov())
    err1 = nonnormal_errors(e.error_shape, rng, (N, p + 1)) @ err_factor.T
    err2 = nonnormal_errors(e.error_shape, rng, (N, p + 1)) @ err_factor.T
    eta = rng.standard_normal((N, p)) @ _psd_factor(e.bio_sigma_eta).T
    nu = e.bio_sigma_nu * rng.standard_normal(N)

    shift_x = np.broadcast_to(e.alpha0, (N, p)).copy()
    if e.alpha1 is not None:
        shift_x += z @ e.alpha1.T
    shift_y = np.full(N, e.gamma0)
    if e.gamma1 is not None:
        shift_y += z @ e.gamma1

    v = np.arange(N) < n
    xstar = x + shift_x + err1[:, :p]
    ystar = y + shift_y + err1[:, p]
    data = Dataset(design=spec.design, xstar=xstar, ystar=ystar, z=z, in_subset=v,
                   x_latent=x, y_latent=y)
    if spec.design == "reliability":
        data.xstar_rep = np.where(v[:, None], x + err2[:, :p], np.nan)
        data.ystar_rep = np.where(v, y + err2[:, p], np.nan)
    elif spec.design == "validation":
        data.x_true = np.where(v[:, None], x, np.nan)
        data.y_true = np.where(v, y, np.nan)
    else:
        data.x_bio = np.where(v[:, None], x + eta, np.nan)
        data.y_bio = np.where(v, y + nu, np.nan)
    return data


def whi_scenario() -> ScenarioSpec:
    """Case-3 generator calibrated to the dietary-trial cohort."""
    sd_x, sd_z, rho = 0.199, 5.547, 0.0043
    return ScenarioSpec(
        name="whi",
        model=ModelSpec(beta0=7.76, beta_x=[-0.192], beta_z=[0.013], sigma_eps=0.101),
        error=ErrorSpec(
            sigma_T=[[0.112**2]], sigma_Ttilde=0.3, rho_TTtilde=[-0.12],
            alpha0=[0.207], alpha1=[[0.0036]], gamma0=0.0054, gamma1=[-0.0113],
            bio_sigma_eta=[[0.186**2]], bio_sigma_nu=0.084,
        ),
        mu_x=[2.647], sigma_x=[[sd_x**2]], mu_z=[28.228], sigma_z=[[sd_z**2]],
        rho_xz=[[rho]], cohort_n=29_000, subset_n=540, design="biomarker",
    ).validate()


# registry ----------------------------------------------------------------

def load_registry(path: str | Path | None = None) -> dict[str, ScenarioSpec]:
    if path is None:
        text = resources.files("errcal").joinpath("scenarios.json").read_text()
    else:
        text = Path(path).read_text()
    raw = json.loads(text)
    return {name: ScenarioSpec.from_dict({**doc, "name": name}) for name, doc in raw.items()}


def get_scenario(name_or_path: str) -> ScenarioSpec:
    """Registry lookup, falling back to reading a JSON scenario file."""
    registry = load_registry()
    if name_or_path in registry:
        return registry[name_or_path]
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        spec = ScenarioSpec.from_json(path.read_text())
        return spec
    raise KeyError(name_or_path)
