"""Replicated simulation harness and table metrics.

Replicate r of every subset size draws from the seed stream (base_seed, r),
so TRUE and NAIVE estimates coincide across subset sizes and a summary does
not depend on how replicates are split across worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .calibration import DESIGN_METHODS, coef_names
from .error_models import ScenarioSpec, generate, get_scenario
from .errors import AllReplicatesFailed, ErrcalError, InvalidScenario
from .inference import fit, parse_variance

Z95 = 1.96
CSV_COLUMNS = ("scenario", "n_subset", "method", "coef", "pct_bias", "se", "ase", "mse", "cp", "n_failed")


@dataclass
class RunSpec:
    scenario: ScenarioSpec | str
    methods: Sequence[str]
    replicates: int
    base_seed: int = 0
    variance_method: str = "sandwich"
    subset_sizes: Optional[Sequence[int]] = None
    pair_weight: str = "subject"

    def resolved(self) -> ScenarioSpec:
        spec = get_scenario(self.scenario) if isinstance(self.scenario, str) else self.scenario
        return spec

    def validate(self) -> "RunSpec":
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        spec = self.resolved()
        allowed = DESIGN_METHODS[spec.design]
        bad = [m for m in self.methods if m not in allowed]
        if bad:
            raise InvalidScenario(f"methods {bad} not valid for the {spec.design} design; choose from {allowed}")
        if not self.methods:
            raise ValueError("at least one method required")
        parse_variance(self.variance_method)
        for n in self.sizes():
            spec.with_overrides({"subset_n": int(n)}).validate()
        return self

    def sizes(self) -> list[int]:
        return [int(n) for n in self.subset_sizes] if self.subset_sizes else [self.resolved().subset_n]


@dataclass
class MonteCarloSummary:
    """Metrics for one (subset size, method) cell; arrays are per coefficient."""

    scenario: str
    n_subset: int
    method: str
    coef: list
    beta_true: np.ndarray
    pct_bias: np.ndarray
    se: np.ndarray
    ase: np.ndarray
    mse: np.ndarray
    cp: np.ndarray
    n_failed: int
    replicates: int
    estimates: np.ndarray = field(repr=False, default=None)      # (R_ok, k)
    std_errors: np.ndarray = field(repr=False, default=None)     # (R_ok, k)

    @property
    def n_success(self) -> int:
        return self.replicates - self.n_failed

    def rows(self) -> list[dict]:
        out = []
        for j, name in enumerate(self.coef):
            out.append({
                "scenario": self.scenario, "n_subset": self.n_subset, "method": self.method,
                "coef": name, "pct_bias": self.pct_bias[j], "se": self.se[j], "ase": self.ase[j],
                "mse": self.mse[j], "cp": self.cp[j], "n_failed": self.n_failed,
            })
        return out

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario, "n_subset": self.n_subset, "method": self.method,
            "coef": list(self.coef), "beta_true": self.beta_true.tolist(),
            "pct_bias": _jsonable(self.pct_bias), "se": _jsonable(self.se), "ase": _jsonable(self.ase),
            "mse": _jsonable(self.mse), "cp": _jsonable(self.cp),
            "n_failed": self.n_failed, "replicates": self.replicates,
        }


def _jsonable(a):
    return [None if not np.isfinite(x) else float(x) for x in np.asarray(a, dtype=float)]


def summarize(estimates, std_errors, beta_true, n_failed: int = 0, **meta) -> MonteCarloSummary:
    """Table metrics from per-replicate estimates and estimated SEs.

    se uses divisor R-1 and mse divisor R, so mse = bias^2 + se^2 (R-1)/R.
    Coverage uses beta_hat +/- 1.96 SE; a NaN SE gives NaN coverage.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    ses = np.atleast_2d(np.asarray(std_errors, dtype=float))
    beta = np.asarray(beta_true, dtype=float)
    R = est.shape[0]
    err = est - beta
    bias = err.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        pct = np.where(beta != 0, 100.0 * bias / beta, np.nan)
    se = err.std(axis=0, ddof=1) if R > 1 else np.full(beta.size, np.nan)
    mse = (err**2).mean(axis=0)
    if np.isnan(ses).all(axis=0).any():
        ase = np.where(np.isnan(ses).all(axis=0), np.nan, np.nanmean(np.where(np.isnan(ses), 0, ses), axis=0))
    else:
        ase = ses.mean(axis=0)
    covered = np.abs(err) <= Z95 * ses
    cp = np.where(np.isnan(ses).any(axis=0), np.nan, covered.mean(axis=0))
    return MonteCarloSummary(
        pct_bias=pct, se=se, ase=ase, mse=mse, cp=cp, beta_true=beta,
        n_failed=int(n_failed), replicates=R + int(n_failed),
        estimates=est, std_errors=ses, **meta,
    )


def mc_tolerance(summary: MonteCarloSummary, R: int) -> dict:
    """Monte Carlo error bands: binomial for coverage, normal for mean %bias."""
    if R < 100:
        raise ValueError("mc_tolerance needs R >= 100")
    with np.errstate(divide="ignore"):
        bias_band = Z95 * (np.asarray(summary.se) / np.sqrt(R)) / np.abs(summary.beta_true) * 100.0
    return {"cp": Z95 * np.sqrt(0.95 * 0.05 / R), "pct_bias": bias_band}


# ------------------------------------------------------------------ execution

def _replicate_block(spec: ScenarioSpec, methods, variance, base_seed, n, r_range, pair_weight):
    """Fit every method on replicates r_range; returns {method: [(r, beta, se) | (r, None, diag)]}."""
    out = {m: [] for m in methods}
    for r in r_range:
        try:
            data = generate(spec, (base_seed, r))
        except ErrcalError as exc:
            for m in methods:
                out[m].append((r, None, exc.diagnostic))
            continue
        for m in methods:
            try:
                res = fit(data, m, variance, seed=(base_seed, r, n), pair_weight=pair_weight)
                se = res.se if res.se is not None else np.full(res.beta.size, np.nan)
                out[m].append((r, res.beta, se))
            except ErrcalError as exc:
                out[m].append((r, None, exc.diagnostic))
    return n, out


def default_threads() -> int:
    env = os.environ.get("ERRCAL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run(spec: RunSpec, threads: int | None = None, chunk: int = 25) -> list[MonteCarloSummary]:
    """Run the replicate loop for every subset size and summarize per method."""
    spec.validate()
    base = spec.resolved()
    threads = default_threads() if threads is None else max(1, int(threads))
    jobs = []
    for n in spec.sizes():
        scen = base.with_overrides({"subset_n": n})
        for start in range(0, spec.replicates, chunk):
            r_range = range(start, min(start + chunk, spec.replicates))
            jobs.append((scen, tuple(spec.methods), spec.variance_method, spec.base_seed, n, r_range,
                         spec.pair_weight))
    if threads == 1 or len(jobs) == 1:
        results = [_replicate_block(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_replicate_block, *zip(*jobs)))

    collected = {(n, m): [] for n in spec.sizes() for m in spec.methods}
    for n, block in results:
        for m, items in block.items():
            collected[(n, m)].extend(items)

    names = coef_names(base.p, base.q)
    summaries = []
    for n in spec.sizes():
        for m in spec.methods:
            items = sorted(collected[(n, m)], key=lambda t: t[0])
            ok = [t for t in items if t[1] is not None]
            failed = len(items) - len(ok)
            if not ok:
                raise AllReplicatesFailed(f"all {len(items)} replicates failed for {m} at n={n}")
            summaries.append(summarize(
                np.array([t[1] for t in ok]), np.array([t[2] for t in ok]), base.model.beta,
                n_failed=failed, scenario=base.name or "custom", n_subset=n, method=m, coef=names,
            ))
    return summaries


# -------------------------------------------------------------------- output

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return "nan" if not np.isfinite(x) else f"{x:.6f}"


def to_csv(summaries: Sequence[MonteCarloSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in summaries:
        for row in s.rows():
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def to_json(summaries: Sequence[MonteCarloSummary]) -> str:
    return json.dumps([s.to_dict() for s in summaries], indent=2)
