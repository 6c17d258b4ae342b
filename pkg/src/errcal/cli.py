"""Command-line front end.

    errcal list-scenarios
    errcal fit --scenario whi --seed 1 --methods rc_case3 --variance bootstrap:500 --format json
    errcal simulate --scenario scenario1_bx1 --methods true,naive,rc_case1 \\
        --replicates 1000 --subset-sizes 25,50,100,200,400 --seed 7 --out t1.csv

Exit status: 0 on success, 2 on usage errors (including unknown scenarios),
1 on computation errors, which print the diagnostic class name.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .calibration import DESIGN_METHODS
from .data import Dataset, SubjectRecord
from .error_models import generate, get_scenario, load_registry
from .errors import ErrcalError
from .inference import fit, parse_variance
from .montecarlo import RunSpec, default_threads, run, to_csv, to_json


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    command: str
    scenario: Optional[str] = None
    methods: list = field(default_factory=list)
    replicates: int = 1000
    subset_sizes: Optional[list] = None
    seed: int = 0
    variance: str = "sandwich"
    out: Optional[str] = None
    format: str = "csv"
    overrides: dict = field(default_factory=dict)
    threads: Optional[int] = None
    data: Optional[str] = None
    pair_weight: str = "subject"


def _csv_list(text: str, cast=str) -> list:
    try:
        return [cast(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _int_list(text: str) -> list:
    return _csv_list(text, int)


def _override(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="errcal", description="Regression calibration for outcome and covariate measurement error")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list-scenarios", help="print the bundled scenario names")
    for name, helptext in (("fit", "fit methods to one dataset"), ("simulate", "Monte Carlo sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", help="registry name or path to a scenario JSON file")
        p.add_argument("--methods", type=_csv_list, help="comma-separated method tags")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--variance", default="sandwich", help="sandwich | bootstrap:<b> | none")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv" if name == "simulate" else "json")
        p.add_argument("--set", dest="overrides", action="append", type=_override, default=[],
                       metavar="KEY=VALUE", help="dotted scenario override, value parsed as JSON")
        p.add_argument("--pair-weight", choices=("subject", "replicate"), default="subject")
        if name == "simulate":
            p.add_argument("--replicates", type=int, default=1000)
            p.add_argument("--subset-sizes", type=_int_list)
            p.add_argument("--threads", type=int)
        else:
            p.add_argument("--data", help="JSON list of subject records to fit instead of a simulated draw")
    return ap


def parse_config(argv) -> CliConfig:
    ns = build_parser().parse_args(argv)
    cfg = CliConfig(command=ns.command)
    if ns.command == "list-scenarios":
        return cfg
    cfg.scenario = ns.scenario
    cfg.methods = ns.methods or []
    cfg.seed = ns.seed
    cfg.variance = ns.variance
    cfg.out = ns.out
    cfg.format = ns.format
    cfg.overrides = dict(ns.overrides)
    cfg.pair_weight = ns.pair_weight
    if ns.command == "simulate":
        cfg.replicates = ns.replicates
        cfg.subset_sizes = ns.subset_sizes
        cfg.threads = ns.threads
        if cfg.replicates < 1:
            raise UsageError("--replicates must be >= 1")
        if cfg.threads is not None and cfg.threads < 1:
            raise UsageError("--threads must be >= 1")
    else:
        cfg.data = ns.data
    if not cfg.scenario and not cfg.data:
        raise UsageError(f"{cfg.command} requires --scenario")
    try:
        parse_variance(cfg.variance)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _resolve_scenario(cfg: CliConfig):
    try:
        spec = get_scenario(cfg.scenario)
    except KeyError:
        names = ", ".join(load_registry())
        raise UsageError(f"unknown scenario {cfg.scenario!r}; registry scenarios: {names}")
    if cfg.overrides:
        spec = spec.with_overrides(cfg.overrides)
    return spec


def _check_methods(methods, design):
    allowed = DESIGN_METHODS[design]
    if not methods:
        raise UsageError(f"--methods required; valid for {design}: {','.join(allowed)}")
    bad = [m for m in methods if m not in allowed]
    if bad:
        raise UsageError(f"methods {bad} not valid for the {design} design; choose from {','.join(allowed)}")


def _write(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _fit_command(cfg: CliConfig) -> str:
    if cfg.data:
        records = [SubjectRecord.from_dict(r) for r in json.loads(Path(cfg.data).read_text())]
        data = Dataset.from_records(records)
        label = Path(cfg.data).name
    else:
        spec = _resolve_scenario(cfg)
        data = generate(spec, cfg.seed)
        label = spec.name
    _check_methods(cfg.methods, data.design)
    fits = [fit(data, m, cfg.variance, seed=cfg.seed, pair_weight=cfg.pair_weight) for m in cfg.methods]
    if cfg.format == "json":
        docs = [dict(f.to_dict(), scenario=label) for f in fits]
        return json.dumps(docs[0] if len(docs) == 1 else docs, indent=2)
    lines = ["scenario,method,coef,estimate,se"]
    for f in fits:
        se = f.se
        for j, name in enumerate(f.coef_names()):
            s = "nan" if se is None else f"{se[j]:.6f}"
            lines.append(f"{label},{f.method},{name},{f.beta[j]:.6f},{s}")
    return "\n".join(lines) + "\n"


def _simulate_command(cfg: CliConfig) -> str:
    spec = _resolve_scenario(cfg)
    _check_methods(cfg.methods, spec.design)
    rs = RunSpec(scenario=spec, methods=cfg.methods, replicates=cfg.replicates, base_seed=cfg.seed,
                 variance_method=cfg.variance, subset_sizes=cfg.subset_sizes, pair_weight=cfg.pair_weight)
    threads = cfg.threads if cfg.threads is not None else default_threads()
    summaries = run(rs, threads=threads)
    return to_csv(summaries) if cfg.format == "csv" else to_json(summaries)


def main(argv=None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
        if cfg.command == "list-scenarios":
            _write("\n".join(load_registry()), None)
            return 0
        text = _fit_command(cfg) if cfg.command == "fit" else _simulate_command(cfg)
        _write(text, cfg.out)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"errcal: error: {exc}", file=sys.stderr)
        return 2
    except ErrcalError as exc:
        print(f"errcal: {exc.diagnostic}: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        print(f"errcal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
