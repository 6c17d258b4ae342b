"""Simple linear regression sweep over rho(T, T~), error scale and subset size.

    python3 scripts/simple_regression.py --replicates 1000 --out simple.csv
"""

import argparse
import sys

from errcal.error_models import get_scenario
from errcal.montecarlo import RunSpec, run, to_csv

RHOS = (0.5, 0.25, 0.0, -0.25, -0.5)
SIGMAS = (1.0, 0.5)
SIZES = (25, 50, 100, 200, 400)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="scenario1_bx1")
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2019)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out")
    args = ap.parse_args(argv)

    base = get_scenario(args.scenario)
    chunks = []
    for sigma in SIGMAS:
        for rho in RHOS:
            spec = base.with_overrides({
                "error.sigma_T": [[sigma**2]], "error.sigma_Ttilde": sigma, "error.rho_TTtilde": [rho],
                "name": f"{base.name}_sigma{sigma:g}_rho{rho:+g}",
            })
            out = run(RunSpec(spec, ["true", "naive", "rc_case1"], args.replicates, args.seed,
                              subset_sizes=SIZES), threads=args.threads)
            text = to_csv(out)
            chunks.append(text if not chunks else text.split("\n", 1)[1])
            print(f"sigma={sigma} rho={rho:+} done", file=sys.stderr)
    text = "".join(chunks)
    if args.out:
        open(args.out, "w").write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
