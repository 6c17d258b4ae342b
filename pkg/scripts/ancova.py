"""ANCOVA sweep: correlated X and Z, rho(T, T~) and subset size varied.

    python3 scripts/ancova.py --replicates 1000 --out ancova.csv
"""

import argparse
import sys

from errcal.error_models import get_scenario
from errcal.montecarlo import RunSpec, run, to_csv

RHO_XZ = (0.5, 0.0)
RHO_TT = (0.5, 0.25, 0.0, -0.25, -0.5)
SIZES = (25, 50, 100, 200, 400)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=2019)
    ap.add_argument("--methods", default="true,naive,rc_case1")
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out")
    args = ap.parse_args(argv)

    base = get_scenario("scenario2")
    chunks = []
    for rxz in RHO_XZ:
        for rho in RHO_TT:
            spec = base.with_overrides({"rho_xz": [[rxz]], "error.rho_TTtilde": [rho],
                                        "name": f"scenario2_rxz{rxz:g}_rho{rho:+g}"})
            out = run(RunSpec(spec, args.methods.split(","), args.replicates, args.seed,
                              subset_sizes=SIZES), threads=args.threads)
            text = to_csv(out)
            chunks.append(text if not chunks else text.split("\n", 1)[1])
            print(f"rho_xz={rxz} rho={rho:+} done", file=sys.stderr)
    text = "".join(chunks)
    if args.out:
        open(args.out, "w").write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
