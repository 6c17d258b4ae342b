"""Biomarker-design simulation calibrated to the dietary trial cohort.

Runs TRUE, NAIVE and the calibrated estimator with sandwich and with
bootstrap variance, printing one block per variance method.

    python3 scripts/whi_biomarker.py --replicates 200 --bootstrap 200
    python3 scripts/whi_biomarker.py --replicates 1000 --bootstrap 500   # full scale, slow
"""

import argparse
import sys
import time

from errcal.montecarlo import RunSpec, run, to_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--bootstrap", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2019)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out")
    args = ap.parse_args(argv)

    blocks = []
    for variance in ("sandwich", f"bootstrap:{args.bootstrap}"):
        t = time.time()
        methods = ["true", "naive", "rc_case3"] if variance == "sandwich" else ["rc_case3"]
        out = run(RunSpec("whi", methods, args.replicates, args.seed, variance_method=variance),
                  threads=args.threads)
        print(f"{variance}: {time.time() - t:.0f}s", file=sys.stderr)
        blocks.append(f"# variance={variance}\n" + to_csv(out))
    text = "".join(blocks)
    if args.out:
        open(args.out, "w").write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
