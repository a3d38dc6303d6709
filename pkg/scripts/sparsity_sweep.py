"""Sparsity of the optimal policy along a lambda grid, for every preset regularizer.

Writes one CSV per regularizer (via ``regmdp sweep``) and prints delta at a few
grid points plus the probe-state row at the smallest and largest lambda.

    python3 scripts/sparsity_sweep.py --env random --outdir runs/random
    python3 scripts/sparsity_sweep.py --env gridworld --outdir runs/grid
"""

import argparse
import json
import os
import sys

import numpy as np

from regmdp.analysis import read_sweep_csv
from regmdp.cli import main as cli_main
from regmdp.regularizer import PRESET_NAMES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", choices=["random", "gridworld"], default="random")
    ap.add_argument("--lambdas", default="logspace(1e-3,1e3,61)")
    ap.add_argument("--outdir", default="runs")
    ap.add_argument("--probe", type=int, default=None)
    args = ap.parse_args()

    os.makedirs(args.outdir, exist_ok=True)
    pattern = os.path.join(args.outdir, f"{args.env}_{{reg}}.csv")
    argv = ["sweep", "--env", args.env, "--lambdas", args.lambdas, "--out", pattern]
    if args.probe is not None:
        argv += ["--probe", str(args.probe)]
    code = cli_main(argv)
    if code:
        sys.exit(code)

    print()
    first = read_sweep_csv(pattern.replace("{reg}", PRESET_NAMES[0]))
    lams = np.array([r["lambda"] for r in first])
    picks = np.unique(np.linspace(0, len(lams) - 1, 7).round().astype(int))
    print("delta".ljust(10) + "".join(f"{lams[i]:>10.3g}" for i in picks))
    for name in PRESET_NAMES:
        rows = read_sweep_csv(pattern.replace("{reg}", name))
        print(name.ljust(10) + "".join(f"{rows[i]['delta']:>10.3f}" for i in picks))

    print("\nprobe-state probabilities at the smallest and largest lambda")
    for name in PRESET_NAMES:
        with open(pattern.replace("{reg}", name) + ".meta.json", encoding="utf-8") as fh:
            points = json.load(fh)["points"]
        for pt in (points[0], points[-1]):
            for state, probs in pt["probe"].items():
                row = " ".join(f"{p:.3f}" for p in probs)
                print(f"{name:8s} lambda={pt['lambda']:<8.3g} state {state:>3s}: {row}")

if __name__ == "__main__":
    main()
