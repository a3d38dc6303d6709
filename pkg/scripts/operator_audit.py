"""Contraction, monotonicity, translation and sandwich checks for every preset.

Thin wrapper around ``regmdp audit`` with the small random MDP used in the
property tests; pass --perturb-gamma 1.01 to see the checks fail.
"""

import sys

from regmdp.cli import main as cli_main

if __name__ == "__main__":
    base = ["audit", "--env", "random", "--states", "20", "--actions", "5", "--gamma", "0.9",
            "--clip", "0.5", "--seed", "11", "--lambdas", "0,0.01,1", "--trials", "100"]
    sys.exit(cli_main(base + sys.argv[1:]))
