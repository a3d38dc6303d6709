"""Error of the regularized optimum against the plain optimum, next to its bound.

For each preset and lambda prints ||V_lam* - V*||, the bound
lam phi(1/|A|) / (1 - gamma), their ratio, min_s (V_lam* - V*)(s) (must be
>= 0), and the suboptimality of the regularized policy on the plain MDP.
"""

import argparse

from regmdp.analysis import check_performance_error, policy_suboptimality, reference_optimum, regularized_optimum
from regmdp.cli import parse_lambdas
from regmdp.mdp import gridworld, random_mdp
from regmdp.regularizer import PRESET_NAMES, preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--env", choices=["random", "gridworld"], default="random")
    ap.add_argument("--lambdas", default="0.01,0.1,1")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()

    mdp = random_mdp(50, 10, 0.99, 0.95, args.seed) if args.env == "random" else gridworld(5, 0.99)
    v_star = reference_optimum(mdp, args.tol).v_star
    print(f"{'reg':8s} {'lambda':>8s} {'err':>12s} {'bound':>12s} {'err/bound':>10s} {'min diff':>10s} "
          f"{'subopt':>10s}  ok")
    for name in PRESET_NAMES:
        spec = preset(name)
        for lam in parse_lambdas(args.lambdas):
            chk = check_performance_error(mdp, spec, lam, args.tol, v_star=v_star)
            sub = policy_suboptimality(mdp, regularized_optimum(mdp, spec, lam, args.tol), v_star)
            print(f"{name:8s} {lam:8.3g} {chk.err:12.5g} {chk.bound:12.5g} {chk.err / chk.bound:10.4f} "
                  f"{chk.min_diff:10.2e} {sub:10.4g}  {'yes' if chk.passed else 'NO'}")


if __name__ == "__main__":
    main()
