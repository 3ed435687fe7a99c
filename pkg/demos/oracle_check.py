"""Cross-check both solvers against brute force on random tiny distributions.

    python3 demos/oracle_check.py [--instances 10] [--seed 1]
"""

import argparse

import numpy as np

from specshare import AipcProblem, PclcProblem, brute_force_p1, brute_force_p2, solve_aipc, solve_pclc
from specshare.oracle import random_discrete_ensemble


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=10)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print("problem states  oracle      solver      rel.diff")
    for k in range(args.instances):
        ens = random_discrete_ensemble(rng, 3 + k % 3, pu=("cp", "wf")[k % 2])
        prob = AipcProblem(float(rng.uniform(0.05, 3.0)), 10.0)
        ref, sol = brute_force_p1(ens, prob), solve_aipc(ens, prob)
        print(f"AIPC    {ens.n}       {ref.objective:.8f}  {sol.c_s:.8f}  {sol.c_s / ref.objective - 1:+.1e}")
    for k in range(args.instances):
        ens = random_discrete_ensemble(rng, 2 + k % 2, pu=("cp", "wf")[k % 2])
        prob = PclcProblem.from_loss_fraction(ens, float(rng.uniform(0.01, 0.3)), 10.0)
        ref, sol = brute_force_p2(ens, prob), solve_pclc(ens, prob)
        print(f"PCLC    {ens.n}       {ref.objective:.8f}  {sol.c_s:.8f}  {sol.c_s / ref.objective - 1:+.1e}")


if __name__ == "__main__":
    main()
