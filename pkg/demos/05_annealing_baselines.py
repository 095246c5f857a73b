"""Geometric-annealing AIS and SMC on Rings, for comparison with demo 03.

    python demos/05_annealing_baselines.py --levels 200
"""

import argparse

from rdsmc import AnnealConfig, RingsTarget, RngStream, run_ais_baseline, run_smc_baseline
from rdsmc.metrics import histogram_tvd, radius


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--levels", type=int, default=200)
    ap.add_argument("--N", type=int, default=1024)
    args = ap.parse_args()

    target = RingsTarget()
    R, tau = target.annealing_scale()
    ref = target.sample(RngStream(12345, ("metric", 1)), 200_000)
    cfg = AnnealConfig(N=args.N, T_anneal=args.levels, R=R, tau=tau)
    for name, run in (("AIS", run_ais_baseline), ("SMC", run_smc_baseline)):
        res = run(target, cfg, seed=0)
        tvd = histogram_tvd(radius(res.positions), radius(ref), res.weights)
        print(f"{name}: radius TVD {tvd:.3f}   log Z-hat {res.log_Z:+.3f}   final step size {res.step_size:.3f}")


if __name__ == "__main__":
    main()
