"""Flag-failure rate of the structure classifier for G(n, p) sizes and for a geometric mass vector."""
import argparse

import numpy as np

from dynperc import coalescent as mc
from dynperc.experiments import ExperimentConfig, execute


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--replicas", type=int, default=500)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for eps in (0.2, 0.1):
        rep, _ = execute(ExperimentConfig("mc-structure", n=args.n, epsilon=eps, t_max=args.T,
                                          replicas=args.replicas, samples=args.samples, seed=args.seed))
        th = rep["thresholds"]
        print(f"G(n,p) sizes, eps={eps}: K={th['K']} eps1={th['epsilon1']} eps2={th['epsilon2']} "
              f"failure fraction={rep['failure_fraction']:.4f}")
    x = mc.MassVector.from_values(0.7 ** np.arange(40))
    for eps in (0.2, 0.1):
        th = mc.thresholds(x, eps, args.T, args.samples, seed=args.seed)
        reps = [mc.classify_structure(x, args.T, th, s) for s in range(args.replicas)]
        large = int(np.sum(x.x > th.epsilon1))
        print(f"geometric x, eps={eps}: K={th.K} eps1={th.epsilon1} eps2={th.epsilon2} "
              f"({large} large blocks) failure fraction={np.mean([not r.ok for r in reps]):.4f}")


if __name__ == "__main__":
    main()
