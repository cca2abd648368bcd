"""How much of the convergence-proxy KS sequence is sampling noise?

Runs the convergence experiment at several replica counts and prints the
consecutive KS distances next to the null mean, i.e. the expected KS distance
between two independent samples of the same law (computed by permutation on
the pooled n_max sample).
"""
import argparse

import numpy as np
from scipy import stats

from dynperc.experiments import ExperimentConfig, execute, largest_stats
from dynperc.rng import replica_seed


def null_ks(values: np.ndarray, m: int, rounds: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(rounds):
        perm = rng.permutation(values)
        out.append(stats.ks_2samp(perm[:m], perm[m:2 * m]).statistic)
    return float(np.mean(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-list", default="500,2000,8000")
    ap.add_argument("--replicas", default="500,2000")
    ap.add_argument("--seed", type=int, default=10)
    args = ap.parse_args()
    n_list = tuple(int(v) for v in args.n_list.split(","))
    for reps in (int(v) for v in args.replicas.split(",")):
        rep, _ = execute(ExperimentConfig("convergence", n_list=n_list, replicas=reps, seed=args.seed))
        pool = np.array([largest_stats(n_list[-1], 0.0, replica_seed(args.seed + 1, i))["largest_size"]
                         for i in range(2 * reps)])
        ks = ", ".join(f"KS({k['n_a']},{k['n_b']})={k['statistic']:.3f}" for k in rep["ks"])
        print(f"replicas={reps}: {ks}; null mean KS={null_ks(pool, reps, 200, 0):.3f}; "
              f"non-increasing={rep['non_increasing']}", flush=True)


if __name__ == "__main__":
    main()
