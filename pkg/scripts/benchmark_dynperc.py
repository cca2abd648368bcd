"""Time one dynamical-percolation trajectory with component analysis at every snapshot."""
import argparse
import time

import numpy as np

from dynperc.dynamics import ProcessSpec, run
from dynperc.graph_state import sample_er


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--t-max", type=float, default=2.0)
    ap.add_argument("--snapshots", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    g = sample_er(args.n, 0.0, args.seed)
    times = tuple(np.linspace(args.t_max / args.snapshots, args.t_max, args.snapshots))
    spec = ProcessSpec.critical("dynperc", args.n, 0.0, args.t_max, snapshot_times=times)
    start = time.perf_counter()
    traj = run(g, spec, args.seed)
    sim = time.perf_counter() - start
    for s in traj.snapshots:
        c = s.components[0]
        print(f"t={s.time:.2f} edges={s.edge_count} largest={c.size:.3f} surplus={c.surplus} diam={c.diameter:.3f}")
    print(f"{traj.event_count} events; simulation {sim:.2f}s; total {time.perf_counter() - start:.2f}s")


if __name__ == "__main__":
    main()
