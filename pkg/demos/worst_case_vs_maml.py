"""Worst-task loss of DA-MAML against average-loss MAML on a skewed task mix.

Eight quadratic tasks in d = 10: six near the origin and a group of two
with far-away minimizers that the MAML baseline samples with total
probability 0.1. Both methods get the same batch sizes and step size.

    python demos/worst_case_vs_maml.py
"""

import numpy as np

from minimax_meta import FeasibleSet, NoiseModel, RunConfig, quadratic_suite
from minimax_meta import run_da_maml, run_maml_baseline


def main(seeds=3):
    d = 10
    rng = np.random.default_rng(7)
    offsets = np.vstack([0.5 * rng.standard_normal((6, d)),
                         3.0 * np.eye(d)[:2] + 0.3 * rng.standard_normal((2, d))])
    tasks = quadratic_suite(8, d, FeasibleSet.ball(4.0, dim=d), seed=11, offsets=offsets,
                            noise=NoiseModel(0.5, 0.5, 0.0))
    probs = np.r_[np.full(6, 0.15), np.full(2, 0.05)]
    np.set_printoptions(precision=2, suppress=True)
    for s in range(seeds):
        cfg = RunConfig(0.1, 5000, C=3, D=5, seed=s)
        ours, base = run_da_maml(cfg, tasks), run_maml_baseline(cfg, tasks, probs)
        print(f"seed {s}")
        print(f"  DA-MAML losses {ours.final.task_losses}  worst {ours.final.worst_loss:.3f}")
        print(f"  MAML    losses {base.final.task_losses}  worst {base.final.worst_loss:.3f}")
        print(f"  DA-MAML task weights {ours.p_out}")


if __name__ == "__main__":
    main()
