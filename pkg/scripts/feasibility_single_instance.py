"""Train a feasibility classifier on the candidates of one instance.

Draws the first instance with a nonempty pool, builds pool / random /
neighbour candidates, trains on an 80/20 split and reports both accuracies.
"""
from __future__ import annotations

import argparse
import json
import logging

import numpy as np

from onts.dataset import attempt_seed, augment_candidates, feasibility_samples
from onts.generate import random_instance
from onts.gnn import SatGNNConfig, accuracy, train
from onts.solver import SolveOptions, solve_bb

log = logging.getLogger("feasibility_single_instance")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--J", type=int, default=3)
    ap.add_argument("--T", type=int, default=10)
    ap.add_argument("--pool", type=int, default=200)
    ap.add_argument("--n-random", type=int, default=100)
    ap.add_argument("--total", type=int, default=400, help="candidates in all; neighbours fill the remainder")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write the summary as JSON here")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    attempt = 0
    while True:
        inst = random_instance(args.J, args.T, attempt_seed(args.seed, attempt))
        pool = solve_bb(inst, SolveOptions(pool_size=args.pool))
        if pool.solutions:
            break
        attempt += 1
    n_neighbor = max(0, args.total - len(pool.solutions) - args.n_random)
    cands = augment_candidates(inst, pool.solutions, args.n_random, n_neighbor, seed=args.seed + 1)
    samples = feasibility_samples(inst, cands)
    log.info("instance from attempt %d: pool %d, %d candidates, %.1f%% feasible",
             attempt, len(pool.solutions), len(cands), 100 * np.mean([c.label for c in cands]))

    config = SatGNNConfig.feasibility_default(max_epochs=args.epochs, seed=args.seed)
    order = np.random.default_rng(args.seed).permutation(len(samples))
    cut = int(0.8 * len(samples))
    tr, te = [samples[k] for k in order[:cut]], [samples[k] for k in order[cut:]]
    params, hist = train(config, tr)
    summary = {
        "attempt": attempt,
        "n_candidates": len(cands),
        "epochs": len(hist.rows),
        "final_train_loss": hist.rows[-1][1],
        "train_accuracy": accuracy(params, config, tr),
        "test_accuracy": accuracy(params, config, te),
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
