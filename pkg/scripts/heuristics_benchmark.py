"""Compare warm-start, early-fix and trust-region against a plain solve.

Trains a bias model on small instances, then sweeps the fraction of fixed
variables on larger unseen instances. One CSV row per (instance, mode, N).
"""
from __future__ import annotations

import argparse
import csv
import logging
import tempfile
from collections import defaultdict

import numpy as np

from onts.dataset import attempt_seed, bias_samples, generate_dataset, load_dataset
from onts.generate import random_instance
from onts.gnn import SatGNNConfig, train
from onts.heuristics import predict_bias, run_heuristic
from onts.solver import SolveOptions, solve_bb

log = logging.getLogger("heuristics_benchmark")


def train_bias_model(train_jobs, T, n, seed, epochs):
    records = []
    with tempfile.TemporaryDirectory() as tmp:
        for J in train_jobs:
            root = generate_dataset(J, T, n, seed + J, tmp, n_random=0, n_neighbor=0)
            records += load_dataset(root)
    samples = bias_samples(records, "opt-m")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_val = max(1, len(samples) // 5)
    config = SatGNNConfig.bias_default(max_epochs=epochs, batch_size=8, seed=seed)
    params, hist = train(config, [samples[k] for k in order[n_val:]], [samples[k] for k in order[:n_val]])
    log.info("bias model: %d samples, best val loss %.4f", len(samples), min(hist.val_losses()))
    return config, params


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train-jobs", type=int, nargs="+", default=[2, 3])
    ap.add_argument("--test-jobs", type=int, default=4)
    ap.add_argument("--T", type=int, default=10)
    ap.add_argument("--n-train", type=int, default=30)
    ap.add_argument("--n-test", type=int, default=20)
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.1, 0.2, 0.3, 0.4, 0.5])
    ap.add_argument("--delta", type=int, default=1)
    ap.add_argument("--pool", type=int, default=1)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="heuristics_benchmark.csv")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config, params = train_bias_model(args.train_jobs, args.T, args.n_train, args.seed, args.epochs)
    rows, summary = [], defaultdict(list)
    attempt, tested = 0, 0
    while tested < args.n_test:
        inst = random_instance(args.test_jobs, args.T, attempt_seed(args.seed + 999, attempt))
        attempt += 1
        plain = solve_bb(inst, SolveOptions(pool_size=args.pool, time_limit=10))
        if not plain.solutions:
            continue
        tested += 1
        probs = predict_bias(inst, config, params)
        for frac in args.fractions:
            N = int(frac * inst.n_binary)
            for mode in ("warm", "fix", "trust"):
                pool = run_heuristic(inst, None, mode, N=N, delta=args.delta, probs=probs, pool_size=args.pool)
                ratio = pool.best_qos / plain.best_qos if pool.solutions else float("nan")
                rows.append([tested, mode, N, pool.status, pool.nodes_explored, plain.nodes_explored, ratio])
                summary[mode, frac].append((bool(pool.solutions), pool.nodes_explored, plain.nodes_explored, ratio))

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "mode", "N", "status", "nodes", "plain_nodes", "qos_ratio"])
        writer.writerows(rows)
    print(f"{'mode':6} {'frac':>5} {'feasible':>9} {'nodes':>9} {'plain':>9} {'qos ratio':>10}")
    for (mode, frac), items in sorted(summary.items()):
        ok = [it for it in items if it[0]]
        nodes = np.mean([it[1] for it in ok]) if ok else float("nan")
        plain_nodes = np.mean([it[2] for it in ok]) if ok else float("nan")
        ratio = np.mean([it[3] for it in ok]) if ok else float("nan")
        print(f"{mode:6} {frac:5.2f} {len(ok):>4}/{len(items):<4} {nodes:9.1f} {plain_nodes:9.1f} {ratio:10.4f}")
    log.info("rows written to %s", args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
