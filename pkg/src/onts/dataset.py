"""Dataset generation: random instances, solution pools and labelled candidates."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .generate import random_instance
from .gnn import Sample, bias_target
from .graph import encode_bipartite
from .milp import build_standard_form
from .model import CandidateSolution, Instance, check_feasibility
from .solver import SolutionPool, SolveOptions, read_pool_csv, solve_bb, write_pool_csv

log = logging.getLogger(__name__)

DEFAULT_POOL_SIZE = 50
DEFAULT_TIME_LIMIT = 10.0
DEFAULT_NODE_LIMIT = 2_000_000
ATTEMPTS_PER_INSTANCE = 100


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class LabeledCandidate:
    z: CandidateSolution
    label: int
    source: str  # pool | random | neighbor


def default_eta(J: int, T: int) -> int:
    return max(1, math.floor(0.05 * 2 * J * T))


def attempt_seed(seed: int, attempt: int) -> int:
    return int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])


def augment_candidates(inst: Instance, pool: Sequence, n_random: int, n_neighbor: int,
                       eta: int | None = None, seed: int = 0) -> list[LabeledCandidate]:
    """Pool members plus n_random uniform and n_neighbor flipped candidates, labelled by the checker."""
    if n_random < 0 or n_neighbor < 0:
        raise ValueError("candidate counts must be non-negative")
    n = inst.n_binary
    eta = default_eta(inst.J, inst.T) if eta is None else eta
    if eta < 1:
        raise ValueError("eta must be at least 1")
    eta = min(eta, n)
    members = [item[0] if isinstance(item, tuple) else item for item in pool]
    if n_neighbor and not members:
        raise ValueError("neighbour candidates need a nonempty pool")
    rng = np.random.default_rng(seed)
    out = [LabeledCandidate(z, 1, "pool") for z in members]

    def labeled(z, source):
        z = CandidateSolution.from_z(z, inst.J, inst.T)
        return LabeledCandidate(z, int(check_feasibility(inst, z).feasible), source)

    for _ in range(n_random):
        out.append(labeled(rng.integers(0, 2, n), "random"))
    for _ in range(n_neighbor):
        base = members[int(rng.integers(len(members)))].z.copy()
        k = int(rng.integers(1, eta + 1))
        pos = rng.choice(n, size=k, replace=False)
        base[pos] ^= 1
        out.append(labeled(base, "neighbor"))
    for c in out[: len(members)]:
        assert check_feasibility(inst, c.z).feasible, "pool member failed re-verification"
    return out


def write_candidates_csv(cands: Sequence[LabeledCandidate], path) -> None:
    n = len(cands[0].z.z) if cands else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "source"] + [f"z_{k}" for k in range(n)])
        for c in cands:
            writer.writerow([c.label, c.source] + [int(b) for b in c.z.z])


def read_candidates_csv(path, inst: Instance) -> list[LabeledCandidate]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [
            LabeledCandidate(CandidateSolution.from_z(np.array([int(b) for b in row[2:]]), inst.J, inst.T),
                             int(row[0]), row[1])
            for row in reader
        ]


@dataclass
class Record:
    instance: Instance
    pool: SolutionPool
    candidates: list[LabeledCandidate]


def generate_dataset(J: int, T: int, n: int, seed: int, out_dir, *, pool_size: int = DEFAULT_POOL_SIZE,
                     time_limit: float = DEFAULT_TIME_LIMIT, node_limit: int = DEFAULT_NODE_LIMIT,
                     n_random: int = 50, n_neighbor: int = 50, eta: int | None = None,
                     make_instance: Callable[[int, int, int], Instance] = random_instance) -> Path:
    """Draw instances until n have a nonempty pool; writes ``out_dir/<seed>/``.

    Instance k of attempt a uses the seed derived from (seed, a), so the
    directory contents depend only on the arguments.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    root = Path(out_dir) / str(seed)
    root.mkdir(parents=True, exist_ok=True)
    entries, rejected, positives, total = [], 0, 0, 0
    max_attempts = ATTEMPTS_PER_INSTANCE * n
    attempt = 0
    while len(entries) < n and attempt < max_attempts:
        inst_seed = attempt_seed(seed, attempt)
        inst = make_instance(J, T, inst_seed)
        pool = solve_bb(inst, SolveOptions(pool_size=pool_size, time_limit=time_limit, node_limit=node_limit))
        attempt += 1
        if not pool.solutions:
            rejected += 1
            log.debug("attempt %d rejected (%s)", attempt - 1, pool.status)
            continue
        k = len(entries)
        cands = augment_candidates(inst, pool.solutions, n_random, n_neighbor, eta,
                                   seed=attempt_seed(inst_seed, 1))
        inst.save(root / f"instance_{k}.json")
        write_pool_csv(pool, root / f"pool_{k}.csv")
        write_candidates_csv(cands, root / f"candidates_{k}.csv")
        labels = [c.label for c in cands]
        positives += sum(labels)
        total += len(labels)
        entries.append({"k": k, "attempt": attempt - 1, "instance_seed": inst_seed, "status": pool.status,
                        "pool_size": len(pool.solutions), "best_qos": pool.best_qos,
                        "n_candidates": len(cands), "n_feasible_candidates": sum(labels)})
    manifest = {
        "J": J, "T": T, "n": n, "seed": seed, "pool_size": pool_size, "time_limit": time_limit,
        "node_limit": node_limit, "n_random": n_random, "n_neighbor": n_neighbor,
        "eta": default_eta(J, T) if eta is None else eta,
        "attempts": attempt, "rejected": rejected, "accepted": len(entries),
        "complete": len(entries) == n,
        "label_balance": positives / total if total else None,
        "instances": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    log.info("dataset %s: %d accepted, %d rejected, %.1f%% feasible candidates",
             root, len(entries), rejected, 100 * (manifest["label_balance"] or 0))
    if len(entries) < n:
        raise DatasetError(f"only {len(entries)} of {n} instances accepted within {max_attempts} attempts; "
                           f"partial dataset left in {root}")
    return root


def load_dataset(root) -> list[Record]:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    records = []
    for entry in manifest["instances"]:
        k = entry["k"]
        inst = Instance.load(root / f"instance_{k}.json")
        pool = read_pool_csv(root / f"pool_{k}.csv", inst)
        cand_path = root / f"candidates_{k}.csv"
        cands = read_candidates_csv(cand_path, inst) if cand_path.exists() else []
        records.append(Record(inst, pool, cands))
    return records


def feasibility_samples(inst: Instance, cands: Sequence[LabeledCandidate]) -> list[Sample]:
    graph = encode_bipartite(build_standard_form(inst))
    return [Sample(graph.with_candidate(c.z.z), float(c.label)) for c in cands]


def bias_samples(records: Sequence[Record], mode: str = "opt-m") -> list[Sample]:
    return [Sample(encode_bipartite(build_standard_form(r.instance)), bias_target(r.pool.solutions, mode))
            for r in records]
