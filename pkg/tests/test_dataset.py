from __future__ import annotations

import json

import numpy as np
import pytest

from onts.dataset import (
    DatasetError,
    augment_candidates,
    bias_samples,
    default_eta,
    feasibility_samples,
    generate_dataset,
    load_dataset,
    read_candidates_csv,
    write_candidates_csv,
)
from onts.generate import random_instance
from onts.milp import x_index
from onts.model import BatteryParams, Instance, JobParams, check_feasibility
from onts.solver import SolveOptions, solve_bb


def overloaded(J, T, seed):
    job = JobParams(u=1, q=1e4, y_min=1, y_max=1, t_min=1, t_max=1, p_min=1, p_max=T, w_min=0, w_max=T)
    return Instance(J, T, (job,) * J, (1.0,) * T, BatteryParams(soc_initial=0.5))


def files(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def feasible_pool(J=2, T=6, seed=1, k=5):
    inst = random_instance(J, T, seed)
    pool = solve_bb(inst, SolveOptions(pool_size=k))
    assert pool.solutions
    return inst, pool


def test_single_small_instance(tmp_path):
    root = generate_dataset(2, 6, 1, 0, tmp_path, n_random=5, n_neighbor=5)
    assert root == tmp_path / "0"
    names = set(files(root))
    assert names == {"instance_0.json", "pool_0.csv", "candidates_0.csv", "manifest.json"}
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["accepted"] == 1 and manifest["complete"]
    assert manifest["attempts"] == manifest["rejected"] + 1
    (rec,) = load_dataset(root)
    assert rec.pool.solutions
    assert len(rec.candidates) == len(rec.pool.solutions) + 10


def test_same_seed_same_bytes(tmp_path):
    a = generate_dataset(2, 5, 2, 11, tmp_path / "a", n_random=4, n_neighbor=4)
    b = generate_dataset(2, 5, 2, 11, tmp_path / "b", n_random=4, n_neighbor=4)
    assert files(a) == files(b)
    c = generate_dataset(2, 5, 2, 12, tmp_path / "c", n_random=4, n_neighbor=4)
    assert files(a) != files(c)


def test_infeasible_instances_are_rejected(tmp_path):
    calls = []

    def make(J, T, seed):
        calls.append(seed)
        return overloaded(J, T, seed) if len(calls) <= 3 else random_instance(J, T, seed)

    root = generate_dataset(2, 6, 1, 0, tmp_path, n_random=0, n_neighbor=0, make_instance=make)
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["rejected"] >= 3
    assert manifest["instances"][0]["attempt"] >= 3
    stored = Instance.load(root / "instance_0.json")
    assert stored != overloaded(2, 6, 0)


def test_attempt_cap_leaves_partial_dataset(tmp_path):
    with pytest.raises(DatasetError):
        generate_dataset(1, 3, 1, 0, tmp_path, n_random=0, n_neighbor=0, make_instance=overloaded)
    manifest = json.loads((tmp_path / "0" / "manifest.json").read_text())
    assert manifest["attempts"] == 100 and not manifest["complete"]


def test_counts_and_pool_labels():
    inst, pool = feasible_pool()
    cands = augment_candidates(inst, pool.solutions, 7, 9, seed=3)
    assert [c.source for c in cands].count("random") == 7
    assert [c.source for c in cands].count("neighbor") == 9
    pooled = [c for c in cands if c.source == "pool"]
    assert len(pooled) == len(pool.solutions) and all(c.label == 1 for c in pooled)
    for c in cands:
        assert c.label == int(check_feasibility(inst, c.z).feasible)


def test_only_pool_members_without_augmentation():
    inst, pool = feasible_pool()
    cands = augment_candidates(inst, pool.solutions, 0, 0)
    assert [c.label for c in cands] == [1] * len(pool.solutions)


def test_eta_zero_rejected():
    inst, pool = feasible_pool()
    with pytest.raises(ValueError):
        augment_candidates(inst, pool.solutions, 0, 3, eta=0)
    with pytest.raises(ValueError):
        augment_candidates(inst, [], 0, 3)


def test_neighbors_differ_by_at_most_eta():
    inst, pool = feasible_pool(k=1)
    base = pool.solutions[0][0].z
    for eta in (1, 3):
        for c in augment_candidates(inst, pool.solutions, 0, 30, eta=eta, seed=eta):
            if c.source == "neighbor":
                assert 1 <= int(np.sum(c.z.z != base)) <= eta


def test_window_flip_is_infeasible():
    inst, pool = feasible_pool(k=1)
    job_with_window = [j for j, job in enumerate(inst.jobs) if job.w_min > 0]
    assert job_with_window
    j = job_with_window[0]
    forced = x_index(inst.T, j, 0)
    cands = augment_candidates(inst, pool.solutions, 0, 200, eta=1, seed=0)
    base = pool.solutions[0][0].z
    flipped = [c for c in cands if c.source == "neighbor" and c.z.z[forced] != base[forced]]
    assert flipped
    assert all(c.label == 0 for c in flipped)


def test_default_eta():
    assert default_eta(2, 6) == 1
    assert default_eta(9, 125) == 112


def test_candidates_csv_roundtrip(tmp_path):
    inst, pool = feasible_pool()
    cands = augment_candidates(inst, pool.solutions, 3, 3, seed=1)
    write_candidates_csv(cands, tmp_path / "c.csv")
    assert read_candidates_csv(tmp_path / "c.csv", inst) == cands


def test_samples_from_dataset(tmp_path):
    root = generate_dataset(2, 5, 2, 4, tmp_path, n_random=3, n_neighbor=3)
    records = load_dataset(root)
    feas = feasibility_samples(records[0].instance, records[0].candidates)
    assert feas[0].graph.has_candidate and feas[0].target in (0.0, 1.0)
    bias = bias_samples(records)
    assert len(bias) == 2
    assert bias[0].target.shape == (records[0].instance.n_binary,)
    assert ((bias[0].target >= 0) & (bias[0].target <= 1)).all()
