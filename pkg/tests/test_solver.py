from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import single_job_instance, tight_battery_instance
from onts.generate import random_instance
from onts.model import BatteryParams, CandidateSolution, Instance, JobParams, check_feasibility, qos
from onts.solver import (
    JobAutomaton,
    SolveOptions,
    brute_force,
    read_pool_csv,
    solve_bb,
    write_pool_csv,
)


def as_set(pool):
    return {(tuple(z.z.tolist()), v) for z, v in pool.solutions}


def optimal_z(inst):
    pool = solve_bb(inst)
    assert pool.status == "optimal"
    return pool.best[0]


def partial_from(z: CandidateSolution, rng, k):
    idx = rng.choice(len(z.z), size=k, replace=False)
    return {int(i): int(z.z[i]) for i in idx}


# --- brute force --------------------------------------------------------------------------

def test_single_run_anywhere():
    inst = single_job_instance(T=3, u=2.0)
    pool = brute_force(inst)
    assert pool.status == "optimal"
    assert pool.best_qos == 2.0
    assert {tuple(z.x[0]) for z, _ in pool.solutions} == {(1, 0, 0), (0, 1, 0), (0, 0, 1)}


def test_overloaded_instance_infeasible():
    job = JobParams(u=1, q=500, y_min=1, y_max=1, t_min=1, t_max=1, p_min=1, p_max=3, w_min=0, w_max=3)
    inst = Instance(1, 3, (job,), (1.0,) * 3, BatteryParams(gamma=5, V_b=3.6, soc_initial=0.5))
    assert brute_force(inst).status == "infeasible"
    assert solve_bb(inst).status == "infeasible"


def test_all_zero_in_pool_when_no_job_must_run():
    # y_min=0 and p_max beyond the horizon so no period row binds
    inst = single_job_instance(T=3, y_min=0, y_max=1, p_max=3)
    inst = Instance(1, 3, (JobParams(**{**inst.jobs[0].__dict__, "p_max": 3}),), inst.r, inst.battery)
    feasible_zero = check_feasibility(inst, CandidateSolution.from_x(np.zeros((1, 3), dtype=int))).feasible
    pool = brute_force(inst)
    zero_in = any(not z.x.any() for z, _ in pool.solutions)
    assert zero_in == feasible_zero


def test_brute_force_size_guard():
    with pytest.raises(ValueError):
        brute_force(random_instance(3, 7, 0))


# --- automaton ------------------------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_automaton_rows_match_checker(seed):
    # with energy ample, a job row is feasible iff the automaton accepts it
    inst = tight_battery_instance(seed, J=1)
    job = inst.jobs[0]
    rich = Instance(1, inst.T, (job,), (1e3,) * inst.T, BatteryParams(Q=1e9, gamma=1e3, soc_initial=0.5))
    accepted = set(JobAutomaton(job, inst.T).feasible_rows())
    for bits in itertools.product((0, 1), repeat=inst.T):
        ok = check_feasibility(rich, CandidateSolution.from_x(np.array([bits]))).feasible
        assert (bits in accepted) == ok


# --- branch and bound vs enumeration ----------------------------------------------------------

@pytest.mark.parametrize("seed", range(30))
def test_optimum_matches_brute_force(seed):
    inst = tight_battery_instance(seed)
    ref = brute_force(inst, pool_size=1)
    got = solve_bb(inst)
    assert got.status == ref.status
    assert got.best_qos == ref.best_qos


@pytest.mark.parametrize("seed", range(10))
def test_full_pool_matches_enumeration(seed):
    inst = tight_battery_instance(seed)
    ref = brute_force(inst)
    got = solve_bb(inst, SolveOptions(pool_size=10_000))
    assert as_set(got) == as_set(ref)


@pytest.mark.parametrize("seed", range(10))
def test_top_k_values(seed):
    inst = tight_battery_instance(seed)
    ref = brute_force(inst).qos_values[:5]
    got = solve_bb(inst, SolveOptions(pool_size=5))
    assert got.qos_values == ref
    assert got.qos_values == sorted(got.qos_values, reverse=True)


def test_pool_members_feasible_and_exact():
    inst = random_instance(2, 8, 4)
    pool = solve_bb(inst, SolveOptions(pool_size=20))
    for z, v in pool.solutions:
        assert check_feasibility(inst, z).feasible
        assert v == qos(inst, z.x)


def test_deterministic_node_count():
    inst = random_instance(3, 10, 1)
    a = solve_bb(inst, SolveOptions(pool_size=5))
    b = solve_bb(inst, SolveOptions(pool_size=5))
    assert a.nodes_explored == b.nodes_explored
    assert as_set(a) == as_set(b)


def test_node_limit_reports_limit_or_feasible():
    inst = random_instance(3, 10, 1)
    pool = solve_bb(inst, SolveOptions(node_limit=3))
    assert pool.status in ("limit", "feasible")


# --- fixings, trust region, warm hints ------------------------------------------------------

def feasible_instances(n, start=0):
    out, seed = [], start
    while len(out) < n:
        inst = tight_battery_instance(seed)
        if solve_bb(inst).status == "optimal":
            out.append(inst)
        seed += 1
    return out


@pytest.mark.parametrize("inst", feasible_instances(8))
def test_full_fixing_is_immediate(inst):
    z = optimal_z(inst)
    pool = solve_bb(inst, SolveOptions(fixings={k: int(v) for k, v in enumerate(z.z)}))
    assert pool.status == "optimal"
    assert pool.best[0] == z
    assert pool.nodes_explored == 1


@pytest.mark.parametrize("inst", feasible_instances(8, start=100))
def test_partial_fixing_from_optimum_keeps_optimum(inst):
    z = optimal_z(inst)
    rng = np.random.default_rng(0)
    for k in range(0, inst.n_binary + 1, max(1, inst.n_binary // 4)):
        pool = solve_bb(inst, SolveOptions(fixings=partial_from(z, rng, k)))
        assert pool.best_qos == qos(inst, z.x)


@pytest.mark.parametrize("inst", feasible_instances(8, start=200))
def test_trust_zero_equals_fix(inst):
    z = optimal_z(inst)
    rng = np.random.default_rng(1)
    for k in (1, 3, inst.n_binary // 2):
        center = {i: 1 - v if rng.random() < 0.3 else v for i, v in partial_from(z, rng, k).items()}
        fixed = solve_bb(inst, SolveOptions(pool_size=1000, fixings=center))
        trust = solve_bb(inst, SolveOptions(pool_size=1000, trust_center=center, delta=0))
        assert as_set(fixed) == as_set(trust)
        assert fixed.status == trust.status


@pytest.mark.parametrize("inst", feasible_instances(6, start=300))
def test_trust_radius_monotone(inst):
    z = optimal_z(inst)
    rng = np.random.default_rng(2)
    center = {i: 1 - v for i, v in partial_from(z, rng, min(4, inst.n_binary)).items()}
    prev = set()
    for delta in range(0, 6):
        pool = solve_bb(inst, SolveOptions(pool_size=1000, trust_center=center, delta=delta))
        cur = as_set(pool)
        assert prev <= cur
        for sol, _ in cur:
            dist = sum(sol[i] != v for i, v in center.items())
            assert dist <= delta
        prev = cur


@pytest.mark.parametrize("inst", feasible_instances(8, start=400))
def test_warm_hint_keeps_optimum(inst):
    plain = solve_bb(inst)
    rng = np.random.default_rng(3)
    for _ in range(3):
        hint = {int(i): int(rng.integers(2)) for i in rng.choice(inst.n_binary, inst.n_binary // 2, replace=False)}
        warm = solve_bb(inst, SolveOptions(warm_hint=hint))
        assert warm.status == plain.status
        assert warm.best_qos == plain.best_qos


def test_contradictory_fixings():
    inst = single_job_instance(T=3)
    # phi_1 = 1 demands x_1 = 1
    pool = solve_bb(inst, SolveOptions(fixings={0: 0, 3: 1}))
    assert pool.status == "infeasible"
    assert "contradictory" in pool.diagnostic
    assert pool.solutions == []


def test_phi_fixings_respected():
    inst = single_job_instance(T=4, y_min=1, y_max=2, p_max=4)
    pool = solve_bb(inst, SolveOptions(pool_size=100, fixings={4 + 2: 1}))
    assert pool.solutions
    for z, _ in pool.solutions:
        assert z.phi[0, 2] == 1


@pytest.mark.parametrize("kw", [dict(pool_size=0), dict(delta=-1), dict(fixings={0: 2}), dict(warm_hint={-1: 0})])
def test_bad_options(kw):
    with pytest.raises(ValueError):
        SolveOptions(**kw)


# --- pool files --------------------------------------------------------------------------

def test_pool_csv_roundtrip(tmp_path):
    inst = random_instance(2, 6, 1)
    pool = solve_bb(inst, SolveOptions(pool_size=7))
    assert pool.solutions
    write_pool_csv(pool, tmp_path / "p.csv")
    back = read_pool_csv(tmp_path / "p.csv", inst)
    assert back.status == pool.status
    assert back.nodes_explored == pool.nodes_explored
    assert [(z, v) for z, v in back.solutions] == pool.solutions
    assert (tmp_path / "p.csv").read_text().splitlines()[1].startswith("rank,qos,z_0")


def test_pool_csv_detects_corruption(tmp_path):
    inst = random_instance(2, 6, 1)
    pool = solve_bb(inst, SolveOptions(pool_size=3))
    path = tmp_path / "p.csv"
    write_pool_csv(pool, path)
    lines = path.read_text().splitlines()
    cells = lines[2].split(",")
    cells[2] = str(1 - int(cells[2]))
    lines[2] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError):
        read_pool_csv(path, inst)
