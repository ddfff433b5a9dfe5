from __future__ import annotations

import numpy as np
import pytest

from onts.generate import random_instance
from onts.graph import BipartiteGraph
from onts.model import BatteryParams, Instance, JobParams


def random_graph(seed: int, n_var: int = 7, n_con: int = 5, density: float = 0.5,
                 candidate: bool = False) -> BipartiteGraph:
    """Random weighted bipartite graph with O(1) weights and features."""
    rng = np.random.default_rng(seed)
    mask = rng.random((n_con, n_var)) < density
    mask[rng.integers(0, n_con), :] = True  # every variable has a neighbour
    con, var = np.nonzero(mask)
    weight = rng.uniform(0.2, 1.5, len(con)) * rng.choice([-1.0, 1.0], len(con))
    var_feats = rng.normal(size=(n_var, 6))
    var_feats[:, 5] = rng.random(n_var) < 0.7
    var_feats[0, 5] = 1.0
    con_feats = rng.normal(size=(n_con, 4))
    con_feats[:, 3] = rng.random(n_con) < 0.3
    if candidate:
        col = np.where(var_feats[:, 5] > 0.5, rng.integers(0, 2, n_var), 0)
        var_feats = np.column_stack([var_feats, col])
    return BipartiteGraph(n_var, n_con, con, var, weight, var_feats, con_feats)


def tight_battery_instance(seed: int, J: int | None = None, T: int | None = None) -> Instance:
    """Small random instance whose battery is small enough for the energy rows to bind."""
    rng = np.random.default_rng([seed, 7])
    J = int(rng.integers(1, 3)) if J is None else J
    T = int(rng.integers(2, 7)) if T is None else T
    battery = BatteryParams(
        Q=float(rng.uniform(0.002, 0.05)),
        gamma=float(rng.uniform(0.01, 0.3)),
        soc_initial=float(rng.uniform(0.2, 1.0)),
        rho=0.1,
    )
    return random_instance(J, T, seed, battery=battery)


def single_job_instance(T: int = 3, u: float = 1.0, q: float = 1.0, **job) -> Instance:
    params = dict(y_min=1, y_max=1, t_min=1, t_max=1, p_min=1, p_max=T, w_min=0, w_max=T)
    params.update(job)
    return Instance(J=1, T=T, jobs=(JobParams(u=u, q=q, **params),), r=(5.0,) * T,
                    battery=BatteryParams(soc_initial=0.5))


@pytest.fixture
def small_instance() -> Instance:
    return random_instance(2, 5, 3)


def check_params_for(config, seed: int) -> dict:
    """Glorot weights with biases in U(0.2, 1): keeps hidden units off the ReLU kink.

    With zero biases, nodes without neighbours sit exactly at 0 pre-activation,
    where central differences straddle the kink.
    """
    from onts.gnn import init_params

    params = init_params(config)
    rng = np.random.default_rng([seed, 99])
    for name, arr in params.items():
        if arr.ndim == 1:
            params[name] = rng.uniform(0.2, 1.0, arr.shape)
    return params


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, taken from the recorded test properties."""
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            props = dict(rep.user_properties)
            if "criterion" in props:
                lines.append((props["criterion"], outcome, props.get("detail", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for k, outcome, detail in sorted(lines):
            terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if outcome == 'passed' else 'FAIL'}  {detail}")
