"""Matheuristics driven by SatGNN bias predictions."""
from __future__ import annotations

import math

import numpy as np

from .gnn import SatGNNConfig, forward
from .graph import encode_bipartite
from .milp import build_standard_form
from .model import Instance
from .solver import SolutionPool, SolveOptions, solve_bb

MODES = ("warm", "fix", "trust")
DEFAULT_DELTA = 1
DEFAULT_FRACTION = 0.2


def confidence(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if ((p < 0) | (p > 1)).any() or np.isnan(p).any():
        raise ValueError("probabilities must lie in [0, 1]")
    return np.maximum(p, 1 - p)


def round_prediction(probs) -> np.ndarray:
    return (np.asarray(probs) >= 0.5).astype(np.int8)


def partial_solution(probs, N: int) -> dict[int, int]:
    """Rounded values of the N most confident entries; ties go to the lower index."""
    kappa = confidence(probs)
    if not 0 <= N <= len(kappa):
        raise ValueError(f"N must lie in [0, {len(kappa)}]")
    order = np.lexsort((np.arange(len(kappa)), -kappa))[:N]
    values = round_prediction(probs)
    return {int(k): int(values[k]) for k in sorted(order)}


def default_n(inst: Instance) -> int:
    return math.floor(DEFAULT_FRACTION * inst.n_binary)


def predict_bias(inst: Instance, config: SatGNNConfig, params) -> np.ndarray:
    if config.task != "bias":
        raise ValueError("heuristics need a bias-task model")
    graph = encode_bipartite(build_standard_form(inst))
    return forward(params, config, graph)


def heuristic_options(probs, mode: str, N: int, delta: int = DEFAULT_DELTA, **solve_kw) -> SolveOptions:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    partial = partial_solution(probs, N)
    if mode == "warm":
        return SolveOptions(warm_hint=partial, **solve_kw)
    if mode == "fix":
        return SolveOptions(fixings=partial, **solve_kw)
    return SolveOptions(trust_center=partial, delta=delta, **solve_kw)


def run_heuristic(inst: Instance, model, mode: str, N: int | None = None, delta: int = DEFAULT_DELTA,
                  probs=None, **solve_kw) -> SolutionPool:
    """Predict, select the N most confident entries and hand them to the solver.

    ``model`` is a (config, params) pair; precomputed ``probs`` skip the
    forward pass. Fixing and trust may lose feasibility; such pools carry a
    diagnostic saying so.
    """
    if probs is None:
        config, params = model
        probs = predict_bias(inst, config, params)
    N = default_n(inst) if N is None else N
    pool = solve_bb(inst, heuristic_options(probs, mode, N, delta, **solve_kw))
    if pool.status == "infeasible" and mode != "warm" and not pool.diagnostic:
        what = "fixing" if mode == "fix" else f"trust region (delta={delta})"
        pool.diagnostic = f"infeasible after {what} of {N} variables"
    return pool
