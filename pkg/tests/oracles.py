"""Independent reference evaluators, written row by row from the formulation.

Deliberately plain Python loops with 1-based indices; no code shared with
the package beyond the data classes.
"""
from __future__ import annotations

import itertools

TOL = 1e-9


def rows_violated(inst, x, phi) -> set[tuple]:
    """Set of (family, j, t) for every violated row; j, t are 1-based or None."""
    J, T = inst.J, inst.T
    X = {(j, t): int(x[j - 1][t - 1]) for j in range(1, J + 1) for t in range(1, T + 1)}
    P = {(j, t): int(phi[j - 1][t - 1]) for j in range(1, J + 1) for t in range(1, T + 1)}
    bad = set()
    for j in range(1, J + 1):
        job = inst.jobs[j - 1]
        if not P[j, 1] >= X[j, 1]:
            bad.add(("2a", j, 1))
        for t in range(2, T + 1):
            if not P[j, t] >= X[j, t] - X[j, t - 1]:
                bad.add(("2b", j, t))
            if not P[j, t] <= 2 - X[j, t] - X[j, t - 1]:
                bad.add(("2d", j, t))
        for t in range(1, T + 1):
            if not P[j, t] <= X[j, t]:
                bad.add(("2c", j, t))
        if sum(X[j, t] for t in range(1, job.w_min + 1)) != 0:
            bad.add(("2e", j, None))
        if sum(X[j, t] for t in range(job.w_max + 1, T + 1)) != 0:
            bad.add(("2f", j, None))
        for t in range(1, T - job.t_min + 2):
            if t > T:
                continue
            if not sum(X[j, l] for l in range(t, t + job.t_min)) >= job.t_min * P[j, t]:
                bad.add(("2g", j, t))
        for t in range(1, T - job.t_max + 1):
            if not sum(X[j, l] for l in range(t, t + job.t_max + 1)) <= job.t_max:
                bad.add(("2h", j, t))
        for t in range(T - job.t_min + 2, T + 1):
            if t < 1:
                continue
            if not sum(X[j, l] for l in range(t, T + 1)) >= (T - t + 1) * P[j, t]:
                bad.add(("2i", j, t))
        for t in range(1, T - job.p_min + 2):
            if not sum(P[j, l] for l in range(t, t + job.p_min)) <= 1:
                bad.add(("2j", j, t))
        for t in range(1, T - job.p_max + 2):
            if not sum(P[j, l] for l in range(t, t + job.p_max)) >= 1:
                bad.add(("2k", j, t))
        starts = sum(P[j, t] for t in range(1, T + 1))
        if starts < job.y_min:
            bad.add(("2l", j, None))
        if starts > job.y_max:
            bad.add(("2m", j, None))
    bat = inst.battery
    soc = bat.soc_initial
    socs = [soc]
    for t in range(1, T + 1):
        used = 0.0
        for j in range(1, J + 1):
            used += inst.jobs[j - 1].q * X[j, t]
        if used > inst.r[t - 1] + bat.gamma * bat.V_b + TOL:
            bad.add(("3a", None, t))
        b = inst.r[t - 1] - used
        i = b / bat.V_b
        soc = soc + i * bat.e / (60 * bat.Q)
        socs.append(soc)
    for t, s in enumerate(socs, start=1):
        if s > 1 + TOL:
            bad.add(("3e", None, t))
        if s < bat.rho - TOL:
            bad.add(("3f", None, t))
    return bad


def start_indicators(x) -> list[list[int]]:
    """phi from its defining rows: the unique 0/1 row satisfying 2a-2d."""
    out = []
    for row in x:
        T = len(row)
        fits = []
        for cand in itertools.product((0, 1), repeat=T):
            ok = cand[0] >= row[0] and all(
                cand[t] >= row[t] - row[t - 1] and cand[t] <= 2 - row[t] - row[t - 1] for t in range(1, T)
            ) and all(cand[t] <= row[t] for t in range(T))
            if ok:
                fits.append(list(cand))
        assert len(fits) == 1
        out.append(fits[0])
    return out


def all_schedules(J: int, T: int):
    for bits in itertools.product((0, 1), repeat=J * T):
        yield [list(bits[j * T:(j + 1) * T]) for j in range(J)]
