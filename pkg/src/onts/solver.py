"""Exact desk-scale search over x with phi derived.

Per-job constraints (windows, run lengths, periods, activation counts) are
compiled into a small automaton whose state is (run length, steps since the
last start, starts so far). A memoised table over that state answers two
questions at every node: can this job's row still be completed feasibly,
and how many more ones can it hold at most. The second answer gives the
QoS bound. Energy rows couple the jobs and are checked when a time step
closes, with a look-ahead on the reachable SoC range.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .model import (
    CONTINUOUS_TOL,
    CandidateSolution,
    Instance,
    JobParams,
    check_feasibility,
    derive_phi,
    qos,
)

log = logging.getLogger(__name__)

NEG_INF = -math.inf
BRUTE_FORCE_MAX_BITS = 20


@dataclass(frozen=True)
class SolveOptions:
    time_limit: float = math.inf
    pool_size: int = 1
    fixings: dict[int, int] = field(default_factory=dict)
    trust_center: dict[int, int] | None = None
    delta: int = 0
    warm_hint: dict[int, int] | None = None
    node_limit: int = 10_000_000

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be at least 1")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        for name in ("fixings", "trust_center", "warm_hint"):
            part = getattr(self, name)
            if part is None:
                continue
            for k, v in part.items():
                if int(k) != k or k < 0 or v not in (0, 1):
                    raise ValueError(f"{name}: bad entry {k}: {v}")


@dataclass
class SolutionPool:
    solutions: list[tuple[CandidateSolution, float]]
    status: str  # optimal | feasible | infeasible | limit
    nodes_explored: int = 0
    time_to_first_feasible: float | None = None
    diagnostic: str = ""

    @property
    def best(self) -> tuple[CandidateSolution, float] | None:
        return self.solutions[0] if self.solutions else None

    @property
    def best_qos(self) -> float | None:
        return self.solutions[0][1] if self.solutions else None

    @property
    def qos_values(self) -> list[float]:
        return [v for _, v in self.solutions]


def _sorted_pool(found: list[tuple[CandidateSolution, float, int]], k: int):
    # equal QoS keeps discovery order
    found = sorted(found, key=lambda item: (-item[1], item[2]))
    return [(z, v) for z, v, _ in found[:k]]


def brute_force(inst: Instance, pool_size: int = 1_000_000) -> SolutionPool:
    """Enumerate every x, derive phi and keep the feasible ones (ground truth)."""
    J, T = inst.J, inst.T
    if J * T > BRUTE_FORCE_MAX_BITS:
        raise ValueError(f"brute force limited to J*T <= {BRUTE_FORCE_MAX_BITS}, got {J * T}")
    found = []
    for n, bits in enumerate(itertools.product((0, 1), repeat=J * T)):
        x = np.array(bits, dtype=np.int8).reshape(J, T)
        z = CandidateSolution(x, derive_phi(x))
        if check_feasibility(inst, z).feasible:
            found.append((z, qos(inst, x), n))
    sols = _sorted_pool(found, pool_size)
    return SolutionPool(sols, "optimal" if sols else "infeasible", nodes_explored=2 ** (J * T))


class JobAutomaton:
    """Exact completion oracle for one job's row of x.

    State before deciding step t (0-based): ``run`` ones ending at t-1,
    ``gap`` = t - (last start), with a virtual start at -1, and ``count``
    starts so far. ``best(t, state)`` is the largest number of ones that a
    feasible completion of steps t..T-1 can hold, or -inf if none exists.
    """

    def __init__(self, job: JobParams, T: int):
        self.job = job
        self.T = T
        self.best = lru_cache(maxsize=None)(self._best)

    initial = (0, 1, 0)

    def step(self, t: int, state: tuple[int, int, int], v: int):
        """Successor state after x_t = v, or None if a row is violated."""
        job, T = self.job, self.T
        run, gap, count = state
        if v:
            if t < job.w_min or t >= job.w_max:
                return None
            if run:
                if run + 1 > job.t_max:
                    return None
                nxt = (run + 1, gap + 1, count)
            else:
                if count and job.p_min <= T and gap < job.p_min:
                    return None
                if gap > job.p_max or count + 1 > job.y_max:
                    return None
                nxt = (1, 1, count + 1)
        else:
            if run and run < job.t_min:
                return None
            nxt = (0, gap + 1, count)
        if nxt[1] > job.p_max:
            return None
        return nxt

    def _best(self, t: int, state: tuple[int, int, int]) -> float:
        if t == self.T:
            _, gap, count = state
            return 0.0 if gap <= self.job.p_max and count >= self.job.y_min else NEG_INF
        out = NEG_INF
        for v in (1, 0):
            nxt = self.step(t, state, v)
            if nxt is not None:
                out = max(out, v + self.best(t + 1, nxt))
        return out

    def feasible_rows(self) -> list[tuple[int, ...]]:
        """All feasible rows (small T only), used as a cross-check in tests."""
        rows = []

        def walk(t, state, prefix):
            if self.best(t, state) == NEG_INF:
                return
            if t == self.T:
                rows.append(tuple(prefix))
                return
            for v in (0, 1):
                nxt = self.step(t, state, v)
                if nxt is not None:
                    walk(t + 1, nxt, prefix + [v])

        walk(0, self.initial, [])
        return rows


class _Limit(Exception):
    pass


def _contradictions(inst: Instance, fixings: dict[int, int]) -> str:
    J, T = inst.J, inst.T
    n = J * T
    for k in fixings:
        if k >= 2 * n:
            return f"fixing index {k} out of range"
    for j in range(J):
        for t in range(T):
            xi, pi = j * T + t, n + j * T + t
            xv, pv = fixings.get(xi), fixings.get(pi)
            prev = fixings.get(xi - 1) if t > 0 else 0
            if pv == 1 and xv == 0:
                return f"phi_{j + 1}_{t + 1}=1 with x_{j + 1}_{t + 1}=0"
            if pv == 1 and prev == 1:
                return f"phi_{j + 1}_{t + 1}=1 with x_{j + 1}_{t}=1"
            if pv == 0 and xv == 1 and prev == 0:
                return f"phi_{j + 1}_{t + 1}=0 but job {j + 1} starts at {t + 1}"
            if pv == 1 and t + 1 < T and fixings.get(pi + 1) == 1:
                return f"consecutive starts fixed for job {j + 1} at {t + 1}"
    return ""


class _Search:
    def __init__(self, inst: Instance, opts: SolveOptions):
        self.inst = inst
        self.opts = opts
        J, T = inst.J, inst.T
        self.J, self.T = J, T
        self.autos = [JobAutomaton(job, T) for job in inst.jobs]
        self.u = [float(job.u) for job in inst.jobs]
        self.q = [float(job.q) for job in inst.jobs]
        by_priority = sorted(range(J), key=lambda j: (-self.u[j], j))
        self.order = [(j, t) for t in range(T) for j in by_priority]
        self.last_of_step = {pos for pos in range(len(self.order)) if (pos + 1) % J == 0}
        bat = inst.battery
        self.cap = [inst.r[t] + bat.gamma * bat.V_b for t in range(T)]
        self.bat = bat
        self.fix = dict(opts.fixings)
        self.center = dict(opts.trust_center or {})
        self.hint = dict(opts.warm_hint or {})
        # reachable SoC envelope from step t onwards
        most = np.array([sum(self.q[j] for j, job in enumerate(inst.jobs) if job.w_min <= t < job.w_max)
                         for t in range(T)])
        d_low = [self._soc_delta(inst.r[t], most[t]) for t in range(T)]
        d_high = [self._soc_delta(inst.r[t], 0.0) for t in range(T)]
        self.rise = [0.0] * (T + 1)  # smallest possible max climb
        self.fall = [0.0] * (T + 1)  # largest possible min drop
        for t in range(T - 1, -1, -1):
            self.rise[t] = d_low[t] + max(0.0, self.rise[t + 1])
            self.fall[t] = d_high[t] + min(0.0, self.fall[t + 1])
        self.x = np.zeros((J, T), dtype=np.int8)
        self.found: list[tuple[CandidateSolution, float, int]] = []
        self.nodes = 0
        self.t0 = time.monotonic()
        self.first = None
        self.limit_hit = False

    def _soc_delta(self, r_t: float, cons: float) -> float:
        bat = self.bat
        i = (r_t - cons) / bat.V_b
        return i * bat.e / (60.0 * bat.Q)

    # --- partial-assignment costs -----------------------------------------
    def _entries(self, j: int, t: int, v: int, prev: int):
        n = self.J * self.T
        yield j * self.T + t, v, True
        yield n + j * self.T + t, int(v and not prev), True
        if v and t + 1 < self.T:
            # a running job cannot start again at the next step
            yield n + j * self.T + t + 1, 0, False

    def _costs(self, j, t, v, prev):
        hard = committed = ahead = 0
        for k, val, now in self._entries(j, t, v, prev):
            f = self.fix.get(k)
            if f is not None and f != val:
                hard += 1
            c = self.center.get(k)
            if c is not None and c != val:
                if now:
                    committed += 1
                else:
                    ahead += 1
        return hard, committed, ahead

    def _threshold(self):
        K = self.opts.pool_size
        if len(self.found) < K:
            return None
        return min(v for _, v, _ in self.found) if K > 1 else max(v for _, v, _ in self.found)

    def _pruned(self, bound: float) -> bool:
        thr = self._threshold()
        return thr is not None and bound <= thr + 1e-9 * max(1.0, abs(thr))

    def _record(self):
        z = CandidateSolution(self.x.copy(), derive_phi(self.x))
        report = check_feasibility(self.inst, z)
        assert report.feasible, f"search emitted an infeasible schedule: {report.violations[:3]}"
        value = qos(self.inst, self.x)
        if self.first is None:
            self.first = time.monotonic() - self.t0
        self.found.append((z, value, len(self.found)))
        K = self.opts.pool_size
        if len(self.found) > K:
            # drop the worst, latest-found first among equals
            worst = min(range(len(self.found)), key=lambda i: (self.found[i][1], -self.found[i][2]))
            self.found.pop(worst)

    def _check_limits(self):
        if self.nodes > self.opts.node_limit:
            raise _Limit
        if self.nodes % 256 == 0 and time.monotonic() - self.t0 > self.opts.time_limit:
            raise _Limit

    # --- search -------------------------------------------------------------
    def run(self):
        bat = self.bat
        states = tuple(a.initial for a in self.autos)
        rest = sum(self.u[j] * self.autos[j].best(0, states[j]) for j in range(self.J))
        soc0 = bat.soc_initial
        if rest == NEG_INF or soc0 > 1 + CONTINUOUS_TOL or soc0 < bat.rho - CONTINUOUS_TOL:
            self.nodes = 1
            return
        self._node(0, states, 0.0, rest, soc0, 0.0, 0)

    def _admissible(self, pos, states, power, budget_used):
        j, t = self.order[pos]
        prev = int(self.x[j, t - 1]) if t else 0
        out = []
        for v in (0, 1):
            nxt = self.autos[j].step(t, states[j], v)
            if nxt is None or self.autos[j].best(t + 1, nxt) == NEG_INF:
                continue
            if v and power + self.q[j] > self.cap[t] + CONTINUOUS_TOL:
                continue
            hard, committed, ahead = self._costs(j, t, v, prev)
            if hard:
                continue
            if self.center and budget_used + committed + ahead > self.opts.delta:
                continue
            out.append((v, nxt, committed))
        return out

    def _apply(self, pos, states, qos_val, rest, soc, power, budget_used, v, nxt, committed):
        """Commit x at ``pos``; returns the new search tuple or None if a cut fires."""
        j, t = self.order[pos]
        self.x[j, t] = v
        auto = self.autos[j]
        rest += self.u[j] * (auto.best(t + 1, nxt) - auto.best(t, states[j]))
        qos_val += self.u[j] * v
        states = states[:j] + (nxt,) + states[j + 1:]
        power = power + self.q[j] * v
        budget_used += committed
        if pos in self.last_of_step:
            cons = 0.0
            for jj in range(self.J):
                cons += self.q[jj] * int(self.x[jj, t])
            soc = soc + self._soc_delta(self.inst.r[t], cons)
            if soc > 1 + CONTINUOUS_TOL or soc < self.bat.rho - CONTINUOUS_TOL:
                return None
            if soc + self.rise[t + 1] > 1 + CONTINUOUS_TOL and t + 1 < self.T:
                return None
            if soc + self.fall[t + 1] < self.bat.rho - CONTINUOUS_TOL and t + 1 < self.T:
                return None
            power = 0.0
        return states, qos_val, rest, soc, power, budget_used

    def _preferred(self, pos):
        j, t = self.order[pos]
        k = j * self.T + t
        if k in self.hint:
            return self.hint[k]
        n = self.J * self.T
        if self.hint.get(n + k) == 1:
            return 1
        if t + 1 < self.T and self.hint.get(n + k + 1) == 1:
            return 0
        return 1

    def _node(self, pos, states, qos_val, rest, soc, power, budget_used):
        self.nodes += 1
        self._check_limits()
        n = len(self.order)
        while True:
            if self._pruned(qos_val + rest):
                return
            if pos == n:
                self._record()
                return
            options = self._admissible(pos, states, power, budget_used)
            if not options:
                return
            if len(options) > 1:
                break
            v, nxt, committed = options[0]
            out = self._apply(pos, states, qos_val, rest, soc, power, budget_used, v, nxt, committed)
            if out is None:
                return
            states, qos_val, rest, soc, power, budget_used = out
            pos += 1
        first = self._preferred(pos)
        options.sort(key=lambda o: o[0] != first)
        for v, nxt, committed in options:
            out = self._apply(pos, states, qos_val, rest, soc, power, budget_used, v, nxt, committed)
            if out is not None:
                self._node(pos + 1, *out)


def solve_bb(inst: Instance, opts: SolveOptions | None = None) -> SolutionPool:
    opts = opts or SolveOptions()
    bad = _contradictions(inst, opts.fixings)
    if bad:
        return SolutionPool([], "infeasible", nodes_explored=0, diagnostic=f"contradictory fixings: {bad}")
    if opts.trust_center and any(k >= inst.n_binary for k in opts.trust_center):
        raise ValueError("trust-region index out of range")
    search = _Search(inst, opts)
    try:
        search.run()
        complete = True
    except _Limit:
        complete = False
    sols = _sorted_pool(search.found, opts.pool_size)
    if complete:
        status = "optimal" if sols else "infeasible"
    else:
        status = "feasible" if sols else "limit"
    log.debug("solve_bb: %s after %d nodes", status, search.nodes)
    return SolutionPool(sols, status, nodes_explored=search.nodes, time_to_first_feasible=search.first)


def write_pool_csv(pool: SolutionPool, path) -> None:
    """Pool file: a ``# status=...`` summary line, then ``rank,qos,z_0..``."""
    n = len(pool.solutions[0][0].z) if pool.solutions else 0
    with open(path, "w", newline="") as fh:
        fh.write(f"# status={pool.status} nodes_explored={pool.nodes_explored} size={len(pool.solutions)}\n")
        writer = csv.writer(fh)
        writer.writerow(["rank", "qos"] + [f"z_{k}" for k in range(n)])
        for rank, (z, value) in enumerate(pool.solutions, start=1):
            writer.writerow([rank, repr(value)] + [int(b) for b in z.z])


def read_pool_csv(path, inst: Instance) -> SolutionPool:
    """Load a pool and re-verify every member against the instance."""
    with open(path, newline="") as fh:
        head = fh.readline()
        if not head.startswith("# "):
            raise ValueError(f"{path}: missing summary line")
        summary = dict(item.split("=", 1) for item in head[2:].split())
        rows = list(csv.reader(fh))
    solutions = []
    for line in rows[1:]:
        z = CandidateSolution.from_z(np.array([int(b) for b in line[2:]]), inst.J, inst.T)
        value = float(line[1])
        report = check_feasibility(inst, z)
        if not report.feasible:
            raise ValueError(f"{path}: pooled solution {line[0]} is infeasible ({sorted(report.families)})")
        if value != qos(inst, z.x):
            raise ValueError(f"{path}: pooled solution {line[0]} has QoS {value}, recomputed {qos(inst, z.x)}")
        solutions.append((z, value))
    return SolutionPool(solutions, summary.get("status", "feasible"),
                        nodes_explored=int(summary.get("nodes_explored", 0)))
