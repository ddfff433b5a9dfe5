"""Problem data and exact semantics of the ONTS formulation.

Time steps are 1-based in all user-facing quantities (t = 1..T); arrays are
indexed 0..T-1 internally. The state of charge vector has T+1 entries,
``soc[0]`` being the initial charge.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

# absolute tolerance on the continuous rows (power and state of charge)
CONTINUOUS_TOL = 1e-9

FAMILIES = (
    "2a", "2b", "2c", "2d", "2e", "2f", "2g", "2h", "2i", "2j", "2k", "2l", "2m",
    "3a", "3e", "3f",
)


@dataclass(frozen=True)
class JobParams:
    u: float
    q: float
    y_min: int
    y_max: int
    t_min: int
    t_max: int
    p_min: int
    p_max: int
    w_min: int
    w_max: int

    def __post_init__(self):
        for name in ("y_min", "y_max", "t_min", "t_max", "p_min", "p_max", "w_min", "w_max"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if not self.u > 0 or not self.q > 0:
            raise ValueError("u and q must be positive")
        if self.y_min > self.y_max:
            raise ValueError("y_min > y_max")
        if self.t_min > self.t_max:
            raise ValueError("t_min > t_max")
        if not self.t_min <= self.p_min <= self.p_max:
            raise ValueError("need t_min <= p_min <= p_max")
        if self.p_max < 1:
            # a zero-width period window makes every schedule infeasible
            raise ValueError("p_max must be at least 1")
        if self.w_min >= self.w_max:
            raise ValueError("need w_min < w_max")


@dataclass(frozen=True)
class BatteryParams:
    e: float = 0.9
    Q: float = 5.0
    gamma: float = 5.0
    V_b: float = 3.6
    rho: float = 0.0
    soc_initial: float = 1.0

    def __post_init__(self):
        if not 0 < self.e <= 1:
            raise ValueError("efficiency e must lie in (0, 1]")
        if self.Q <= 0 or self.gamma <= 0 or self.V_b <= 0:
            raise ValueError("Q, gamma and V_b must be positive")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if not self.rho <= self.soc_initial <= 1:
            raise ValueError("soc_initial must lie in [rho, 1]")

    @property
    def soc_gain(self) -> float:
        """Change of SoC per watt of surplus power during one step."""
        return self.e / (60.0 * self.Q * self.V_b)


@dataclass(frozen=True)
class Instance:
    J: int
    T: int
    jobs: tuple[JobParams, ...]
    r: tuple[float, ...]
    battery: BatteryParams = field(default_factory=BatteryParams)

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))
        object.__setattr__(self, "r", tuple(float(v) for v in self.r))
        if self.J < 1 or self.T < 1:
            raise ValueError("J and T must be positive")
        if len(self.jobs) != self.J:
            raise ValueError(f"expected {self.J} jobs, got {len(self.jobs)}")
        if len(self.r) != self.T:
            raise ValueError(f"expected {self.T} power values, got {len(self.r)}")
        if any(v < 0 for v in self.r):
            raise ValueError("power availability must be non-negative")
        for job in self.jobs:
            if job.w_max > self.T or job.p_max > self.T:
                raise ValueError("job windows and periods cannot exceed the horizon")

    @property
    def u(self) -> np.ndarray:
        return np.array([job.u for job in self.jobs])

    @property
    def q(self) -> np.ndarray:
        return np.array([job.q for job in self.jobs])

    @property
    def n_binary(self) -> int:
        return 2 * self.J * self.T

    def to_dict(self) -> dict:
        return {
            "J": self.J,
            "T": self.T,
            "jobs": [asdict(job) for job in self.jobs],
            "r": list(self.r),
            "battery": asdict(self.battery),
        }

    @classmethod
    def from_dict(cls, data: dict) -> Instance:
        return cls(
            J=int(data["J"]),
            T=int(data["T"]),
            jobs=tuple(JobParams(**job) for job in data["jobs"]),
            r=tuple(data["r"]),
            battery=BatteryParams(**data["battery"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> Instance:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_binary(a, name: str) -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must be binary")
    arr = arr.astype(np.int8)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CandidateSolution:
    """A full binary assignment z = (x, phi), both J x T."""

    x: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_binary(self.x, "x"))
        object.__setattr__(self, "phi", _as_binary(self.phi, "phi"))
        if self.x.shape != self.phi.shape:
            raise ValueError("x and phi must have the same shape")

    def __eq__(self, other):
        if not isinstance(other, CandidateSolution):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.phi, other.phi)

    def __hash__(self):
        return hash(self.z.tobytes())

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), self.phi.ravel()])

    @classmethod
    def from_x(cls, x) -> CandidateSolution:
        return cls(x, derive_phi(x))

    @classmethod
    def from_z(cls, z, J: int, T: int) -> CandidateSolution:
        z = np.asarray(z)
        if z.shape != (2 * J * T,):
            raise ValueError(f"z must have length {2 * J * T}")
        return cls(z[: J * T].reshape(J, T), z[J * T:].reshape(J, T))

    def to_csv(self, path) -> None:
        J, T = self.x.shape
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["j", "t", "x", "phi"])
            for j in range(J):
                for t in range(T):
                    writer.writerow([j + 1, t + 1, int(self.x[j, t]), int(self.phi[j, t])])

    @classmethod
    def from_csv(cls, path, J: int, T: int) -> CandidateSolution:
        x = np.full((J, T), -1)
        phi = np.full((J, T), -1)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["j", "t", "x", "phi"]:
                raise ValueError(f"{path}: expected header j,t,x,phi")
            for row in reader:
                j, t = int(row["j"]) - 1, int(row["t"]) - 1
                if not (0 <= j < J and 0 <= t < T):
                    raise ValueError(f"{path}: index ({j + 1}, {t + 1}) out of range")
                x[j, t], phi[j, t] = int(row["x"]), int(row["phi"])
        if (x < 0).any() or (phi < 0).any():
            raise ValueError(f"{path}: missing (j, t) rows")
        return cls(x, phi)


class Violation(NamedTuple):
    family: str
    j: int | None  # 1-based job, None for time-coupled rows
    t: int | None  # 1-based first time step of the row, None for whole-horizon rows
    lhs: float
    bound: float


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple[Violation, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def families(self) -> set[str]:
        return {v.family for v in self.violations}


def derive_phi(x) -> np.ndarray:
    """Start indicators forced by x: phi[j, t] = x[j, t] * (1 - x[j, t-1])."""
    x = np.asarray(x, dtype=np.int8)
    prev = np.zeros_like(x)
    prev[:, 1:] = x[:, :-1]
    return x * (1 - prev)


def qos(inst: Instance, x) -> float:
    x = np.asarray(x)
    if x.shape != (inst.J, inst.T):
        raise ValueError(f"x must be {inst.J}x{inst.T}")
    return float(inst.u @ x.sum(axis=1))


def power_consumption(inst: Instance, x) -> np.ndarray:
    # summed job by job so that incremental evaluations reproduce it bit for bit
    cons = np.zeros(inst.T)
    for j, job in enumerate(inst.jobs):
        cons += job.q * np.asarray(x[j], dtype=float)
    return cons


def soc_trajectory(inst: Instance, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (soc, b, i); soc has T+1 entries starting at soc_initial.

    No clamping is applied, the bounds are checked by ``check_feasibility``.
    """
    x = np.asarray(x)
    if x.shape != (inst.J, inst.T):
        raise ValueError(f"x must be {inst.J}x{inst.T}")
    bat = inst.battery
    b = np.asarray(inst.r) - power_consumption(inst, x)
    i = b / bat.V_b
    delta = i * bat.e / (60.0 * bat.Q)
    soc = np.cumsum(np.concatenate([[bat.soc_initial], delta]))
    return soc, b, i


def check_feasibility(inst: Instance, z: CandidateSolution) -> FeasibilityReport:
    """Evaluate every constraint row of the formulation and report the violated ones."""
    J, T = inst.J, inst.T
    if z.x.shape != (J, T):
        raise ValueError(f"candidate is {z.x.shape}, instance is {(J, T)}")
    X = z.x.astype(np.int64)
    P = z.phi.astype(np.int64)
    out: list[Violation] = []

    def rows(family, j, ts, lhs, bound, ok):
        for t, lv, bv in zip(np.asarray(ts)[~ok], np.asarray(lhs)[~ok], np.asarray(bound)[~ok]):
            out.append(Violation(family, j, int(t), float(lv), float(bv)))

    ts = np.arange(1, T + 1)
    for j, job in enumerate(inst.jobs):
        x, p = X[j], P[j]
        jj = j + 1
        sx = np.concatenate([[0], np.cumsum(x)])
        sp = np.concatenate([[0], np.cumsum(p)])
        if p[0] < x[0]:
            out.append(Violation("2a", jj, 1, float(p[0]), float(x[0])))
        rhs = x[1:] - x[:-1]
        rows("2b", jj, ts[1:], p[1:], rhs, p[1:] >= rhs)
        rows("2c", jj, ts, p, x, p <= x)
        rhs = 2 - x[1:] - x[:-1]
        rows("2d", jj, ts[1:], p[1:], rhs, p[1:] <= rhs)
        if sx[job.w_min] != 0:
            out.append(Violation("2e", jj, None, float(sx[job.w_min]), 0.0))
        if sx[T] - sx[job.w_max] != 0:
            out.append(Violation("2f", jj, None, float(sx[T] - sx[job.w_max]), 0.0))
        # windows start at 1-based t; the slice of sx is offset by one
        w = job.t_min
        starts = np.arange(1, min(T - w + 1, T) + 1)
        lhs = sx[starts - 1 + w] - sx[starts - 1]
        rhs = w * p[starts - 1]
        rows("2g", jj, starts, lhs, rhs, lhs >= rhs)
        w = job.t_max
        starts = np.arange(1, T - w + 1)
        lhs = sx[starts + w] - sx[starts - 1]
        rows("2h", jj, starts, lhs, np.full(len(starts), w), lhs <= w)
        starts = np.arange(max(1, T - job.t_min + 2), T + 1)
        lhs = sx[T] - sx[starts - 1]
        rhs = (T - starts + 1) * p[starts - 1]
        rows("2i", jj, starts, lhs, rhs, lhs >= rhs)
        w = job.p_min
        starts = np.arange(1, T - w + 2)
        lhs = sp[starts - 1 + w] - sp[starts - 1]
        rows("2j", jj, starts, lhs, np.ones(len(starts)), lhs <= 1)
        w = job.p_max
        starts = np.arange(1, T - w + 2)
        lhs = sp[starts - 1 + w] - sp[starts - 1]
        rows("2k", jj, starts, lhs, np.ones(len(starts)), lhs >= 1)
        if sp[T] < job.y_min:
            out.append(Violation("2l", jj, None, float(sp[T]), float(job.y_min)))
        if sp[T] > job.y_max:
            out.append(Violation("2m", jj, None, float(sp[T]), float(job.y_max)))

    bat = inst.battery
    cons = power_consumption(inst, X)
    cap = np.asarray(inst.r) + bat.gamma * bat.V_b
    for t in np.flatnonzero(cons > cap + CONTINUOUS_TOL):
        out.append(Violation("3a", None, int(t) + 1, float(cons[t]), float(cap[t])))
    soc, _, _ = soc_trajectory(inst, X)
    for t in np.flatnonzero(soc > 1.0 + CONTINUOUS_TOL):
        out.append(Violation("3e", None, int(t) + 1, float(soc[t]), 1.0))
    for t in np.flatnonzero(soc < bat.rho - CONTINUOUS_TOL):
        out.append(Violation("3f", None, int(t) + 1, float(soc[t]), bat.rho))
    return FeasibilityReport(tuple(out))


def is_feasible(inst: Instance, z: CandidateSolution) -> bool:
    return check_feasibility(inst, z).feasible
