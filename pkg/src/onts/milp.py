"""Sparse standard form of an instance and a small LP-file dialect.

Column order is x (job-major, time-minor), then phi, then SoC_1..SoC_{T+1}.
The power balance and battery current are affine in x, so they are
substituted into the SoC recursion instead of getting their own columns.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .model import CONTINUOUS_TOL, Instance, soc_trajectory

SENSES = ("<=", ">=", "=")
ROW_FAMILIES = (
    "2a", "2b", "2c", "2d", "2e", "2f", "2g", "2h", "2i", "2j", "2k", "2l", "2m",
    "3a", "soc", "3e", "3f",
)


class Row(NamedTuple):
    coeffs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    family: str


@dataclass(frozen=True)
class StandardForm:
    var_names: tuple[str, ...]
    var_kinds: tuple[str, ...]  # "binary" or "continuous"
    var_bounds: tuple[tuple[float, float], ...]
    c: np.ndarray
    rows: tuple[Row, ...]

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, StandardForm):
            return NotImplemented
        return (
            self.var_names == other.var_names
            and self.var_kinds == other.var_kinds
            and self.var_bounds == other.var_bounds
            and np.array_equal(self.c, other.c)
            and self.rows == other.rows
        )

    def matrix(self) -> sp.csr_matrix:
        data, ri, ci = [], [], []
        for i, row in enumerate(self.rows):
            for col, coef in row.coeffs:
                ri.append(i)
                ci.append(col)
                data.append(coef)
        return sp.csr_matrix((data, (ri, ci)), shape=(self.n_rows, self.n_vars))

    @property
    def rhs(self) -> np.ndarray:
        return np.array([row.rhs for row in self.rows])

    @property
    def senses(self) -> tuple[str, ...]:
        return tuple(row.sense for row in self.rows)

    def row_satisfied(self, values: np.ndarray, tol: float = CONTINUOUS_TOL) -> np.ndarray:
        """Boolean per row (or rows x samples if ``values`` is 2-d, one column per sample)."""
        act = self.matrix() @ values
        rhs = self.rhs if act.ndim == 1 else self.rhs[:, None]
        sense = np.array(self.senses)
        if act.ndim == 2:
            sense = sense[:, None]
        return np.where(
            sense == "<=", act <= rhs + tol,
            np.where(sense == ">=", act >= rhs - tol, np.abs(act - rhs) <= tol),
        )


def x_index(T: int, j: int, t: int) -> int:
    """Column of x_{j,t}, with 0-based j and t."""
    return j * T + t


def phi_index(J: int, T: int, j: int, t: int) -> int:
    return J * T + j * T + t


def soc_index(J: int, T: int, t: int) -> int:
    """Column of SoC_{t+1} (t = 0 is the initial charge)."""
    return 2 * J * T + t


def build_standard_form(inst: Instance) -> StandardForm:
    J, T = inst.J, inst.T
    X = lambda j, t: x_index(T, j, t)  # noqa: E731
    P = lambda j, t: phi_index(J, T, j, t)  # noqa: E731
    S = lambda t: soc_index(J, T, t)  # noqa: E731

    names = [f"x_{j + 1}_{t + 1}" for j in range(J) for t in range(T)]
    names += [f"phi_{j + 1}_{t + 1}" for j in range(J) for t in range(T)]
    names += [f"soc_{t + 1}" for t in range(T + 1)]
    kinds = ["binary"] * (2 * J * T) + ["continuous"] * (T + 1)
    bounds = [(0.0, 1.0)] * (2 * J * T) + [(-math.inf, math.inf)] * (T + 1)
    c = np.zeros(len(names))
    for j, job in enumerate(inst.jobs):
        c[X(j, 0): X(j, 0) + T] = job.u

    fam: dict[str, list[Row]] = {f: [] for f in ROW_FAMILIES}

    def add(family, coeffs, sense, rhs):
        merged: dict[int, float] = {}
        for col, coef in coeffs:
            merged[col] = merged.get(col, 0.0) + float(coef)
        items = tuple((col, coef) for col, coef in merged.items() if coef != 0.0)
        if items:
            fam[family].append(Row(items, sense, float(rhs), family))

    for j, job in enumerate(inst.jobs):
        add("2a", [(P(j, 0), 1), (X(j, 0), -1)], ">=", 0)
        for t in range(1, T):
            add("2b", [(P(j, t), 1), (X(j, t), -1), (X(j, t - 1), 1)], ">=", 0)
        for t in range(T):
            add("2c", [(P(j, t), 1), (X(j, t), -1)], "<=", 0)
        for t in range(1, T):
            add("2d", [(P(j, t), 1), (X(j, t), 1), (X(j, t - 1), 1)], "<=", 2)
        add("2e", [(X(j, t), 1) for t in range(job.w_min)], "=", 0)
        add("2f", [(X(j, t), 1) for t in range(job.w_max, T)], "=", 0)
        for s in range(min(T - job.t_min + 1, T)):
            add("2g", [(X(j, l), 1) for l in range(s, s + job.t_min)] + [(P(j, s), -job.t_min)], ">=", 0)
        for s in range(T - job.t_max):
            add("2h", [(X(j, l), 1) for l in range(s, s + job.t_max + 1)], "<=", job.t_max)
        for s in range(max(0, T - job.t_min + 1), T):
            add("2i", [(X(j, l), 1) for l in range(s, T)] + [(P(j, s), -(T - s))], ">=", 0)
        for s in range(T - job.p_min + 1):
            add("2j", [(P(j, l), 1) for l in range(s, s + job.p_min)], "<=", 1)
        for s in range(T - job.p_max + 1):
            add("2k", [(P(j, l), 1) for l in range(s, s + job.p_max)], ">=", 1)
        add("2l", [(P(j, t), 1) for t in range(T)], ">=", job.y_min)
        add("2m", [(P(j, t), 1) for t in range(T)], "<=", job.y_max)

    bat = inst.battery
    k = bat.e / (60.0 * bat.Q * bat.V_b)
    for t in range(T):
        add("3a", [(X(j, t), job.q) for j, job in enumerate(inst.jobs)], "<=",
            inst.r[t] + bat.gamma * bat.V_b)
    # SoC_1 is pinned by its own row so that the initial charge is visible in the graph
    add("soc", [(S(0), 1)], "=", bat.soc_initial)
    for t in range(T):
        add("soc", [(S(t + 1), 1), (S(t), -1)] + [(X(j, t), job.q * k) for j, job in enumerate(inst.jobs)],
            "=", inst.r[t] * k)
    for t in range(T + 1):
        add("3e", [(S(t), 1)], "<=", 1.0)
    for t in range(T + 1):
        add("3f", [(S(t), 1)], ">=", bat.rho)

    rows = tuple(row for f in ROW_FAMILIES for row in fam[f])
    return StandardForm(tuple(names), tuple(kinds), tuple(bounds), c, rows)


def full_vector(inst: Instance, z) -> np.ndarray:
    """Column vector (x, phi, SoC) for a binary assignment z, SoC simulated from x."""
    z = np.asarray(getattr(z, "z", z), dtype=float)
    x = z[: inst.J * inst.T].reshape(inst.J, inst.T)
    soc, _, _ = soc_trajectory(inst, x)
    return np.concatenate([z, soc])


def matrix_feasible(sf: StandardForm, values: np.ndarray, tol: float = CONTINUOUS_TOL) -> bool:
    return bool(sf.row_satisfied(values, tol).all())


# --- LP text format ---------------------------------------------------------

class LPParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _num(v: float) -> str:
    return format(v, ".17g")


def _terms(coeffs) -> str:
    parts = []
    for i, (name, coef) in enumerate(coeffs):
        sign = "-" if coef < 0 else "+"
        mag = _num(abs(coef))
        if i == 0:
            parts.append(f"{'-' if coef < 0 else ''}{mag} {name}")
        else:
            parts.append(f"{sign} {mag} {name}")
    return " ".join(parts)


def lp_text(sf: StandardForm) -> str:
    names = sf.var_names
    lines = ["\\ ONTS instance in standard form", "Maximize"]
    obj = [(names[j], float(v)) for j, v in enumerate(sf.c) if v != 0]
    lines.append(f" obj: {_terms(obj)}" if obj else " obj:")
    lines.append("Subject To")
    for i, row in enumerate(sf.rows):
        lhs = _terms([(names[col], coef) for col, coef in row.coeffs])
        lines.append(f" r{i}_{row.family}: {lhs} {row.sense} {_num(row.rhs)}")
    lines.append("Bounds")
    for name, kind, (lo, hi) in zip(names, sf.var_kinds, sf.var_bounds):
        if kind == "binary":
            continue
        if lo == -math.inf and hi == math.inf:
            lines.append(f" {name} free")
        else:
            lines.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    lines.append("Binary")
    binaries = [n for n, kind in zip(names, sf.var_kinds) if kind == "binary"]
    for i in range(0, len(binaries), 10):
        lines.append(" " + " ".join(binaries[i:i + 10]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(sf: StandardForm, path) -> None:
    Path(path).write_text(lp_text(sf))


_NAME_RE = re.compile(r"^(x|phi)_(\d+)_(\d+)$|^soc_(\d+)$")
_TERM_RE = re.compile(r"([+-]?)\s*([0-9.eE+-]+|inf)\s+([A-Za-z_][A-Za-z0-9_]*)")


def _var_key(name: str, lineno: int):
    m = _NAME_RE.match(name)
    if not m:
        raise LPParseError(lineno, f"unknown variable name {name!r}")
    if m.group(4) is not None:
        return (2, 0, int(m.group(4)))
    return (0 if m.group(1) == "x" else 1, int(m.group(2)), int(m.group(3)))


def _parse_terms(text: str, lineno: int) -> list[tuple[str, float]]:
    text = text.strip()
    out = []
    pos = 0
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m:
            raise LPParseError(lineno, f"cannot parse term at {text[pos:]!r}")
        sign, mag, name = m.groups()
        try:
            val = float(mag)
        except ValueError:
            raise LPParseError(lineno, f"bad coefficient {mag!r}") from None
        out.append((name, -val if sign == "-" else val))
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return out


def parse_lp(path) -> StandardForm:
    section = None
    obj: list[tuple[str, float]] = []
    raw_rows: list[tuple[list[tuple[str, float]], str, float, str, int]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: list[str] = []
    seen: dict[str, int] = {}
    ended = False

    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("\\"):
            continue
        key = text.lower()
        if key in ("maximize", "subject to", "bounds", "binary", "end"):
            section = key
            ended = key == "end"
            continue
        if ended:
            raise LPParseError(lineno, "content after End")
        if section == "maximize":
            if not text.startswith("obj:"):
                raise LPParseError(lineno, "objective must be named obj")
            obj = _parse_terms(text[4:], lineno)
            for name, _ in obj:
                seen.setdefault(name, lineno)
        elif section == "subject to":
            m = re.match(r"^r\d+_(\w+):\s*(.*?)\s*(<=|>=|=)\s*(\S+)$", text)
            if not m:
                raise LPParseError(lineno, f"malformed constraint {text!r}")
            family, lhs, sense, rhs = m.groups()
            if family not in ROW_FAMILIES:
                raise LPParseError(lineno, f"unknown row family {family!r}")
            terms = _parse_terms(lhs, lineno)
            if not terms:
                raise LPParseError(lineno, "empty constraint")
            try:
                rhs_v = float(rhs)
            except ValueError:
                raise LPParseError(lineno, f"bad right-hand side {rhs!r}") from None
            for name, _ in terms:
                seen.setdefault(name, lineno)
            raw_rows.append((terms, sense, rhs_v, family, lineno))
        elif section == "bounds":
            m_free = re.match(r"^(\S+)\s+free$", text)
            m_box = re.match(r"^(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", text)
            try:
                if m_free:
                    name, lo, hi = m_free.group(1), -math.inf, math.inf
                elif m_box:
                    name, lo, hi = m_box.group(2), float(m_box.group(1)), float(m_box.group(3))
                else:
                    raise LPParseError(lineno, f"malformed bound {text!r}")
            except ValueError:
                raise LPParseError(lineno, f"bad bound value in {text!r}") from None
            bounds[name] = (lo, hi)
            seen.setdefault(name, lineno)
        elif section == "binary":
            for name in text.split():
                binaries.append(name)
                seen.setdefault(name, lineno)
        else:
            raise LPParseError(lineno, "content outside of a section")
    if not ended:
        raise LPParseError(lineno if raw_rows or obj else 0, "missing End")

    names = sorted(seen, key=lambda n: _var_key(n, seen[n]))
    col = {n: i for i, n in enumerate(names)}
    bin_set = set(binaries)
    kinds = tuple("binary" if n in bin_set else "continuous" for n in names)
    var_bounds = tuple((0.0, 1.0) if n in bin_set else bounds.get(n, (0.0, math.inf)) for n in names)
    c = np.zeros(len(names))
    for name, v in obj:
        c[col[name]] += v
    rows = []
    for terms, sense, rhs, family, _ in raw_rows:
        rows.append(Row(tuple((col[n], v) for n, v in terms), sense, rhs, family))
    return StandardForm(tuple(names), kinds, var_bounds, c, tuple(rows))
