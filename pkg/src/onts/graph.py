"""Weighted bipartite variable/constraint graph of a standard form.

Rows are brought to ``a x <= b`` orientation (``>=`` rows are negated) so the
constraint weight is always an upper bound; equality rows keep their sign and
are flagged.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .milp import StandardForm
from .model import CandidateSolution

VAR_FEATURES = ("objective", "mean_coef", "degree", "max_coef", "min_coef", "is_binary")
CON_FEATURES = ("bound", "mean_coef", "degree", "is_equality")


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    n_var: int
    n_con: int
    con_index: np.ndarray  # per edge
    var_index: np.ndarray
    weight: np.ndarray
    var_features: np.ndarray  # n_var x 6, or x 7 with a candidate column
    con_features: np.ndarray  # n_con x 4

    def __post_init__(self):
        for name in ("con_index", "var_index"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        object.__setattr__(self, "weight", np.asarray(self.weight, dtype=float))
        object.__setattr__(self, "var_features", np.asarray(self.var_features, dtype=float).reshape(self.n_var, -1))
        object.__setattr__(self, "con_features", np.asarray(self.con_features, dtype=float).reshape(self.n_con, -1))
        if not (len(self.con_index) == len(self.var_index) == len(self.weight)):
            raise ValueError("edge arrays differ in length")
        if len(self.weight) and (
            self.con_index.min() < 0 or self.con_index.max() >= self.n_con
            or self.var_index.min() < 0 or self.var_index.max() >= self.n_var
        ):
            raise ValueError("edge endpoint out of range")
        if self.var_features.shape[1] not in (6, 7) or self.con_features.shape[1] != 4:
            raise ValueError("unexpected feature widths")

    @property
    def n_edges(self) -> int:
        return len(self.weight)

    @property
    def has_candidate(self) -> bool:
        return self.var_features.shape[1] == 7

    @property
    def binary_mask(self) -> np.ndarray:
        return self.var_features[:, 5] > 0.5

    def incident_stats(self, side: str) -> dict[str, np.ndarray]:
        """Mean, max, min and count of the nonzero weights incident to each node."""
        if side == "var":
            idx, n = self.var_index, self.n_var
        elif side == "con":
            idx, n = self.con_index, self.n_con
        else:
            raise ValueError("side must be 'var' or 'con'")
        deg = np.bincount(idx, minlength=n).astype(float)
        total = np.bincount(idx, weights=self.weight, minlength=n)
        mean = np.divide(total, deg, out=np.zeros(n), where=deg > 0)
        hi = np.full(n, -np.inf)
        lo = np.full(n, np.inf)
        np.maximum.at(hi, idx, self.weight)
        np.minimum.at(lo, idx, self.weight)
        hi[deg == 0] = 0.0
        lo[deg == 0] = 0.0
        return {"mean": mean, "max": hi, "min": lo, "degree": deg}

    def with_candidate(self, values) -> BipartiteGraph:
        """Copy of the graph with the candidate column set (feasibility mode)."""
        values = np.asarray(values, dtype=float)
        binary = np.flatnonzero(self.binary_mask)
        if values.shape != (len(binary),):
            raise ValueError(f"candidate has {values.size} entries, graph has {len(binary)} binary variables")
        col = np.zeros(self.n_var)
        col[binary] = values
        feats = np.column_stack([self.var_features[:, :6], col])
        return BipartiteGraph(self.n_var, self.n_con, self.con_index, self.var_index, self.weight,
                              feats, self.con_features)

    def permuted(self, var_perm=None, con_perm=None) -> BipartiteGraph:
        """Relabel nodes: new node k is old node perm[k]."""
        var_perm = np.arange(self.n_var) if var_perm is None else np.asarray(var_perm)
        con_perm = np.arange(self.n_con) if con_perm is None else np.asarray(con_perm)
        var_inv = np.empty_like(var_perm)
        var_inv[var_perm] = np.arange(self.n_var)
        con_inv = np.empty_like(con_perm)
        con_inv[con_perm] = np.arange(self.n_con)
        return BipartiteGraph(
            self.n_var, self.n_con,
            con_inv[self.con_index], var_inv[self.var_index], self.weight,
            self.var_features[var_perm], self.con_features[con_perm],
        )

    def to_dict(self) -> dict:
        return {
            "n_var": self.n_var,
            "n_con": self.n_con,
            "edges": [[int(i), int(j), float(w)] for i, j, w in zip(self.con_index, self.var_index, self.weight)],
            "var_features": self.var_features.tolist(),
            "con_features": self.con_features.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> BipartiteGraph:
        edges = np.asarray(data["edges"], dtype=float).reshape(-1, 3)
        return cls(
            int(data["n_var"]), int(data["n_con"]),
            edges[:, 0].astype(np.int64), edges[:, 1].astype(np.int64), edges[:, 2],
            np.asarray(data["var_features"], dtype=float),
            np.asarray(data["con_features"], dtype=float),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> BipartiteGraph:
        return cls.from_dict(json.loads(Path(path).read_text()))


def encode_bipartite(sf: StandardForm, candidate: CandidateSolution | np.ndarray | None = None) -> BipartiteGraph:
    con_index, var_index, weight = [], [], []
    bound = np.empty(sf.n_rows)
    is_eq = np.zeros(sf.n_rows)
    for i, row in enumerate(sf.rows):
        sign = -1.0 if row.sense == ">=" else 1.0
        bound[i] = sign * row.rhs
        is_eq[i] = row.sense == "="
        for col, coef in row.coeffs:
            if coef != 0:
                con_index.append(i)
                var_index.append(col)
                weight.append(sign * coef)
    graph = BipartiteGraph(
        sf.n_vars, sf.n_rows, np.array(con_index, dtype=np.int64), np.array(var_index, dtype=np.int64),
        np.array(weight), np.zeros((sf.n_vars, 6)), np.zeros((sf.n_rows, 4)),
    )
    vs = graph.incident_stats("var")
    cs = graph.incident_stats("con")
    is_bin = np.array([kind == "binary" for kind in sf.var_kinds], dtype=float)
    var_feats = np.column_stack([sf.c, vs["mean"], vs["degree"], vs["max"], vs["min"], is_bin])
    con_feats = np.column_stack([bound, cs["mean"], cs["degree"], is_eq])
    if graph.n_edges:
        # bipartite by construction: endpoints come from disjoint index spaces
        assert graph.con_index.max() < sf.n_rows and graph.var_index.max() < sf.n_vars
    graph = BipartiteGraph(graph.n_var, graph.n_con, graph.con_index, graph.var_index, graph.weight,
                           var_feats, con_feats)
    if candidate is not None:
        z = candidate.z if isinstance(candidate, CandidateSolution) else np.asarray(candidate)
        graph = graph.with_candidate(z)
    return graph
