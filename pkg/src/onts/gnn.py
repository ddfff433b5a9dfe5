"""SatGNN on the bipartite MILP graph, with hand-written backpropagation.

A layer first refreshes the constraint nodes from their variables, then the
variable nodes from the refreshed constraints. Messages are neighbour
features scaled by the edge weight. Graphs in a mini-batch are stacked as one
disjoint graph, so a batch is a single forward/backward pass.

Weights are stored as (fan_in, fan_out) matrices and applied as ``H @ W``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import BipartiteGraph

log = logging.getLogger(__name__)

CONV_KINDS = ("gcn", "sage")
AGGREGATIONS = ("mean", "max", "sum")
TASKS = ("feasibility", "bias")
LOSS_MODES = ("feas", "opt-b", "opt-m")
PROB_CLAMP = 1e-12
LOGIT_CLAMP = math.log((1 - PROB_CLAMP) / PROB_CLAMP)
FEASIBILITY_STOP_LOSS = 1e-2

ModelParams = dict  # name -> np.ndarray


@dataclass(frozen=True)
class SatGNNConfig:
    d: int = 8
    L: int = 1
    conv_kind: str = "gcn"
    aggregation: str = "sum"
    share_conv_params: bool = False
    task: str = "feasibility"
    learning_rate: float = 1e-3
    max_epochs: int = 200
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.d < 1 or self.L < 1:
            raise ValueError("d and L must be at least 1")
        if self.conv_kind not in CONV_KINDS:
            raise ValueError(f"conv_kind must be one of {CONV_KINDS}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.learning_rate < 0 or self.max_epochs < 0 or self.batch_size < 1:
            raise ValueError("learning_rate, max_epochs and batch_size out of range")

    @classmethod
    def feasibility_default(cls, **kw) -> SatGNNConfig:
        base = dict(d=8, L=1, conv_kind="gcn", aggregation="sum", task="feasibility", learning_rate=1e-3,
                    batch_size=16)
        return cls(**{**base, **kw})

    @classmethod
    def bias_default(cls, **kw) -> SatGNNConfig:
        base = dict(d=16, L=2, conv_kind="sage", aggregation="mean", share_conv_params=True,
                    task="bias", learning_rate=1e-2)
        return cls(**{**base, **kw})

    @property
    def n_var_features(self) -> int:
        return 7 if self.task == "feasibility" else 6


# --- parameters ---------------------------------------------------------------

def _conv_prefixes(config: SatGNNConfig) -> list[str]:
    if config.share_conv_params:
        return ["conv"] * config.L
    return [f"conv{l}" for l in range(config.L)]


def param_shapes(config: SatGNNConfig) -> dict[str, tuple[int, ...]]:
    d = config.d
    shapes = {
        "enc_var.W": (config.n_var_features, d), "enc_var.b": (d,),
        "enc_con.W": (4, d), "enc_con.b": (d,),
    }
    for prefix in dict.fromkeys(_conv_prefixes(config)):
        for direction in ("vc", "cv"):
            key = f"{prefix}.{direction}"
            if config.conv_kind == "gcn":
                shapes[f"{key}.W"] = (d, d)
            else:
                shapes[f"{key}.W1"] = (d, d)
                shapes[f"{key}.W2"] = (d, d)
            shapes[f"{key}.b"] = (d,)
    shapes.update({
        "head.W1": (d, d), "head.b1": (d,),
        "head.W2": (d, d), "head.b2": (d,),
        "head.W3": (d, 1), "head.b3": (1,),
    })
    return shapes


def init_params(config: SatGNNConfig) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 2:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def check_params(params: ModelParams, config: SatGNNConfig) -> None:
    shapes = param_shapes(config)
    if set(params) != set(shapes):
        raise ValueError(f"parameter names differ from config: {sorted(set(params) ^ set(shapes))}")
    for name, shape in shapes.items():
        if params[name].shape != shape:
            raise ValueError(f"{name}: shape {params[name].shape}, expected {shape}")
        if not np.isfinite(params[name]).all():
            raise ValueError(f"{name}: non-finite entries")


# --- inputs ---------------------------------------------------------------------

def _zscore(a: np.ndarray) -> np.ndarray:
    mu = a.mean(axis=0)
    sd = a.std(axis=0)
    ok = sd > 1e-12 * (1.0 + np.abs(mu))
    out = np.zeros_like(a)
    out[:, ok] = (a[:, ok] - mu[ok]) / sd[ok]
    return out


def standardize(graph: BipartiteGraph) -> BipartiteGraph:
    """Per-graph z-score of the real-valued columns; 0/1 flag columns stay as they are."""
    var = graph.var_features.copy()
    var[:, :5] = _zscore(var[:, :5])
    con = _zscore(graph.con_features)
    return BipartiteGraph(graph.n_var, graph.n_con, graph.con_index, graph.var_index, graph.weight, var, con)


class Aggregator:
    """Neighbour aggregation from a source node set into a target node set."""

    def __init__(self, tgt, src, weight, n_tgt: int, n_src: int, mode: str):
        tgt = np.asarray(tgt, dtype=np.int64)
        src = np.asarray(src, dtype=np.int64)
        weight = np.asarray(weight, dtype=float)
        self.mode, self.n_tgt, self.n_src = mode, n_tgt, n_src
        if mode == "max":
            order = np.argsort(tgt, kind="stable")
            self.src, self.tgt, self.w = src[order], tgt[order], weight[order]
            self.targets, self.starts, counts = np.unique(self.tgt, return_index=True, return_counts=True)
            self.counts = counts
            E = len(order)
            self.scatter = sp.csr_matrix((self.w, (self.src, np.arange(E))), shape=(n_src, E))
            return
        vals = weight.copy()
        if mode == "gcn":
            deg_t = np.bincount(tgt, minlength=n_tgt).astype(float)
            deg_s = np.bincount(src, minlength=n_src).astype(float)
            vals = vals / np.sqrt(deg_t[tgt] * deg_s[src])
        elif mode == "mean":
            deg_t = np.bincount(tgt, minlength=n_tgt).astype(float)
            vals = vals / deg_t[tgt]
        elif mode != "sum":
            raise ValueError(f"unknown aggregation {mode!r}")
        self.M = sp.csr_matrix((vals, (tgt, src)), shape=(n_tgt, n_src))
        self.MT = self.M.T.tocsr()

    def forward(self, H: np.ndarray):
        if self.mode != "max":
            return self.M @ H, None
        out = np.zeros((self.n_tgt, H.shape[1]))
        if not len(self.src):
            return out, None
        msg = self.w[:, None] * H[self.src]
        top = np.maximum.reduceat(msg, self.starts, axis=0)
        out[self.targets] = top
        # first edge attaining the maximum, per target and channel
        E = len(self.src)
        hit = msg == np.repeat(top, self.counts, axis=0)
        pos = np.where(hit, np.arange(E)[:, None], E)
        first = np.minimum.reduceat(pos, self.starts, axis=0)
        return out, first

    def backward(self, dA: np.ndarray, ctx) -> np.ndarray:
        if self.mode != "max":
            return self.MT @ dA
        if ctx is None:
            return np.zeros((self.n_src, dA.shape[1]))
        dmsg = np.zeros((len(self.src), dA.shape[1]))
        cols = np.broadcast_to(np.arange(dA.shape[1]), ctx.shape)
        dmsg[ctx, cols] = dA[self.targets]
        return self.scatter @ dmsg


class GraphBatch:
    """Several graphs stacked into one disjoint graph (features standardized)."""

    def __init__(self, graphs: Sequence[BipartiteGraph], *, standardized: bool = False):
        if not graphs:
            raise ValueError("empty batch")
        graphs = [g if standardized else standardize(g) for g in graphs]
        widths = {g.var_features.shape[1] for g in graphs}
        if len(widths) != 1:
            raise ValueError("graphs in a batch must share the variable feature width")
        self.n_graphs = len(graphs)
        self.var_x = np.vstack([g.var_features for g in graphs])
        self.con_x = np.vstack([g.con_features for g in graphs])
        self.n_var, self.n_con = self.var_x.shape[0], self.con_x.shape[0]
        vo = np.cumsum([0] + [g.n_var for g in graphs])
        co = np.cumsum([0] + [g.n_con for g in graphs])
        self.var_offsets = vo
        self.con_index = np.concatenate([g.con_index + co[k] for k, g in enumerate(graphs)])
        self.var_index = np.concatenate([g.var_index + vo[k] for k, g in enumerate(graphs)])
        self.weight = np.concatenate([g.weight for g in graphs])
        self.graph_of_var = np.repeat(np.arange(self.n_graphs), [g.n_var for g in graphs])
        masks = [g.binary_mask for g in graphs]
        self.binary_index = np.concatenate([np.flatnonzero(m) + vo[k] for k, m in enumerate(masks)])
        self.binary_counts = np.array([int(m.sum()) for m in masks])
        counts = np.array([g.n_var for g in graphs], dtype=float)
        self.readout = sp.csr_matrix(
            (1.0 / counts[self.graph_of_var], (self.graph_of_var, np.arange(self.n_var))),
            shape=(self.n_graphs, self.n_var),
        )
        self._aggs: dict[tuple[str, str], Aggregator] = {}

    def aggregator(self, direction: str, mode: str) -> Aggregator:
        key = (direction, mode)
        if key not in self._aggs:
            if direction == "vc":
                agg = Aggregator(self.con_index, self.var_index, self.weight, self.n_con, self.n_var, mode)
            else:
                agg = Aggregator(self.var_index, self.con_index, self.weight, self.n_var, self.n_con, mode)
            self._aggs[key] = agg
        return self._aggs[key]

    def split_binary(self, values: np.ndarray) -> list[np.ndarray]:
        return np.split(values, np.cumsum(self.binary_counts)[:-1])


def _as_batch(graph) -> GraphBatch:
    return graph if isinstance(graph, GraphBatch) else GraphBatch([graph])


# --- forward / backward -----------------------------------------------------------

def _relu(a):
    return np.maximum(a, 0.0)


def _conv_forward(params, key, kind, agg, Ht, Hs):
    A, ctx = agg.forward(Hs)
    if kind == "gcn":
        Z = A @ params[f"{key}.W"] + params[f"{key}.b"]
    else:
        Z = Ht @ params[f"{key}.W1"] + A @ params[f"{key}.W2"] + params[f"{key}.b"]
    return _relu(Z), (Ht, A, ctx, Z)


def _conv_backward(params, grads, key, kind, agg, dOut, cache):
    Ht, A, ctx, Z = cache
    dZ = dOut * (Z > 0)
    grads[f"{key}.b"] += dZ.sum(axis=0)
    if kind == "gcn":
        grads[f"{key}.W"] += A.T @ dZ
        dA = dZ @ params[f"{key}.W"].T
        dHt = np.zeros_like(Ht)
    else:
        grads[f"{key}.W1"] += Ht.T @ dZ
        grads[f"{key}.W2"] += A.T @ dZ
        dA = dZ @ params[f"{key}.W2"].T
        dHt = dZ @ params[f"{key}.W1"].T
    return dHt, agg.backward(dA, ctx)


def gcn_conv(H_src, tgt, src, weight, n_tgt, W, b, *, normalize: bool = True) -> np.ndarray:
    """One GCN direction: ReLU(b + sum_u (A_vu / c_vu) h_u W); c_vu = 1 if not normalize."""
    agg = Aggregator(tgt, src, weight, n_tgt, len(H_src), "gcn" if normalize else "sum")
    out, _ = _conv_forward({"k.W": W, "k.b": b}, "k", "gcn", agg, None, H_src)
    return out


def sage_conv(H_tgt, H_src, tgt, src, weight, W1, W2, b, *, aggregation: str = "mean") -> np.ndarray:
    """One SAGE direction: ReLU(b + h_v W1 + AGG(A_vu h_u) W2)."""
    agg = Aggregator(tgt, src, weight, len(H_tgt), len(H_src), aggregation)
    out, _ = _conv_forward({"k.W1": W1, "k.W2": W2, "k.b": b}, "k", "sage", agg, H_tgt, H_src)
    return out


def _check_inputs(config: SatGNNConfig, batch: GraphBatch):
    if batch.var_x.shape[1] != config.n_var_features:
        raise ValueError(
            f"{config.task} model expects {config.n_var_features} variable features, "
            f"graph has {batch.var_x.shape[1]}"
        )


def _forward(params, config, batch):
    _check_inputs(config, batch)
    mode = "gcn" if config.conv_kind == "gcn" else config.aggregation
    tape = {}
    Zv = batch.var_x @ params["enc_var.W"] + params["enc_var.b"]
    Zc = batch.con_x @ params["enc_con.W"] + params["enc_con.b"]
    hv, hc = _relu(Zv), _relu(Zc)
    tape["enc"] = (Zv, Zc)
    layers = []
    for key in _conv_prefixes(config):
        hc, c1 = _conv_forward(params, f"{key}.vc", config.conv_kind, batch.aggregator("vc", mode), hc, hv)
        hv, c2 = _conv_forward(params, f"{key}.cv", config.conv_kind, batch.aggregator("cv", mode), hv, hc)
        layers.append((key, c1, c2))
    tape["layers"] = layers
    Z1 = hv @ params["head.W1"] + params["head.b1"]
    a1 = _relu(Z1)
    Z2 = a1 @ params["head.W2"] + params["head.b2"]
    a2 = _relu(Z2)
    logit = (a2 @ params["head.W3"] + params["head.b3"])[:, 0]
    tape["head"] = (hv, Z1, a1, Z2, a2)
    if config.task == "bias":
        out_logit = logit[batch.binary_index]
    else:
        out_logit = batch.readout @ logit
    return out_logit, tape


def _backward(params, config, batch, tape, d_out):
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    mode = "gcn" if config.conv_kind == "gcn" else config.aggregation
    if config.task == "bias":
        dlogit = np.zeros(batch.n_var)
        dlogit[batch.binary_index] = d_out
    else:
        dlogit = batch.readout.T @ d_out
    hv, Z1, a1, Z2, a2 = tape["head"]
    dZ3 = dlogit[:, None]
    grads["head.W3"] += a2.T @ dZ3
    grads["head.b3"] += dZ3.sum(axis=0)
    dZ2 = (dZ3 @ params["head.W3"].T) * (Z2 > 0)
    grads["head.W2"] += a1.T @ dZ2
    grads["head.b2"] += dZ2.sum(axis=0)
    dZ1 = (dZ2 @ params["head.W2"].T) * (Z1 > 0)
    grads["head.W1"] += hv.T @ dZ1
    grads["head.b1"] += dZ1.sum(axis=0)
    dhv = dZ1 @ params["head.W1"].T
    dhc = np.zeros((batch.n_con, config.d))
    for key, c1, c2 in reversed(tape["layers"]):
        dhv_prev, dhc_new = _conv_backward(params, grads, f"{key}.cv", config.conv_kind,
                                           batch.aggregator("cv", mode), dhv, c2)
        dhc = dhc + dhc_new
        dhc_prev, dhv_src = _conv_backward(params, grads, f"{key}.vc", config.conv_kind,
                                           batch.aggregator("vc", mode), dhc, c1)
        dhv, dhc = dhv_prev + dhv_src, dhc_prev
    Zv, Zc = tape["enc"]
    dZv = dhv * (Zv > 0)
    dZc = dhc * (Zc > 0)
    grads["enc_var.W"] += batch.var_x.T @ dZv
    grads["enc_var.b"] += dZv.sum(axis=0)
    grads["enc_con.W"] += batch.con_x.T @ dZc
    grads["enc_con.b"] += dZc.sum(axis=0)
    return grads


def forward(params: ModelParams, config: SatGNNConfig, graph):
    """Probabilities: one per binary variable (bias task) or one per graph (feasibility).

    A single ``BipartiteGraph`` gives a vector of length 2JT (bias) or a
    float (feasibility); a ``GraphBatch`` gives the stacked values.
    """
    batch = _as_batch(graph)
    logit, _ = _forward(params, config, batch)
    probs = expit(logit)
    if isinstance(graph, BipartiteGraph) and config.task == "feasibility":
        return float(probs[0])
    return probs


# --- losses -------------------------------------------------------------------------

def solution_weights(pool) -> np.ndarray:
    """Softmax of pool QoS values; pool items are (solution, qos) pairs or bare QoS values."""
    values = [item[1] if isinstance(item, (tuple, list)) else item for item in pool]
    if not values:
        raise ValueError("empty pool")
    v = np.asarray(values, dtype=float)
    e = np.exp(v - v.max())
    return e / e.sum()


def _z_of(item) -> np.ndarray:
    z = item[0] if isinstance(item, (tuple, list)) else item
    return np.asarray(getattr(z, "z", z), dtype=float)


def bias_target(pool, mode: str = "opt-m") -> np.ndarray:
    """Soft per-variable target: best solution (opt-b) or QoS-softmax mixture (opt-m).

    The pool-weighted cross-entropy equals the cross-entropy against this mixture
    because the loss is linear in the target.
    """
    if not pool:
        raise ValueError("empty pool")
    if mode == "opt-b":
        best = max(range(len(pool)), key=lambda k: (pool[k][1], -k))
        return _z_of(pool[best])
    if mode != "opt-m":
        raise ValueError(f"unknown bias loss mode {mode!r}")
    w = solution_weights(pool)
    return np.sum([wk * _z_of(item) for wk, item in zip(w, pool)], axis=0)


def _bce_terms(logit, y):
    # clamping p to [eps, 1-eps] is clamping the logit to +-LOGIT_CLAMP; the
    # softplus form keeps log(1-p) accurate for large logits
    s = np.clip(logit, -LOGIT_CLAMP, LOGIT_CLAMP)
    terms = y * np.logaddexp(0.0, -s) + (1 - y) * np.logaddexp(0.0, s)
    inside = np.abs(logit) < LOGIT_CLAMP
    return terms, np.where(inside, expit(logit) - y, 0.0)


def _targets_vector(config, batch, targets, mode):
    if mode not in LOSS_MODES:
        raise ValueError(f"mode must be one of {LOSS_MODES}")
    if (mode == "feas") != (config.task == "feasibility"):
        raise ValueError(f"loss mode {mode!r} does not fit a {config.task} model")
    if mode == "feas":
        y = np.asarray(targets, dtype=float).reshape(-1)
        if y.shape != (batch.n_graphs,):
            raise ValueError(f"need {batch.n_graphs} labels, got {y.size}")
        return y
    if len(targets) != batch.n_graphs:
        raise ValueError(f"need {batch.n_graphs} targets, got {len(targets)}")
    parts = []
    for k, tgt in enumerate(targets):
        if mode == "opt-m" and isinstance(tgt, (list, tuple)):
            tgt = bias_target(tgt, "opt-m")
        elif mode == "opt-b" and isinstance(tgt, (list, tuple)) and tgt and isinstance(tgt[0], (list, tuple)):
            tgt = bias_target(tgt, "opt-b")
        tgt = np.asarray(getattr(tgt, "z", tgt), dtype=float)
        if tgt.shape != (batch.binary_counts[k],):
            raise ValueError(f"target {k} has {tgt.size} entries, graph has {batch.binary_counts[k]}")
        parts.append(tgt)
    return np.concatenate(parts)


def _loss_and_dlogit(config, batch, logit, y):
    terms, d = _bce_terms(logit, y)
    if config.task == "feasibility":
        n = batch.n_graphs
        return float(terms.sum() / n), d / n
    # mean over each graph's variables, then over graphs
    scale = np.repeat(1.0 / (batch.binary_counts * batch.n_graphs), batch.binary_counts)
    return float((terms * scale).sum()), d * scale


def loss(params: ModelParams, config: SatGNNConfig, batch, targets, mode: str) -> float:
    """Mean BCE (feas, opt-b) or pool-weighted BCE (opt-m).

    ``targets`` holds one entry per graph: a 0/1 label (feas), a z vector
    (opt-b) or a list of (solution, qos) pairs (opt-m). Precomputed soft
    target vectors are accepted for either bias mode.
    """
    batch = _as_batch(batch)
    if batch.n_graphs == 1 and _is_single(targets, mode):
        targets = [targets]
    y = _targets_vector(config, batch, targets, mode)
    logit, _ = _forward(params, config, batch)
    return _loss_and_dlogit(config, batch, logit, y)[0]


def _is_single(targets, mode):
    # a lone target for a single-graph batch may be given unwrapped
    if mode == "opt-b":
        arr = getattr(targets, "z", targets)
        return isinstance(arr, np.ndarray) and arr.ndim == 1
    if mode == "opt-m":
        return bool(targets) and isinstance(targets[0], (tuple, list)) and not isinstance(targets[0][0], (tuple, list))
    return False


def loss_and_grad(params, config, batch, y: np.ndarray):
    """Loss and gradient for an already-resolved target vector ``y``."""
    logit, tape = _forward(params, config, batch)
    value, d = _loss_and_dlogit(config, batch, logit, y)
    return value, _backward(params, config, batch, tape, d)


# --- training -----------------------------------------------------------------------

class Adam:
    def __init__(self, params: ModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class Sample:
    """A graph with its target: a 0/1 label or a per-variable (soft) target."""

    graph: BipartiteGraph
    target: np.ndarray | float


def _stack_targets(config, samples: Sequence[Sample]) -> np.ndarray:
    if config.task == "feasibility":
        return np.array([float(s.target) for s in samples])
    return np.concatenate([np.asarray(s.target, dtype=float) for s in samples])


def _epoch_batches(samples, config, rng):
    order = rng.permutation(len(samples)) if rng is not None else np.arange(len(samples))
    for start in range(0, len(samples), config.batch_size):
        chunk = [samples[k] for k in order[start:start + config.batch_size]]
        batch = GraphBatch([s.graph for s in chunk], standardized=True)
        yield batch, _stack_targets(config, chunk), len(chunk)


def _prepared(samples: Sequence[Sample]) -> list[Sample]:
    return [Sample(standardize(s.graph), s.target) for s in samples]


def evaluate_loss(params, config, samples: Sequence[Sample], *, prepared: bool = False) -> float:
    samples = samples if prepared else _prepared(samples)
    total, count = 0.0, 0
    for batch, y, n in _epoch_batches(samples, config, None):
        logit, _ = _forward(params, config, batch)
        total += _loss_and_dlogit(config, batch, logit, y)[0] * n
        count += n
    return total / count


@dataclass
class History:
    rows: list[tuple[int, float, float]]

    def train_losses(self) -> list[float]:
        return [r[1] for r in self.rows]

    def val_losses(self) -> list[float]:
        return [r[2] for r in self.rows]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for epoch, tr, va in self.rows:
                writer.writerow([epoch, repr(tr), repr(va)])

    @classmethod
    def from_csv(cls, path) -> History:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            return cls([(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"])) for r in reader])


def train(config: SatGNNConfig, samples: Sequence[Sample], val_samples: Sequence[Sample] | None = None,
          params: ModelParams | None = None) -> tuple[ModelParams, History]:
    """Adam on mini-batches; returns the parameters with the best validation loss.

    Without a validation set the epoch's training loss is used for selection.
    Feasibility models stop early once the training loss drops below 1e-2.
    """
    if not samples:
        raise ValueError("empty training set")
    params = init_params(config) if params is None else {k: v.copy() for k, v in params.items()}
    check_params(params, config)
    train_set = _prepared(samples)
    val_set = _prepared(val_samples) if val_samples else None
    rng = np.random.default_rng([config.seed, 1])
    opt = Adam(params, config.learning_rate)
    best = ({k: v.copy() for k, v in params.items()}, math.inf)
    rows = []
    for epoch in range(1, config.max_epochs + 1):
        total = 0.0
        for batch, y, n in _epoch_batches(train_set, config, rng):
            value, grads = loss_and_grad(params, config, batch, y)
            if not math.isfinite(value):
                raise FloatingPointError(f"training diverged in epoch {epoch}: loss={value}")
            total += value * n
            opt.step(params, grads)
        train_loss = total / len(train_set)
        val_loss = evaluate_loss(params, config, val_set, prepared=True) if val_set else math.nan
        if not math.isfinite(train_loss) or (val_set and not math.isfinite(val_loss)):
            raise FloatingPointError(f"training diverged in epoch {epoch}: train={train_loss} val={val_loss}")
        rows.append((epoch, train_loss, val_loss))
        score = val_loss if val_set else train_loss
        if score < best[1]:
            best = ({k: v.copy() for k, v in params.items()}, score)
        log.debug("epoch %d train %.6f val %.6f", epoch, train_loss, val_loss)
        if config.task == "feasibility" and train_loss < FEASIBILITY_STOP_LOSS:
            break
    return best[0], History(rows)


def accuracy(params, config, samples: Sequence[Sample]) -> float:
    """Fraction of feasibility labels predicted correctly at threshold 0.5."""
    batch = GraphBatch([s.graph for s in samples])
    probs = forward(params, config, batch)
    labels = np.array([float(s.target) for s in samples])
    return float(np.mean((probs >= 0.5) == (labels >= 0.5)))


def grad_check(params: ModelParams, config: SatGNNConfig, sample: Sample, *, n_checks: int = 100,
               step: float = 1e-5, seed: int = 0) -> float:
    """Largest relative gap between analytic and central-difference gradients."""
    batch = GraphBatch([sample.graph])
    y = _stack_targets(config, [sample])
    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, grads = loss_and_grad(work, config, batch, y)
    slots = [(name, idx) for name, arr in work.items() for idx in np.ndindex(arr.shape)]
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(slots), size=min(n_checks, len(slots)), replace=False)
    worst = 0.0
    for k in picks:
        name, idx = slots[k]
        orig = work[name][idx]
        work[name][idx] = orig + step
        up = loss_and_grad(work, config, batch, y)[0]
        work[name][idx] = orig - step
        down = loss_and_grad(work, config, batch, y)[0]
        work[name][idx] = orig
        numeric = (up - down) / (2 * step)
        analytic = grads[name][idx]
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8))
    return worst


# --- persistence ---------------------------------------------------------------------

def save_model(path, config: SatGNNConfig, params: ModelParams) -> None:
    data = {
        "config": asdict(config),
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(data) + "\n")


def load_model(path) -> tuple[SatGNNConfig, ModelParams]:
    data = json.loads(Path(path).read_text())
    config = SatGNNConfig(**data["config"])
    params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in data["params"].items()}
    check_params(params, config)
    return config, params
