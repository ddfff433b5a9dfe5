"""Command-line interface: ``onts <verb> ...``.

Exit codes: 0 ok, 1 infeasible, 2 bad input, 3 limit hit.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from .generate import DEFAULT_SUNLIT_FRACTION, random_instance
from .gnn import SatGNNConfig, forward, load_model, save_model, train
from .graph import encode_bipartite
from .heuristics import MODES, default_n, run_heuristic
from .milp import LPParseError, build_standard_form, export_lp, lp_text
from .model import CandidateSolution, Instance, check_feasibility, qos
from .solver import SolutionPool, SolveOptions, read_pool_csv, solve_bb, write_pool_csv

log = logging.getLogger("onts")

EXIT_OK, EXIT_INFEASIBLE, EXIT_BAD_INPUT, EXIT_LIMIT = 0, 1, 2, 3


class BadInput(Exception):
    pass


def read_partial(path) -> dict[int, int]:
    """CSV with header ``index,value``; indices are 0-based positions in z."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["index", "value"]:
            raise BadInput(f"{path}: expected header index,value")
        out = {}
        for row in reader:
            k, v = int(row["index"]), int(row["value"])
            if v not in (0, 1) or k < 0:
                raise BadInput(f"{path}: bad entry {k},{v}")
            out[k] = v
        return out


def write_partial(partial: dict[int, int], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "value"])
        for k in sorted(partial):
            writer.writerow([k, partial[k]])


def read_solution(path, inst: Instance) -> CandidateSolution:
    """A ``j,t,x,phi`` solution file, or the best entry of a pool file."""
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("#"):
        pool = read_pool_csv(path, inst)
        if not pool.solutions:
            raise BadInput(f"{path}: empty pool")
        return pool.solutions[0][0]
    return CandidateSolution.from_csv(path, inst.J, inst.T)


def gantt(inst: Instance, z: CandidateSolution) -> str:
    width = len(str(inst.J))
    lines = [" " * (width + 4) + "".join(str((t + 1) % 10) for t in range(inst.T))]
    for j in range(inst.J):
        row = "".join("█" if v else "·" for v in z.x[j])
        lines.append(f"j{j + 1:<{width}} | {row}")
    return "\n".join(lines)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _status_code(pool: SolutionPool) -> int:
    if pool.status == "infeasible":
        return EXIT_INFEASIBLE
    if pool.status in ("limit", "feasible"):
        return EXIT_LIMIT
    return EXIT_OK


def _report_pool(pool: SolutionPool, out) -> int:
    if out:
        write_pool_csv(pool, out)
    summary = f"status={pool.status} solutions={len(pool.solutions)} nodes={pool.nodes_explored}"
    if pool.solutions:
        summary += f" best_qos={pool.best_qos:.10g}"
    if pool.diagnostic:
        summary += f" ({pool.diagnostic})"
    log.log(logging.WARNING if pool.status == "infeasible" else logging.INFO, summary)
    if not out:
        print(summary)
    return _status_code(pool)


# --- verbs ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    inst = random_instance(args.J, args.T, args.seed, sunlit_fraction=args.sunlit)
    _emit(inst.to_json(), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = Instance.load(args.instance)
    kw = dict(pool_size=args.pool, time_limit=args.time_limit, node_limit=args.node_limit)
    if args.fix:
        kw["fixings"] = read_partial(args.fix)
    if args.trust:
        kw["trust_center"] = read_partial(args.trust)
        kw["delta"] = args.delta
    elif args.delta is not None and args.delta != 0:
        raise BadInput("--delta needs --trust")
    if args.warm:
        kw["warm_hint"] = read_partial(args.warm)
    if any(k >= inst.n_binary for part in ("fixings", "trust_center", "warm_hint") for k in kw.get(part, {})):
        raise BadInput(f"partial assignment index out of range (2JT = {inst.n_binary})")
    pool = solve_bb(inst, SolveOptions(**kw))
    return _report_pool(pool, args.out)


def cmd_check(args) -> int:
    inst = Instance.load(args.instance)
    z = read_solution(args.solution, inst)
    report = check_feasibility(inst, z)
    lines = [f"feasible={report.feasible} qos={qos(inst, z.x):.10g} violations={len(report.violations)}"]
    for v in report.violations:
        lines.append(f"{v.family} j={v.j} t={v.t} lhs={v.lhs:.10g} bound={v.bound:.10g}")
    _emit("\n".join(lines), args.out)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_export_lp(args) -> int:
    inst = Instance.load(args.instance)
    sf = build_standard_form(inst)
    if args.out:
        export_lp(sf, args.out)
    else:
        sys.stdout.write(lp_text(sf))
    return EXIT_OK


def cmd_encode(args) -> int:
    inst = Instance.load(args.instance)
    cand = read_solution(args.candidate, inst) if args.candidate else None
    graph = encode_bipartite(build_standard_form(inst), cand)
    _emit(json.dumps(graph.to_dict()), args.out)
    return EXIT_OK


def cmd_dataset(args) -> int:
    try:
        root = ds.generate_dataset(
            args.J, args.T, args.n, args.seed, args.out or "dataset", pool_size=args.pool,
            time_limit=args.time_limit, n_random=args.n_random, n_neighbor=args.n_neighbor, eta=args.eta,
        )
    except ds.DatasetError as exc:
        log.error("%s", exc)
        return EXIT_LIMIT
    log.info("wrote %s", root)
    return EXIT_OK


def cmd_augment(args) -> int:
    inst = Instance.load(args.instance)
    pool = read_pool_csv(args.pool, inst)
    if args.eta is not None and args.eta < 1:
        raise BadInput("--eta must be at least 1")
    cands = ds.augment_candidates(inst, pool.solutions, args.n_random, args.n_neighbor, args.eta, seed=args.seed)
    out = args.out or "candidates.csv"
    ds.write_candidates_csv(cands, out)
    log.info("%d candidates, %d feasible", len(cands), sum(c.label for c in cands))
    return EXIT_OK


def cmd_train(args) -> int:
    records = [r for path in args.datasets for r in ds.load_dataset(path)]
    if not records:
        raise BadInput("no instances in the given datasets")
    if args.task == "feasibility":
        samples = [s for r in records for s in ds.feasibility_samples(r.instance, r.candidates)]
        base = SatGNNConfig.feasibility_default()
    else:
        samples = ds.bias_samples(records, args.loss)
        base = SatGNNConfig.bias_default()
    overrides = {k: v for k, v in dict(
        d=args.d, L=args.L, conv_kind=args.conv, aggregation=args.agg, learning_rate=args.lr,
        max_epochs=args.epochs, batch_size=args.batch_size, share_conv_params=args.share,
    ).items() if v is not None}
    config = replace(base, **overrides, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(samples))
    n_val = int(round(args.val_fraction * len(samples)))
    val = [samples[k] for k in order[:n_val]]
    tr = [samples[k] for k in order[n_val:]] or val
    params, history = train(config, tr, val or None)
    out = args.out or "model.json"
    save_model(out, config, params)
    if args.history:
        history.to_csv(args.history)
    last = history.rows[-1] if history.rows else (0, math.nan, math.nan)
    log.info("trained %d epochs, train %.4g val %.4g -> %s", last[0], last[1], last[2], out)
    return EXIT_OK


def cmd_predict(args) -> int:
    inst = Instance.load(args.instance)
    config, params = load_model(args.model)
    cand = None
    if config.task == "feasibility":
        if not args.candidate:
            raise BadInput("a feasibility model needs --candidate")
        cand = read_solution(args.candidate, inst)
    graph = encode_bipartite(build_standard_form(inst), cand)
    out = forward(params, config, graph)
    if config.task == "feasibility":
        _emit(f"p_feasible={out:.10g}", args.out)
    else:
        _emit("index,prob\n" + "\n".join(f"{k},{p:.10g}" for k, p in enumerate(out)), args.out)
    return EXIT_OK


def cmd_heur(args) -> int:
    inst = Instance.load(args.instance)
    config, params = load_model(args.model)
    if config.task != "bias":
        raise BadInput("heuristics need a bias-task model")
    n = default_n(inst) if args.n is None else args.n
    if not 0 <= n <= inst.n_binary:
        raise BadInput(f"--n must lie in [0, {inst.n_binary}]")
    pool = run_heuristic(inst, (config, params), args.mode, n, args.delta,
                         pool_size=args.pool, time_limit=args.time_limit)
    return _report_pool(pool, args.out)


def cmd_gantt(args) -> int:
    inst = Instance.load(args.instance)
    z = read_solution(args.solution, inst)
    _emit(gantt(inst, z), args.out)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--out", default=None, help="output path (stdout if omitted, where sensible)")
    common.add_argument("--quiet", action="store_true", help="only report errors")

    parser = argparse.ArgumentParser(prog="onts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def verb(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    p = verb("gen", cmd_gen, "draw a random instance")
    p.add_argument("--jobs", "--J", dest="J", type=int, required=True)
    p.add_argument("--horizon", "--T", dest="T", type=int, required=True)
    p.add_argument("--sunlit", type=float, default=DEFAULT_SUNLIT_FRACTION)

    p = verb("solve", cmd_solve, "exact branch-and-bound with a solution pool")
    p.add_argument("instance")
    p.add_argument("--pool", type=int, default=1)
    p.add_argument("--time-limit", type=float, default=math.inf)
    p.add_argument("--node-limit", type=int, default=10_000_000)
    p.add_argument("--fix")
    p.add_argument("--trust")
    p.add_argument("--delta", type=int, default=0)
    p.add_argument("--warm")

    p = verb("check", cmd_check, "list the constraint rows a schedule violates")
    p.add_argument("instance")
    p.add_argument("solution")

    p = verb("export-lp", cmd_export_lp, "write the model in LP format")
    p.add_argument("instance")

    p = verb("encode", cmd_encode, "bipartite graph as JSON")
    p.add_argument("instance")
    p.add_argument("--candidate")

    p = verb("dataset", cmd_dataset, "generate instances, pools and candidates")
    p.add_argument("--jobs", "--J", dest="J", type=int, required=True)
    p.add_argument("--horizon", "--T", dest="T", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--pool", type=int, default=ds.DEFAULT_POOL_SIZE)
    p.add_argument("--time-limit", type=float, default=ds.DEFAULT_TIME_LIMIT)
    p.add_argument("--n-random", type=int, default=50)
    p.add_argument("--n-neighbor", type=int, default=50)
    p.add_argument("--eta", type=int, default=None)

    p = verb("augment", cmd_augment, "label random and near-pool candidates")
    p.add_argument("instance")
    p.add_argument("pool")
    p.add_argument("--n-random", type=int, default=50)
    p.add_argument("--n-neighbor", type=int, default=50)
    p.add_argument("--eta", type=int, default=None)

    p = verb("train", cmd_train, "train a SatGNN model on dataset directories")
    p.add_argument("datasets", nargs="+")
    p.add_argument("--task", choices=("feasibility", "bias"), default="bias")
    p.add_argument("--loss", choices=("opt-b", "opt-m"), default="opt-m")
    p.add_argument("--d", type=int)
    p.add_argument("--L", type=int)
    p.add_argument("--conv", choices=("gcn", "sage"))
    p.add_argument("--agg", choices=("mean", "max", "sum"))
    p.add_argument("--share", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--history", help="write epoch,train_loss,val_loss CSV here")

    p = verb("predict", cmd_predict, "run a trained model on an instance")
    p.add_argument("instance")
    p.add_argument("model")
    p.add_argument("--candidate")

    p = verb("heur", cmd_heur, "warm-start, early-fix or trust-region heuristic")
    p.add_argument("instance")
    p.add_argument("model")
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--delta", type=int, default=1)
    p.add_argument("--pool", type=int, default=1)
    p.add_argument("--time-limit", type=float, default=math.inf)

    p = verb("gantt", cmd_gantt, "text Gantt chart of a schedule")
    p.add_argument("instance")
    p.add_argument("solution")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_BAD_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", force=True)
    try:
        return args.func(args)
    except (BadInput, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError, LPParseError) as exc:
        log.error("%s", exc)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
