"""Command-line interface: ``motif``, ``propagate``, ``train``, ``eval`` and ``sweep``.

Every subcommand prints one JSON document on stdout.  Exit status is 0 on
success, 1 for invalid input (bad flags, config values or files) and 2 for
failures while computing.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .exceptions import MpprError
from .graph import dump_matrix, load_edges, load_graph, to_adjacency
from .motifs import MotifId, all_motif_adjacencies, blend, motif_adjacency
from .metrics import accuracy
from .neural import forward, load_checkpoint, save_checkpoint
from .tasks import (aggregate, build_operator, link_metrics, prepare_features, prepare_graph,
                    run_experiment, split_edges, split_nodes, train_graph)

log = logging.getLogger("mppr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# --------------------------------------------------------------------------- commands

def cmd_motif(args):
    g = load_edges(args.edges)
    A = to_adjacency(g)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.motif == "all":
        mats = all_motif_adjacencies(A)
    else:
        m = MotifId.parse(args.motif)
        mats = {m: motif_adjacency(A, m)}
    records = []
    for m, ma in mats.items():
        path = out / f"motif_m{m.value}.txt"
        dump_matrix(ma.matrix, path)
        W = ma.matrix
        rec = {"motif": f"m{m.value}", "path": str(path), "nnz": int(W.nnz),
               "total": float(W.sum()), "symmetric": bool(abs(W - W.T).sum() == 0)}
        if args.tau is not None:
            theta = blend(A, ma, args.tau)
            tpath = out / f"theta_m{m.value}_tau{args.tau:g}.txt"
            dump_matrix(theta.matrix, tpath)
            rec["theta_path"] = str(tpath)
        records.append(rec)
    _emit({"n": g.n, "edges": len(g.edges), "motifs": records})


def _config_from(args, **extra):
    overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
    overrides.update(extra)
    return load_config(args.config, **overrides)


def cmd_propagate(args):
    cfg = _config_from(args)
    g = load_edges(cfg.edges or args.edges)
    bundle = build_operator(to_adjacency(g), cfg)
    op = bundle.operator
    M = op.materialized
    result = {"n": g.n, "config_hash": cfg.config_hash(), "solver": op.base.solver,
              "threshold": op.base.threshold, "seconds": bundle.seconds,
              "row_sum_mean": float(np.asarray(M.sum(axis=1)).mean())}
    if args.save_operator:
        dump_matrix(M, args.save_operator)
        result["operator_path"] = args.save_operator
    if args.input:
        H = np.atleast_2d(np.loadtxt(args.input, delimiter=",", dtype=float))
        Z = op @ H
        np.savetxt(args.output, Z, delimiter=",", fmt="%.17g")
        result["output_path"] = args.output
    _emit(result)


def _load(cfg):
    if not cfg.edges or not cfg.features:
        raise UsageError("--edges and --features are required (flag or config file)")
    if cfg.task == "nc" and not cfg.labels:
        raise UsageError("node classification needs --labels")
    return load_graph(cfg.edges, cfg.features, cfg.labels)


def _write_reports(cfg, reports, out_dir):
    summary = aggregate(reports, cfg.config_hash())
    summary["config"] = cfg.to_dict()
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "runs.jsonl", "w", encoding="utf-8") as fh:
            for rep in reports:
                rec = rep.to_record()
                rec["config"] = cfg.with_overrides(seed=rep.seed, runs=1).to_dict()
                fh.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")
        (out / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True, default=_jsonable), encoding="utf-8")
    return summary


def cmd_train(args):
    cfg = _config_from(args)
    g = _load(cfg)
    results = run_experiment(g, cfg, return_models=True)
    reports = [rep for _, rep in results]
    summary = _write_reports(cfg, reports, cfg.out_dir)
    if cfg.checkpoint:
        hyper = cfg.with_overrides(seed=reports[0].seed, runs=1).to_dict()
        save_checkpoint(cfg.checkpoint, results[0][0], None, hyper)
        summary["checkpoint"] = cfg.checkpoint
    _emit(summary)


def cmd_eval(args):
    model, _, hyper = load_checkpoint(args.checkpoint)
    hyper = {k: v for k, v in hyper.items() if k in _CONFIG_FIELDS}
    base = ExperimentConfig(**hyper) if hyper else load_config(args.config)
    overrides = {k: getattr(args, k, None) for k in ("edges", "features", "labels")}
    cfg = base.with_overrides(**overrides)
    g = prepare_graph(_load(cfg), cfg)
    X = prepare_features(g.features, cfg)
    dtype = np.dtype(cfg.dtype).type
    model.W0, model.W1 = model.W0.astype(dtype), model.W1.astype(dtype)
    use_op = cfg.ablation in ("predict", "train_predict")
    result = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "task": cfg.task}
    if cfg.task == "nc":
        split = split_nodes(g.labels, cfg.n_train_per_class, cfg.n_val, cfg.seed)
        M = build_operator(to_adjacency(g), cfg).operator.materialized if use_op else None
        Z = forward(model, X, None if M is None else M.astype(dtype), "eval").Z
        result["metrics"] = {"test_accuracy": accuracy(Z, g.labels, split.test),
                             "val_accuracy": accuracy(Z, g.labels, split.val)}
    else:
        es = split_edges(g, cfg.edge_ratios, cfg.seed)
        M = build_operator(to_adjacency(train_graph(g, es)), cfg).operator.materialized \
            if use_op else None
        Z = forward(model, X, None if M is None else M.astype(dtype), "eval").Z
        result["metrics"] = link_metrics(Z, es.test, es.test_neg)
    _emit(result)


def cmd_sweep(args):
    cfg = _config_from(args)
    g = _load(cfg)
    taus = args.taus or [cfg.tau]
    betas = args.betas or [cfg.beta]
    records = []
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for tau, beta in itertools.product(taus, betas):
        point = cfg.with_overrides(tau=tau, beta=beta)
        reports = run_experiment(g, point)
        rec = aggregate(reports, point.config_hash())
        rec.update({"tau": tau, "beta": beta, "config": point.to_dict()})
        records.append(rec)
        log.info("tau=%g beta=%g -> %s", tau, beta, rec["config_hash"])
    if out:
        with open(out / "sweep.jsonl", "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True, default=_jsonable) + "\n")
    _emit({"records": records})


# --------------------------------------------------------------------------- parser

_CONFIG_FIELDS = set(ExperimentConfig.__dataclass_fields__)
_OVERRIDES = ("task", "edges", "features", "labels", "motif", "tau", "alpha", "beta", "solver",
              "edge_adjacency", "tol", "max_terms", "hidden", "out_dim", "dropout", "l2", "lr", "max_epochs",
              "epochs", "patience", "n_train_per_class", "n_val", "batch_size", "ablation", "seed", "runs", "workers",
              "out_dir", "checkpoint", "dtype")


def _add_data(p):
    p.add_argument("--edges", help="edge list (u v per line, optional '# n=' header)")
    p.add_argument("--features", help="feature CSV, one row per node")
    p.add_argument("--labels", help="label file, one integer per line")


def _add_operator(p):
    p.add_argument("--motif", help="m1..m7 or 'none'")
    p.add_argument("--tau", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--solver", choices=["auto", "direct", "neumann", "sparse"])
    p.add_argument("--edge-adjacency", dest="edge_adjacency", choices=["symmetric", "directed"])
    p.add_argument("--tol", type=float, help="Neumann truncation tolerance")
    p.add_argument("--max-terms", dest="max_terms", type=int, help="Neumann term cap")


def _add_training(p):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--task", choices=["nc", "lp", "node-classification", "link-prediction"])
    p.add_argument("--hidden", type=int)
    p.add_argument("--out-dim", dest="out_dim", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--epochs", type=int, help="link prediction epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--train-per-class", dest="n_train_per_class", type=int)
    p.add_argument("--n-val", dest="n_val", type=int, help="validation nodes")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--ablation", choices=["none", "train", "predict", "train_predict"])
    p.add_argument("--dtype", choices=["float32", "float64"])
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", dest="out_dir")


def build_parser():
    parser = _Parser(prog="mppr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("motif", help="compute motif adjacency matrices")
    p.add_argument("--edges", required=True)
    p.add_argument("--motif", default="all", help="m1..m7 or 'all'")
    p.add_argument("--tau", type=float, help="also dump the blend with the edge adjacency")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_motif)

    p = sub.add_parser("propagate", help="build the propagation operator")
    p.add_argument("--edges", required=True)
    p.add_argument("--config")
    _add_operator(p)
    p.add_argument("--save-operator", help="dump the operator matrix here")
    p.add_argument("--input", help="CSV matrix H to propagate")
    p.add_argument("--output", default="propagated.csv", help="where to write op @ H")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("train", help="train and evaluate over several seeded runs")
    _add_data(p)
    _add_operator(p)
    _add_training(p)
    p.add_argument("--checkpoint", help="save the first run's model here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    _add_data(p)
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid over tau and beta")
    _add_data(p)
    _add_operator(p)
    _add_training(p)
    p.add_argument("--taus", type=_floats, help="comma-separated tau values")
    p.add_argument("--betas", type=_floats, help="comma-separated beta values")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (UsageError, ValueError, LookupError, OSError) as exc:
        # MpprError validation subclasses derive from ValueError
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (MpprError, RuntimeError, ArithmeticError, MemoryError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
