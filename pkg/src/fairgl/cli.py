"""Batch front-end: generation, fitting, clustering, evaluation, tuning
grids and experiment matrices with machine-readable outputs.

Exit codes: 0 success, 1 validation error, 2 numerical failure. Errors
print one line to stderr as ``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys

import numpy as np

from . import __version__
from .admm import FitConfig, fit
from .clustering import extract_communities
from .data import (Dataset, read_dataset_csv, read_groups_csv,
                   sample_covariance, write_dataset_csv, write_groups_csv)
from .errors import NumericalError, ValidationError
from .evaluation import (EvalReport, balance, bic_score, clustering_error,
                         pcee, tune_select)
from .fairness import build_group_matrix, polytope_from_groups
from .losses import LossModel
from .qsolver import QSolverConfig
from .synthetic import (GibbsConfig, generate_precision, generate_sbm,
                        ising_parameters, load_ground_truth, sample_gaussian,
                        sample_ising, save_ground_truth)

MATRIX_FMT = dict(fmt="%.12g", delimiter=",")


def _write_matrix(path, m):
    np.savetxt(path, np.asarray(m, dtype=float), **MATRIX_FMT)


def _read_matrix(path):
    return np.loadtxt(path, delimiter=",")


def _parse_zetas(text):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise ValidationError("zetas must be four comma-separated numbers")
    return tuple(parts)


def cmd_generate(args) -> int:
    gt = generate_sbm(args.p, args.k, args.h, _parse_zetas(args.zetas),
                      seed=args.seed)
    weight_range = (args.weight_min, args.weight_max)
    if args.kind == "continuous":
        theta = generate_precision(gt.adjacency, weight_range,
                                   seed=args.seed,
                                   mixed_signs=args.mixed_signs)
    else:
        theta = ising_parameters(gt.adjacency, weight_range, seed=args.seed,
                                 mixed_signs=args.mixed_signs)
    gt = type(gt)(adjacency=gt.adjacency, communities=gt.communities,
                  groups=gt.groups, seed=gt.seed, theta_true=theta,
                  meta=dict(gt.meta, n=args.n, kind=args.kind,
                            weight_range=[args.weight_min, args.weight_max]))
    if args.kind == "continuous":
        data = sample_gaussian(theta, args.n, seed=args.seed,
                               demographics=gt.groups)
    else:
        cfg = GibbsConfig(burn_in=args.burn_in, thin=args.thin)
        data = sample_ising(theta, args.n, cfg, seed=args.seed,
                            demographics=gt.groups)
    os.makedirs(args.out, exist_ok=True)
    save_ground_truth(gt, args.out)
    write_dataset_csv(data, os.path.join(args.out, "observations.csv"),
                      header=not args.no_header)
    write_groups_csv(gt.groups, os.path.join(args.out, "groups.csv"))
    print(json.dumps({"out": args.out, "p": args.p, "n": args.n,
                      "k": args.k, "h": args.h}))
    return 0


def _load_dataset(args) -> Dataset:
    groups = read_groups_csv(args.groups) if args.groups else None
    data = read_dataset_csv(args.data, kind=args.kind,
                            header=not args.no_header, demographics=groups)
    if args.center:
        data = data.centered()
    return data


def _fit_config(args, k=None) -> FitConfig:
    return FitConfig(
        rho1=args.rho1, rho2=args.rho2, gamma=args.gamma, nu=args.nu,
        max_outer_iter=args.max_iter, epsilon=args.epsilon, seed=args.seed,
        k=k if k is not None else args.k,
        q_cfg=QSolverConfig(max_iter=args.q_max_iter, tol=args.q_tol),
    )


def _run_fit(data, args, rho1=None, rho2=None, out_dir=None):
    rho1 = args.rho1 if rho1 is None else rho1
    rho2 = args.rho2 if rho2 is None else rho2
    model = LossModel(args.model, rho1=rho1, rho2=rho2)
    if data.demographics is not None and not args.no_fairness:
        poly = polytope_from_groups(data.demographics, args.epsilon)
    else:
        poly = polytope_from_groups(np.ones(data.p, dtype=int), args.epsilon)
    cfg = FitConfig(
        rho1=rho1, rho2=rho2, gamma=args.gamma, nu=args.nu,
        max_outer_iter=args.max_iter, epsilon=args.epsilon, seed=args.seed,
        k=args.k,
        q_cfg=QSolverConfig(max_iter=args.q_max_iter, tol=args.q_tol),
    )
    stream = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        stream = open(os.path.join(out_dir, "diagnostics.jsonl"), "w")

    def callback(rec):
        if stream is not None:
            stream.write(json.dumps(rec, sort_keys=True) + "\n")

    try:
        result = fit(model, data, poly, cfg, iter_callback=callback)
    finally:
        if stream is not None:
            stream.close()
    if out_dir is not None:
        _write_matrix(os.path.join(out_dir, "theta.csv"), result.theta.values)
        _write_matrix(os.path.join(out_dir, "q.csv"), result.q.values)
        np.savetxt(os.path.join(out_dir, "labels.csv"), result.labels,
                   fmt="%d", delimiter=",")
        with open(os.path.join(out_dir, "fit_meta.json"), "w") as fh:
            json.dump({"config": result.config, "converged": result.converged,
                       "iterations": len(result.diagnostics)},
                      fh, indent=2, sort_keys=True)
    return result


def cmd_fit(args) -> int:
    data = _load_dataset(args)
    result = _run_fit(data, args, out_dir=args.out)
    final = result.diagnostics[-1]
    print(json.dumps({"converged": result.converged,
                      "iterations": len(result.diagnostics),
                      "obj": final["obj"], "dq_rel": final["dq_rel"],
                      "dtheta_rel": final["dtheta_rel"]}, sort_keys=True))
    return 0


def cmd_cluster(args) -> int:
    q = _read_matrix(args.q)
    h = 1
    if args.groups:
        h = int(read_groups_csv(args.groups).max())
    labels = extract_communities(q, h, k=args.k, restarts=args.restarts,
                                 seed=args.seed)
    np.savetxt(args.out, labels.labels, fmt="%d", delimiter=",")
    print(json.dumps({"k": labels.k, "out": args.out}))
    return 0


def cmd_evaluate(args) -> int:
    truth = load_ground_truth(args.truth)
    theta = _read_matrix(os.path.join(args.fit, "theta.csv"))
    q = _read_matrix(os.path.join(args.fit, "q.csv"))
    labels = np.loadtxt(os.path.join(args.fit, "labels.csv"),
                        delimiter=",").astype(int)
    data = read_dataset_csv(os.path.join(args.truth, "observations.csv"),
                            kind=args.kind, header=not args.no_header,
                            demographics=truth.groups)
    r = build_group_matrix(truth.groups)
    report = EvalReport(
        ce=clustering_error(labels, truth.communities),
        pcee=pcee(theta, truth.theta_true),
        balance=balance(labels, truth.groups, r),
        bic=bic_score(theta, q, data),
    )
    with open(args.out, "w") as fh:
        fh.write(report.to_json() + "\n")
    print(report.to_json())
    return 0


def _grid(values):
    return [float(v) for v in values.split(",")]


def cmd_tune(args) -> int:
    data = _load_dataset(args)
    rows = []
    for rho1 in _grid(args.rho1_grid):
        for rho2 in _grid(args.rho2_grid):
            result = _run_fit(data, args, rho1=rho1, rho2=rho2)
            score = bic_score(result.theta.values, result.q.values, data)
            rows.append({"rho1": rho1, "rho2": rho2, "bic": score,
                         "converged": result.converged})
    os.makedirs(args.out, exist_ok=True)
    grid_path = os.path.join(args.out, "grid.csv")
    with open(grid_path, "w") as fh:
        fh.write("rho1,rho2,bic,converged\n")
        for row in rows:
            fh.write("%.12g,%.12g,%.12g,%d\n" % (
                row["rho1"], row["rho2"], row["bic"], row["converged"]))
    best_rho1, best_rho2 = tune_select(rows)
    with open(os.path.join(args.out, "best.json"), "w") as fh:
        json.dump({"rho1": best_rho1, "rho2": best_rho2}, fh, sort_keys=True)
    print(json.dumps({"rho1": best_rho1, "rho2": best_rho2}, sort_keys=True))
    return 0


def _experiment_cell(spec, seed, rho1, rho2, fair):
    gen = spec["generator"]
    zetas = tuple(gen.get("zetas", [0.1, 0.2, 0.3, 0.4]))
    gt = generate_sbm(gen["p"], gen["k"], gen["h"], zetas, seed=seed)
    kind = gen.get("kind", "continuous")
    weight_range = tuple(gen.get("weight_range", [0.1, 3.0]))
    if kind == "continuous":
        theta = generate_precision(gt.adjacency, weight_range, seed=seed,
                                   mixed_signs=gen.get("mixed_signs", False))
        data = sample_gaussian(theta, gen["n"], seed=seed,
                               demographics=gt.groups)
    else:
        theta = ising_parameters(gt.adjacency, weight_range, seed=seed,
                                 mixed_signs=gen.get("mixed_signs", False))
        data = sample_ising(theta, gen["n"],
                            GibbsConfig(**gen.get("gibbs", {})), seed=seed,
                            demographics=gt.groups)
    model = LossModel(spec["model"], rho1=rho1, rho2=rho2)
    groups = gt.groups if fair else np.ones(gen["p"], dtype=int)
    poly = polytope_from_groups(groups, spec.get("epsilon", 1e-3))
    cfg = FitConfig(rho1=rho1, rho2=rho2, gamma=spec.get("gamma", 0.01),
                    nu=spec.get("nu", 1e-5),
                    max_outer_iter=spec.get("max_outer_iter", 300),
                    epsilon=spec.get("epsilon", 1e-3), seed=seed,
                    k=spec.get("k"))
    result = fit(model, data, poly, cfg)
    r = build_group_matrix(gt.groups)
    report = EvalReport(
        ce=clustering_error(result.labels, gt.communities),
        pcee=pcee(result.theta.values, theta),
        balance=balance(result.labels, gt.groups, r),
        bic=bic_score(result.theta.values, result.q.values, data),
        extras={"converged": result.converged, "seed": seed,
                "rho1": rho1, "rho2": rho2, "fair": fair},
    )
    return report.to_dict()


def cmd_experiment(args) -> int:
    with open(args.config) as fh:
        spec = json.load(fh)
    if spec.get("schema_version", 1) != 1:
        raise ValidationError("unsupported experiment schema version")
    out_dir = args.out or spec["out_dir"]
    cells_dir = os.path.join(out_dir, "cells")
    os.makedirs(cells_dir, exist_ok=True)
    seeds = spec["seeds"]
    grid = [(r1, r2) for r1 in spec["grid"]["rho1"]
            for r2 in spec["grid"]["rho2"]]
    setups = spec.get("setups", ["fair", "nofair"])
    jobs = []
    for seed in seeds:
        for rho1, rho2 in grid:
            for setup in setups:
                name = f"seed{seed}_r1_{rho1:g}_r2_{rho2:g}_{setup}"
                path = os.path.join(cells_dir, name + ".json")
                if os.path.exists(path):
                    continue
                jobs.append((path, seed, rho1, rho2, setup == "fair"))
    workers = int(os.environ.get("FAIRGL_THREADS", "1"))
    if workers > 1 and jobs:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            futures = {
                pool.submit(_experiment_cell, spec, seed, r1, r2, fair):
                path for path, seed, r1, r2, fair in jobs
            }
            for fut, path in futures.items():
                _write_cell(path, fut.result())
    else:
        for path, seed, r1, r2, fair in jobs:
            _write_cell(path, _experiment_cell(spec, seed, r1, r2, fair))
    _aggregate(spec, out_dir, seeds, grid, setups, cells_dir)
    print(json.dumps({"out": out_dir, "cells": len(seeds) * len(grid) * len(setups)}))
    return 0


def _write_cell(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def _aggregate(spec, out_dir, seeds, grid, setups, cells_dir):
    rows = []
    for rho1, rho2 in grid:
        for setup in setups:
            metrics = {"ce": [], "pcee": [], "balance": [], "bic": []}
            for seed in seeds:
                name = f"seed{seed}_r1_{rho1:g}_r2_{rho2:g}_{setup}"
                with open(os.path.join(cells_dir, name + ".json")) as fh:
                    cell = json.load(fh)
                for key in metrics:
                    metrics[key].append(cell[key])
            row = {"rho1": rho1, "rho2": rho2, "setup": setup}
            for key, vals in metrics.items():
                arr = np.array(vals, dtype=float)
                row[f"{key}_median"] = float(np.median(arr))
                q75, q25 = np.percentile(arr, [75, 25])
                row[f"{key}_iqr"] = float(q75 - q25)
                row[f"{key}_mean"] = float(arr.mean())
                row[f"{key}_std"] = float(arr.std(ddof=1)) if len(vals) > 1 else 0.0
            rows.append(row)
    cols = list(rows[0].keys())
    with open(os.path.join(out_dir, "aggregate.csv"), "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(
                f"{row[c]:.12g}" if isinstance(row[c], float) else str(row[c])
                for c in cols) + "\n")
    with open(os.path.join(out_dir, "aggregate.json"), "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairgl",
        description="sparse graphical models with fair community structure",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic ground-truth directory")
    gen.add_argument("--p", type=int, required=True)
    gen.add_argument("--k", type=int, required=True)
    gen.add_argument("--h", type=int, required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--zetas", default="0.1,0.2,0.3,0.4")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--kind", choices=["continuous", "binary"],
                     default="continuous")
    gen.add_argument("--weight-min", type=float, default=0.1)
    gen.add_argument("--weight-max", type=float, default=3.0)
    gen.add_argument("--mixed-signs", action="store_true")
    gen.add_argument("--burn-in", type=int, default=1000)
    gen.add_argument("--thin", type=int, default=10)
    gen.add_argument("--no-header", action="store_true")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    def add_fit_args(p):
        p.add_argument("--data", required=True)
        p.add_argument("--groups")
        p.add_argument("--kind", choices=["continuous", "binary"],
                       default="continuous")
        p.add_argument("--no-header", action="store_true")
        p.add_argument("--center", action="store_true")
        p.add_argument("--model", choices=["fconcord", "fglasso", "fbn"],
                       default="fconcord")
        p.add_argument("--rho1", type=float, default=1.0)
        p.add_argument("--rho2", type=float, default=0.05)
        p.add_argument("--gamma", type=float, default=0.01)
        p.add_argument("--epsilon", type=float, default=1e-3)
        p.add_argument("--nu", type=float, default=1e-5)
        p.add_argument("--max-iter", type=int, default=300)
        p.add_argument("--q-max-iter", type=int, default=150)
        p.add_argument("--q-tol", type=float, default=1e-6)
        p.add_argument("--k", type=int)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-fairness", action="store_true")

    fit_p = sub.add_parser("fit", help="fit a model and write estimates")
    add_fit_args(fit_p)
    fit_p.add_argument("--out", required=True)
    fit_p.set_defaults(func=cmd_fit)

    clu = sub.add_parser("cluster", help="extract labels from a membership matrix")
    clu.add_argument("--q", required=True)
    clu.add_argument("--groups")
    clu.add_argument("--k", type=int)
    clu.add_argument("--restarts", type=int, default=20)
    clu.add_argument("--seed", type=int, default=0)
    clu.add_argument("--out", required=True)
    clu.set_defaults(func=cmd_cluster)

    ev = sub.add_parser("evaluate", help="score a fit against ground truth")
    ev.add_argument("--fit", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--kind", choices=["continuous", "binary"],
                    default="continuous")
    ev.add_argument("--no-header", action="store_true")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    tune = sub.add_parser("tune", help="grid search scored by the criterion")
    add_fit_args(tune)
    tune.add_argument("--rho1-grid", required=True)
    tune.add_argument("--rho2-grid", required=True)
    tune.add_argument("--out", required=True)
    tune.set_defaults(func=cmd_tune)

    exp = sub.add_parser("experiment", help="run a seeds x grid matrix")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out")
    exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
