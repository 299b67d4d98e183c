"""Command-line experiment runner.

Subcommands: ``run`` (one solve, trace + summary + clustering metrics),
``bench`` (seeded repetitions of all four variants, Table-style stats),
``sweep`` (grid over inner-loop budgets), ``check`` (finite-difference
validation of every gradient path).  Options come from a flat JSON config
fileandor flags; flags win.  ``RBLO_THREADS`` caps run-level concurrency.
"""

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bilevel import (
    SolverConfig,
    SolverError,
    VARIANTS,
    hypergradient,
    run_inner,
    solve,
    solve_multiview,
)
from .clustering import accuracy, ari, kmeans, nmi, pairwise_f1
from .dataio import (
    build_summary,
    fixture_dir,
    instance_from_dataset,
    load_3sources,
    synth_bilevel,
    write_summary,
    write_trace,
)
from .manifold import Rng, project, qr_factor, random_point
from .mvhsc import bilevel_problems, spectral_init

VARIANT_ORDER = ("bda", "bdag", "b3da", "fbda")
STAT_ORDER = ("time_s", "ul_dval", "acc", "nmi", "ari", "f1")
STAT_LABELS = {"time_s": "Time (s)", "ul_dval": "UL Dval", "acc": "ACC",
               "nmi": "NMI", "ari": "ARI", "f1": "F1"}
DEFAULT_K1_LIST = (10, 20)
DEFAULT_K2_LIST = (5, 10)
OUTER_DEFAULT = {"run": 200, "bench": 100, "sweep": 100, "check": 5}

DEFAULTS = {
    "variant": "fbda",
    "mu": 0.5,
    "k1": 20,
    "k2": 10,
    "s_u": 1.0,
    "s_l": 1.0,
    "lambda_outer": 0.1,
    "outer": None,
    "seed": 0,
    "runs": 10,
    "data": None,
    "synth": None,
    "out": "rblo_out",
    "knn": 4,
    "coupling": 1.0,
    "clusters": None,
    "restarts": 10,
    "init": None,
    "raw_counts": False,
    "bb_inverse": False,
    "k1_list": None,
    "k2_list": None,
    "corrupt_gradient": False,
}


# ---------------------------------------------------------------- plumbing ---

def parse_synth_spec(spec):
    """Parse 'mode:key=val,key=val' into (mode, kwargs)."""
    if not spec or not isinstance(spec, str):
        raise ValueError("empty synthetic problem spec")
    mode, sep, tail = spec.partition(":")
    mode = mode.strip()
    if not mode:
        raise ValueError(f"synthetic spec {spec!r} has no mode")
    kwargs = {}
    if sep and tail.strip():
        for token in tail.split(","):
            key, eq, raw = token.partition("=")
            if not eq or not key.strip():
                raise ValueError(f"synthetic spec field {token!r} needs key=value")
            raw = raw.strip()
            try:
                value = int(raw)
            except ValueError:
                try:
                    value = float(raw)
                except ValueError:
                    value = raw
            kwargs[key.strip()] = value
    return mode, kwargs


def _int_list(value, name):
    if value is None:
        return None
    if isinstance(value, str):
        tokens = [tok for tok in value.split(",") if tok.strip()]
        try:
            return [int(tok) for tok in tokens]
        except ValueError:
            raise ValueError(f"{name} must be comma-separated integers")
    return [int(v) for v in value]


def strip_timing(doc):
    """Drop timing fields from a parsed JSON document or a CSV text blob.

    Lets callers compare artifacts for bitwise reproducibility while
    ignoring wall-clock noise.
    """
    if isinstance(doc, str):
        lines = doc.splitlines()
        if not lines:
            return doc
        header = lines[0].split(",")
        keep = [i for i, name in enumerate(header) if "time" not in name]
        out = []
        for line in lines:
            cells = line.split(",")
            out.append(",".join(cells[i] for i in keep))
        return "\n".join(out) + "\n"
    if isinstance(doc, dict):
        return {k: strip_timing(v) for k, v in doc.items() if "time" not in k}
    if isinstance(doc, list):
        return [strip_timing(v) for v in doc]
    return doc


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="rblo",
        description="Riemannian bilevel descent aggregation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat JSON config file; flags override")
        p.add_argument("--variant", choices=VARIANT_ORDER)
        p.add_argument("--data", help="3sources-layout directory "
                                      "(default: bundled miniature)")
        p.add_argument("--synth", help="synthetic spec, e.g. "
                                       "grassmann_trace:n=20,k=3")
        p.add_argument("--outer", type=int)
        p.add_argument("--k1", type=int)
        p.add_argument("--k2", type=int)
        p.add_argument("--mu", type=float)
        p.add_argument("--lambda", dest="lambda_outer", type=float,
                       help="outer retraction stepsize")
        p.add_argument("--s-u", dest="s_u", type=float)
        p.add_argument("--s-l", dest="s_l", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--runs", type=int)
        p.add_argument("--knn", type=int)
        p.add_argument("--coupling", type=float,
                       help="view-coupling weight in the clustering objective")
        p.add_argument("--clusters", type=int)
        p.add_argument("--restarts", type=int, help="k-means restarts")
        p.add_argument("--init", choices=("spectral", "random"))
        p.add_argument("--raw-counts", dest="raw_counts",
                       action="store_const", const=True)
        p.add_argument("--bb-inverse", dest="bb_inverse",
                       action="store_const", const=True,
                       help="classical secant step ||dy||^2/<dy,dg> instead "
                            "of the raw curvature quotient")
        return p

    add_common(sub.add_parser("run", help="single solve with artifacts"))
    add_common(sub.add_parser("bench", help="seeded repetitions, all variants"))
    sweep = add_common(sub.add_parser("sweep", help="grid over (k1, k2)"))
    sweep.add_argument("--k1-list", dest="k1_list")
    sweep.add_argument("--k2-list", dest="k2_list")
    check = add_common(sub.add_parser("check", help="finite-difference oracle suite"))
    check.add_argument("--corrupt-gradient", dest="corrupt_gradient",
                       action="store_const", const=True,
                       help="negative-control hook: perturb one gradient")
    return parser


def load_config(args):
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        for key, value in file_cfg.items():
            key = "lambda_outer" if key == "lambda" else key
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            cfg[key] = value
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["outer"] is None:
        cfg["outer"] = OUTER_DEFAULT[args.command]
    if cfg["data"] and cfg["synth"]:
        raise ValueError("--data and --synth are mutually exclusive")
    cfg["k1_list"] = _int_list(cfg["k1_list"], "k1_list")
    cfg["k2_list"] = _int_list(cfg["k2_list"], "k2_list")
    return cfg


# -------------------------------------------------------------- experiment ---

@dataclass
class Experiment:
    cfg: dict
    labels: object = None
    instance: object = None
    synth: object = None

    def problems_for(self, variant):
        """Problems in the geometry the variant prescribes.

        The first variant flag selects whether inner and outer updates
        respect the manifold (project + retract) or run as plain ambient
        steps with values reported at normalized representatives.
        """
        if self.instance is None:
            return [self.synth.problem]
        geometry = "riemannian" if VARIANTS[variant][0] else "euclidean"
        return bilevel_problems(self.instance, manifold_mode=geometry)


def build_experiment(cfg):
    if cfg["synth"]:
        mode, kwargs = parse_synth_spec(cfg["synth"])
        synth = synth_bilevel(mode=mode, seed=cfg["seed"], **kwargs)
        return Experiment(cfg, synth=synth,
                          instance=synth.oracle.get("instance"))
    data_dir = cfg["data"] or fixture_dir()
    dataset = load_3sources(data_dir, raw_counts=cfg["raw_counts"])
    clusters = cfg["clusters"] or dataset.c
    instance = instance_from_dataset(dataset, k=clusters,
                                     lambda_coupling=cfg["coupling"],
                                     knn=cfg["knn"])
    cfg["data"] = str(data_dir)
    return Experiment(cfg, labels=dataset.labels, instance=instance)


def _default_init(exp):
    return "spectral" if exp.labels is not None else "random"


def initial_points(exp, seed, mode):
    rng = Rng(seed)
    inst = exp.instance
    if inst is not None:
        if mode == "spectral":
            x0 = spectral_init(inst)
            y0s = [spectral_init(inst, view=v) for v in inst.aux_views]
        else:
            x0 = random_point(inst.n, inst.k, rng)
            y0s = [random_point(inst.n, inst.k, rng) for _ in inst.aux_views]
        return x0, y0s
    n_y, n_x = exp.synth.oracle["a"].shape
    return rng.standard_normal((n_x, 1)), [rng.standard_normal((n_y, 1))]


def solver_config(cfg, variant, seed, k1=None, k2=None):
    return SolverConfig(variant=variant, mu=cfg["mu"],
                        k1=cfg["k1"] if k1 is None else k1,
                        k2=cfg["k2"] if k2 is None else k2,
                        s_u=cfg["s_u"], s_l=cfg["s_l"],
                        lambda_outer=cfg["lambda_outer"],
                        outer_iters=cfg["outer"], seed=seed,
                        bb_inverse=bool(cfg["bb_inverse"]))


def compute_metrics(exp, x, seed):
    if exp.labels is None:
        return {}
    points = np.asarray(getattr(x, "data", x), dtype=float)
    pred = kmeans(points, exp.labels.c, Rng(seed),
                  restarts=exp.cfg["restarts"])
    truth = exp.labels
    return {"acc": accuracy(pred, truth), "nmi": nmi(pred, truth),
            "ari": ari(pred, truth), "f1": pairwise_f1(pred, truth)}


def run_once(exp, variant, seed, init_mode, k1=None, k2=None):
    problems = exp.problems_for(variant)
    scfg = solver_config(exp.cfg, variant, seed, k1=k1, k2=k2)
    x0, y0s = initial_points(exp, seed, init_mode)
    if len(problems) == 1:
        x, _, trace = solve(problems[0], scfg, x0, y0s[0])
    else:
        x, _, trace = solve_multiview(problems, scfg, x0, y0s)
    x_arr = np.asarray(getattr(x, "data", x), dtype=float)
    if exp.instance is not None and not problems[0].riemannian:
        x_arr = qr_factor(x_arr)[0]  # subspace representative for clustering
    return x_arr, trace, compute_metrics(exp, x_arr, seed)


def _final_dval(trace):
    if not trace.outer:
        return None
    row = trace.outer[-1]
    return row["ul_dval"] if row["ul_dval"] is not None else row["ul_value"]


def _ensure_out(cfg):
    out = str(cfg["out"])
    os.makedirs(out, exist_ok=True)
    return out


def _thread_count():
    raw = os.environ.get("RBLO_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"RBLO_THREADS must be an integer, got {raw!r}")


def _map_jobs(fn, jobs):
    threads = _thread_count()
    if threads == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# ----------------------------------------------------------------- command ---

def cmd_run(cfg):
    exp = build_experiment(cfg)
    out = _ensure_out(cfg)
    init_mode = cfg["init"] or _default_init(exp)
    try:
        x, trace, metrics = run_once(exp, cfg["variant"], cfg["seed"], init_mode)
    except SolverError as err:
        summary = None
        if err.trace is not None:
            write_trace(err.trace, os.path.join(out, "trace.csv"))
            summary = build_summary(err.trace)
        else:
            summary = {"schema": "rblo-run-summary", "version": 1,
                       "final": None, "metrics": {}}
        summary["error"] = str(err)
        summary["experiment"] = cfg
        write_summary(summary, os.path.join(out, "summary.json"))
        print(f"solver failure at outer={err.outer_idx} inner={err.inner_idx}: "
              f"{err}", file=sys.stderr)
        return 1
    write_trace(trace, os.path.join(out, "trace.csv"))
    summary = build_summary(trace, metrics=metrics)
    summary["experiment"] = cfg
    write_summary(summary, os.path.join(out, "summary.json"))
    dval = _final_dval(trace)
    dval_txt = "n/a" if dval is None else format(dval, ".6g")
    print(f"run complete: variant={cfg['variant']} seed={cfg['seed']} "
          f"outer={cfg['outer']} final_ul_dval={dval_txt} "
          f"out={out}")
    return 0


def _nanstats(values):
    if not values:
        return float("nan"), float("nan")
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def cmd_bench(cfg):
    exp = build_experiment(cfg)
    out = _ensure_out(cfg)
    init_mode = cfg["init"] or "random"
    runs = int(cfg["runs"])
    jobs = [(variant, r) for variant in VARIANT_ORDER for r in range(runs)]

    def job(spec):
        variant, r = spec
        seed = cfg["seed"] + r
        try:
            x, trace, metrics = run_once(exp, variant, seed, init_mode)
        except SolverError as err:
            return {"variant": variant, "run": r, "seed": seed,
                    "error": str(err)}
        row = {"variant": variant, "run": r, "seed": seed,
               "time_s": trace.wall_time_s, "ul_dval": _final_dval(trace)}
        row.update(metrics)
        if r == 0:
            write_trace(trace, os.path.join(out, f"trace_{variant}.csv"))
        return row

    results = _map_jobs(job, jobs)
    rows = [r for r in results if "error" not in r]
    failures = [r for r in results if "error" in r]

    table = {}
    for variant in VARIANT_ORDER:
        table[variant] = {}
        mine = [r for r in rows if r["variant"] == variant]
        for stat in STAT_ORDER:
            mean, std = _nanstats([r[stat] for r in mine if stat in r
                                   and r[stat] is not None])
            table[variant][stat] = {"mean": mean, "std": std}

    header = ["variant"] + [f"{s}_{m}" for s in STAT_ORDER
                            for m in ("mean", "std")]
    csv_lines = [",".join(header)]
    for variant in VARIANT_ORDER:
        cells = [variant]
        for stat in STAT_ORDER:
            cells.append(format(table[variant][stat]["mean"], ".17g"))
            cells.append(format(table[variant][stat]["std"], ".17g"))
        csv_lines.append(",".join(cells))
    with open(os.path.join(out, "bench.csv"), "w") as fh:
        fh.write("\n".join(csv_lines) + "\n")

    width = 24
    text_lines = ["variant " + "".join(STAT_LABELS[s].ljust(width)
                                       for s in STAT_ORDER)]
    for variant in VARIANT_ORDER:
        cells = []
        for stat in STAT_ORDER:
            entry = table[variant][stat]
            cells.append(f"{entry['mean']:.4g} +/- {entry['std']:.4g}".ljust(width))
        text_lines.append(variant.ljust(8) + "".join(cells))
    text = "\n".join(text_lines) + "\n"
    with open(os.path.join(out, "bench.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")

    report = {"schema": "rblo-bench", "version": 1, "base_seed": cfg["seed"],
              "experiment": cfg, "runs": rows, "failures": failures,
              "table": table}
    with open(os.path.join(out, "bench.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if failures:
        print(f"bench finished with {len(failures)} failed runs "
              f"out of {len(jobs)}; results are partial", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(cfg):
    exp = build_experiment(cfg)
    out = _ensure_out(cfg)
    init_mode = cfg["init"] or _default_init(exp)
    k1s = cfg["k1_list"] or list(DEFAULT_K1_LIST)
    k2s = cfg["k2_list"] or list(DEFAULT_K2_LIST)
    cells, failures = [], []
    for k1 in k1s:
        for k2 in k2s:
            try:
                x, trace, metrics = run_once(exp, cfg["variant"], cfg["seed"],
                                             init_mode, k1=k1, k2=k2)
            except SolverError as err:
                failures.append({"k1": k1, "k2": k2, "error": str(err)})
                continue
            name = f"sweep_k1_{k1}_k2_{k2}.csv"
            write_trace(trace, os.path.join(out, name))
            cell = {"k1": k1, "k2": k2, "seed": cfg["seed"], "trace": name,
                    "final_ul_dval": _final_dval(trace),
                    "time_s": trace.wall_time_s}
            cell.update({f"final_{k}": v for k, v in metrics.items()})
            cells.append(cell)
    report = {"schema": "rblo-sweep", "version": 1, "experiment": cfg,
              "cells": cells, "failures": failures}
    with open(os.path.join(out, "sweep.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"sweep complete: {len(cells)} cells, {len(failures)} failures, "
          f"out={out}")
    return 1 if failures else 0


# ------------------------------------------------------------------- check ---

def _rel_err(approx, exact):
    scale = max(1.0, float(np.linalg.norm(np.atleast_1d(exact))))
    return float(np.linalg.norm(np.atleast_1d(approx - exact))) / scale


def _run_checks(seed, mu, corrupt=False):
    synth = synth_bilevel(mode="grassmann_trace", n=8, k=2, seed=seed)
    problem = synth.problem
    if corrupt:
        clean = problem.egrad_y_ll
        problem.egrad_y_ll = lambda x, y: clean(x, y) + 1e-3 * np.ones_like(y)
    rng = Rng(seed + 7)
    x = np.asarray(random_point(8, 2, rng).data)
    y = np.asarray(random_point(8, 2, rng).data)
    h = 1e-6
    results = []

    def directional(value_fn, grad, base):
        worst = 0.0
        for _ in range(3):
            xi = project(base, rng.standard_normal(base.shape))
            plus = qr_factor(base + h * xi)[0]
            minus = qr_factor(base - h * xi)[0]
            fd = (value_fn(plus) - value_fn(minus)) / (2.0 * h)
            worst = max(worst, abs(fd - float(np.sum(grad * xi)))
                        / max(1.0, abs(float(np.sum(grad * xi)))))
        return worst

    g_ll = project(y, problem.egrad_y_ll(x, y))
    results.append(("ll_grad_y",
                    directional(lambda yy: problem.ll_value(x, yy), g_ll, y),
                    1e-6))
    g_ul = project(x, problem.egrad_x_ul(x, y))
    results.append(("ul_grad_x",
                    directional(lambda xx: problem.ul_value(xx, y), g_ul, x),
                    1e-6))

    def hvp_err(egrad, hvp):
        worst = 0.0
        for _ in range(3):
            v = rng.standard_normal(y.shape)
            fd = (egrad(x, y + h * v) - egrad(x, y - h * v)) / (2.0 * h)
            worst = max(worst, _rel_err(fd, hvp(x, y, v)))
        return worst

    results.append(("hvp_yy_ll",
                    hvp_err(problem.egrad_y_ll, problem.hvp_yy_ll), 1e-4))
    results.append(("hvp_yy_ul",
                    hvp_err(problem.egrad_y_ul, problem.hvp_yy_ul), 1e-4))

    worst = 0.0
    for _ in range(3):
        v = rng.standard_normal(y.shape)
        u = rng.standard_normal(x.shape)
        analytic = float(np.sum(problem.hvp_xy_ul(x, y, v) * u))
        fd = (float(np.sum(problem.egrad_y_ul(x + h * u, y) * v))
              - float(np.sum(problem.egrad_y_ul(x - h * u, y) * v))) / (2.0 * h)
        worst = max(worst, abs(fd - analytic) / max(1.0, abs(analytic)))
    results.append(("hvp_xy", worst, 1e-4))

    steps = [(0.05, 0.06), (0.04, 0.06), (0.03, 0.05)]
    scfg = SolverConfig(variant="fbda", mu=mu, k1=0, k2=len(steps),
                        outer_iters=1, seed=seed)

    def phi(xt):
        traj = run_inner(problem, xt, y, scfg, fixed_steps=steps)
        return problem.ul_value(xt, traj.ys[-1])

    base_traj = run_inner(problem, x, y, scfg, fixed_steps=steps)
    hg = np.asarray(hypergradient(problem, x, base_traj).data)
    t = 1e-5
    worst = 0.0
    for _ in range(3):
        xi = project(x, rng.standard_normal(x.shape))
        fd = (phi(qr_factor(x + t * xi)[0])
              - phi(qr_factor(x - t * xi)[0])) / (2.0 * t)
        ip = float(np.sum(hg * xi))
        worst = max(worst, abs(fd - ip) / max(1.0, abs(ip)))
    results.append(("hypergradient", worst, 1e-3))

    xi = project(y, rng.standard_normal(y.shape))
    scale = 1e-3

    def retract_gap(tt):
        return float(np.linalg.norm(qr_factor(y + tt * xi)[0] - (y + tt * xi)))

    ratio = retract_gap(scale / 2.0) / retract_gap(scale)
    results.append(("retraction_order", abs(ratio - 0.25), 1e-1))
    return results


def cmd_check(cfg):
    results = _run_checks(cfg["seed"], cfg["mu"],
                          corrupt=bool(cfg["corrupt_gradient"]))
    print(f"{'check':<18} {'max rel err':>12} {'tol':>9} status")
    failed = 0
    rows = []
    for name, err, tol in results:
        ok = err <= tol
        failed += 0 if ok else 1
        status = "PASS" if ok else "FAIL"
        print(f"{name:<18} {err:12.3e} {tol:9.0e} {status}")
        rows.append({"check": name, "max_rel_err": err, "tol": tol,
                     "status": status})
    out = _ensure_out(cfg)
    report = {"schema": "rblo-check", "version": 1, "experiment": cfg,
              "results": rows, "failed": failed}
    with open(os.path.join(out, "check.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 1 if failed else 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "check":
            return cmd_check(cfg)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    parser.error("unknown command")


if __name__ == "__main__":
    sys.exit(main())
