"""Command line front end: ``echelon {run,report,shap,search,noise-sweep}``.

Exit codes: 0 success, 1 invalid input or nothing to do, 2 partial success
(some runs failed and were skipped).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, validate
from .core import FEATURE_NAMES
from .evaluate import PRESETS, score_table, stat_report
from .experiment import (TREE_KINDS, checkpoint_path, load_runs, load_tree_checkpoint, run_job,
                         run_name, save_tree_checkpoint, tune, validation_windows)
from .gbt.shap import tree_shap_matrix
from .metrics import metrics_csv, run_metrics
from .search import run_search
from .simulator import LAYERS
from .svg import Line, bar_chart, hbar_chart, line_chart

log = logging.getLogger("echelon")

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2


def parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    return seeds


def seed_offset() -> int:
    raw = os.environ.get("ECHELON_SEED_OFFSET", "0").strip() or "0"
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"ECHELON_SEED_OFFSET must be an integer, got {raw!r}") from None


def build_config(args) -> ExperimentConfig:
    exp = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "models", None):
        exp.models = [m.strip() for m in args.models.split(",") if m.strip()]
    if getattr(args, "seeds", None):
        try:
            exp.seeds = parse_seeds(args.seeds)
        except ValueError:
            raise ConfigError(f"--seeds: cannot parse {args.seeds!r}") from None
    if getattr(args, "noise", None):
        try:
            exp.noise_levels = [float(v) for v in args.noise.split(",")]
        except ValueError:
            raise ConfigError(f"--noise: cannot parse {args.noise!r}") from None
    if getattr(args, "weights", None):
        exp.weights = args.weights
    if getattr(args, "out", None):
        exp.out = args.out
    if getattr(args, "trials", None) is not None:
        exp.search_trials = args.trials
    offset = seed_offset()
    exp.seeds = [s + offset for s in exp.seeds]
    return validate(exp)


def _job(args):
    kind, params, seed, exp = args
    try:
        return run_job(kind, params, seed, exp), None
    except Exception as exc:  # reported and skipped; the run is treated as missing
        return None, f"{kind} seed {seed}: {type(exc).__name__}: {exc}"


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            yield from pool.map(fn, items)
    else:
        yield from map(fn, items)


def cmd_run(args) -> int:
    exp = build_config(args)
    out = Path(exp.out)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    params = {}
    for kind in exp.models:
        params[kind] = exp.params_for(kind)
        res = tune(exp, kind, args.jobs)
        if res is not None:
            (out / "search").mkdir(exist_ok=True)
            (out / "search" / f"{kind}.json").write_text(json.dumps(
                {"best_trial": res.best_trial, "best_params": res.best_params,
                 "best_objective": res.best_objective, "log": res.log}, indent=2, sort_keys=True))
            params[kind] = {**res.best_params, **params[kind]}
    items = [(kind, params[kind], seed, exp) for kind in exp.models for seed in exp.seeds]
    failures = []
    written = 0
    for job, err in _map(_job, items, args.jobs):
        if err:
            log.error("%s", err)
            failures.append(err)
            continue
        for run in job.runs:
            run.save(out / "runs" / f"{run_name(job.kind, job.seed, run.noise)}.json")
            written += 1
        if job.kind in TREE_KINDS:
            for layer, model in zip(LAYERS, job.models):
                path = checkpoint_path(out, job.kind, job.seed, layer)
                path.parent.mkdir(exist_ok=True)
                save_tree_checkpoint(path, model)
    print(f"wrote {written} run files to {out / 'runs'}")
    if failures:
        print(f"{len(failures)} job(s) failed:", *failures, sep="\n  ", file=sys.stderr)
        return EXIT_PARTIAL if written else EXIT_INVALID
    return EXIT_OK


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _summary(values) -> tuple[float, float, float, float, int]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std()), float(v.min()), float(v.max()), len(v)


def cmd_report(args) -> int:
    exp = build_config(args)
    src = Path(args.results)
    runs = load_runs(src)
    if not runs:
        print(f"no run files found under {src}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(args.out) if args.out else src / "report"
    out.mkdir(parents=True, exist_ok=True)
    cfg = exp.chain_config()
    rows = [m for run in runs for m in run_metrics(run, cfg)]
    (out / "metrics.csv").write_text(metrics_csv(rows))

    groups = defaultdict(list)
    for r in rows:
        groups[(r.model, r.noise, r.layer)].append(r.cum_profit)
    _write_csv(out / "summary.csv", ["model", "noise", "layer", "mean", "std", "min", "max", "n"],
               [[m, repr(n), l, *(repr(x) for x in _summary(v)[:4]), len(v)]
                for (m, n, l), v in sorted(groups.items())])

    clean = [r for r in runs if r.noise == 0]
    models = sorted({r.model for r in clean})
    for layer in LAYERS:
        lines = []
        for m in models:
            curves = np.array([r.validation(layer, "profit").cumsum() for r in clean if r.model == m])
            mean = curves.mean(axis=0)
            if len(curves) > 1:
                sd = curves.std(axis=0)
                lines.append(Line(m, list(mean), list(mean - sd), list(mean + sd)))
            else:
                lines.append(Line(m, list(mean)))
        (out / f"cum_profit_layer{layer}.svg").write_text(line_chart(
            lines, f"Cumulative validation profit, layer {layer}", "day", "profit",
            x0_value=clean[0].train_days if clean else 0))

    clean_rows = [r for r in rows if r.noise == 0]
    bw = {m: [float(np.mean([r.bullwhip_cumulative for r in clean_rows
                             if r.model == m and r.layer == l])) for l in LAYERS] for m in models}
    _write_csv(out / "bullwhip.csv", ["model", "layer", "bullwhip_cumulative"],
               [[m, l, repr(bw[m][l - 1])] for m in models for l in LAYERS])
    (out / "bullwhip.svg").write_text(bar_chart([f"layer {l}" for l in LAYERS], bw,
                                                "Cumulative bullwhip ratio by layer", "Var(O)/Var(D0)"))

    for preset, weights in PRESETS.items():
        table = score_table(clean_rows, weights)
        _write_csv(out / f"scores_{preset}.csv",
                   ["model", "seed", "score_layer1", "score_layer2", "score_layer3", "total"],
                   [[t.model, t.seed, *(repr(s) for s in t.layer_scores), repr(t.total)]
                    for t in sorted(table, key=lambda t: (t.model, t.seed))])
        by_model = defaultdict(list)
        for t in sorted(table, key=lambda t: (t.model, t.seed)):
            by_model[t.model].append(t.total)
        usable = {m: v for m, v in by_model.items() if len(v) >= 2}
        if len(usable) >= 2:
            rep = stat_report(usable)
            (out / f"stats_{preset}.json").write_text(rep.to_json())
            (out / f"stats_{preset}.txt").write_text(rep.to_text())
    print(f"report written to {out}")
    return EXIT_OK


def _pearson(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def cmd_shap(args) -> int:
    kind = args.model.upper()
    if kind not in TREE_KINDS:
        print(f"SHAP needs a tree model (GBT or HYBRID), got {kind}; use permutation importance "
              "(echelon.gbt.permutation_importance) for other models", file=sys.stderr)
        return EXIT_INVALID
    src = Path(args.results)
    out = Path(args.out) if args.out else src / "shap"
    runs = {(r.model, r.seed): r for r in load_runs(src) if r.noise == 0}
    seeds = parse_seeds(args.seeds) if args.seeds else sorted(s for m, s in runs if m == kind)[:1]
    layers = [args.layer] if args.layer else list(LAYERS)
    found = False
    for seed in seeds:
        for layer in layers:
            ck = checkpoint_path(src, kind, seed, layer)
            run = runs.get((kind, seed))
            if not ck.exists() or run is None:
                continue
            found = True
            out.mkdir(parents=True, exist_ok=True)
            model = load_tree_checkpoint(ck)
            X, ends = validation_windows(run, layer, model.x_scaler, stride=args.stride)
            Z = model.design(X)
            bg = model.background[::max(1, len(model.background) // args.background)]
            ens = model.ensembles[0]
            phi, base = tree_shap_matrix(ens, Z, bg)
            names = model.names()
            mean_abs = np.abs(phi).mean(axis=0)
            order = sorted(range(len(names)), key=lambda j: (-mean_abs[j], j))
            rank = {j: r + 1 for r, j in enumerate(order)}
            tag = f"{kind}_seed{seed}_layer{layer}"
            _write_csv(out / f"shap_{tag}.csv", ["feature", "mean_phi", "mean_abs_phi", "rank"],
                       [[names[j], repr(float(phi[:, j].mean())), repr(float(mean_abs[j])), rank[j]]
                        for j in range(len(names))])
            top = order[:args.top]
            (out / f"shap_{tag}.svg").write_text(hbar_chart(
                [names[j] for j in top], [float(mean_abs[j]) for j in top],
                f"Mean |SHAP|, {kind} layer {layer} (day-1 ensemble)", "mean |phi| (scaled demand)"))
            pred = ens.predict(Z)
            _write_csv(out / f"shap_rows_{tag}.csv",
                       ["day", "base_value", "sum_phi", "prediction", "lnn_margin"],
                       [[int(d), repr(float(base)), repr(float(p.sum())), repr(float(y)), repr(float(mg))]
                        for d, p, y, mg in zip(ends, phi, pred, model.margin(X, 0))])
            raw = X[:, -1, :]
            _write_csv(out / f"shap_corr_{tag}.csv", ["feature", "corr_value_vs_phi"],
                       [[FEATURE_NAMES[j], repr(_pearson(raw[:, j], phi[:, j]))]
                        for j in range(len(FEATURE_NAMES))])
            _write_csv(out / f"feature_corr_{tag}.csv", ["feature", *FEATURE_NAMES],
                       [[FEATURE_NAMES[i], *(repr(_pearson(raw[:, i], raw[:, j]))
                                             for j in range(len(FEATURE_NAMES)))]
                        for i in range(len(FEATURE_NAMES))])
    if not found:
        print(f"no {kind} checkpoints with matching runs under {src} (run `echelon run` first)",
              file=sys.stderr)
        return EXIT_INVALID
    print(f"SHAP artifacts written to {out}")
    return EXIT_OK


def cmd_search(args) -> int:
    exp = build_config(args)
    out = Path(exp.out) / "search"
    out.mkdir(parents=True, exist_ok=True)
    trials = exp.search_trials or 10
    for kind in exp.models:
        for seed in exp.seeds:
            res = run_search(kind, trials, seed, exp.chain_config(), exp.demand_spec(seed),
                             jobs=args.jobs)
            (out / f"{kind}_seed{seed}.json").write_text(json.dumps(
                {"best_trial": res.best_trial, "best_params": res.best_params,
                 "best_objective": res.best_objective, "log": res.log}, indent=2, sort_keys=True))
            print(f"{kind} seed {seed}: best trial {res.best_trial} objective {res.best_objective:.2f}")
    return EXIT_OK


def cmd_noise_sweep(args) -> int:
    exp = build_config(args)
    out = Path(exp.out)
    out.mkdir(parents=True, exist_ok=True)
    items = [(kind, exp.params_for(kind), seed, exp) for kind in exp.models for seed in exp.seeds]
    rows, failures = [], []
    for job, err in _map(_job, items, args.jobs):
        if err:
            failures.append(err)
            continue
        clean = None
        for run in job.runs:
            profits = [float(run.validation(l, "profit").sum()) for l in LAYERS]
            total = sum(profits)
            if run.noise == 0:
                clean = total
            ratio = total / clean if clean else float("nan")
            rows.append([job.kind, job.seed, repr(run.noise), *(repr(p) for p in profits),
                         repr(total), repr(ratio)])
    if not rows:
        print("noise sweep produced no results", *failures, sep="\n", file=sys.stderr)
        return EXIT_INVALID
    _write_csv(out / "noise_sweep.csv",
               ["model", "seed", "noise", "profit_layer1", "profit_layer2", "profit_layer3",
                "total", "ratio_vs_clean"], rows)
    lines = []
    for kind in exp.models:
        means = [float(np.mean([float(r[6]) for r in rows if r[0] == kind and float(r[2]) == n]))
                 for n in exp.noise_levels if any(r[0] == kind and float(r[2]) == n for r in rows)]
        if means:
            lines.append(Line(kind, means))
    (out / "noise_sweep.svg").write_text(line_chart(
        lines, "Total validation profit vs noise level (index order)", "noise level index", "profit"))
    if failures:
        print(*failures, sep="\n", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="echelon", description="Multi-tier supply-chain ordering lab")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, results=False):
        if results:
            sp.add_argument("results", help="results directory written by `echelon run`")
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seeds", help="e.g. 42-51 or 42,45")
        sp.add_argument("--models", help="comma-separated model kinds")
        sp.add_argument("--noise", help="comma-separated noise levels")
        sp.add_argument("--weights", choices=sorted(PRESETS))
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    sp = sub.add_parser("run", help="fit and simulate every (model, seed, noise)")
    common(sp)
    sp.add_argument("--trials", type=int, default=None, help="search trials before running")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="metrics, plots, scores and statistics")
    common(sp, results=True)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("shap", help="TreeSHAP artifacts for GBT or HYBRID checkpoints")
    sp.add_argument("results")
    sp.add_argument("--model", default="HYBRID")
    sp.add_argument("--layer", type=int, choices=LAYERS)
    sp.add_argument("--seeds")
    sp.add_argument("--out")
    sp.add_argument("--stride", type=int, default=7, help="explain every n-th validation day")
    sp.add_argument("--background", type=int, default=100, help="background rows")
    sp.add_argument("--top", type=int, default=15, help="bars in the plot")
    sp.set_defaults(func=cmd_shap)

    sp = sub.add_parser("search", help="random hyperparameter search")
    common(sp)
    sp.add_argument("--trials", type=int, default=None)
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("noise-sweep", help="profit under validation demand noise")
    common(sp)
    sp.set_defaults(func=cmd_noise_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration:\n{exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
