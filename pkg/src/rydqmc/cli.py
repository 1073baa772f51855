"""Command-line entry points: run, sweep, analyze, fit, collapse, lgw, oracle.

Chains are scheduled over a process pool (one chain per (grid point, seed)
task, nothing mutable shared); per-task failures are reported but do not
take down the remaining points.  All outputs are plain files: JSON-lines
sample series, CSV summaries/histograms/phase maps, JSON fit results.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import sys
import traceback
from pathlib import Path

import numpy as np

from rydqmc import engine, lgw, runio, scaling
from rydqmc.lattice import Boundary, LatticeSpec, build_interactions
from rydqmc.observables import bimodality, binder_from_moments, histogram
from rydqmc.oracle import build_hamiltonian, thermal_expectations


def _point_label(overrides: dict) -> str:
    if not overrides:
        return "point"
    return "_".join(f"{k}{v:g}" for k, v in sorted(overrides.items()))


def _run_chain(task) -> tuple:
    """Worker body: run one chain, write its outputs, return its summary row."""
    cfg_dict, overrides, seed, out_dir = task
    try:
        cfg = runio.RunConfig.from_dict(cfg_dict)
        spec = cfg.spec(overrides)
        params = cfg.params(seed, overrides)
        run_dir = Path(out_dir) / f"{_point_label(overrides)}_seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)

        def checkpoint_cb(sweep_idx, config, rng_state):
            runio.save_checkpoint(
                run_dir / "checkpoint.json", cfg.as_dict(), params, config, rng_state, sweep_idx
            )

        series, _ = engine.run(
            spec,
            params,
            schedule=cfg.schedule(),
            checkpoint_cb=checkpoint_cb,
            checkpoint_every=int(cfg.engine.get("checkpoint_every", 0)),
        )
        runio.write_series_jsonl(run_dir / "samples.jsonl", series)
        row = dict(sorted(overrides.items()))
        row.update(runio.summarize_series(series, binder_bins=int(cfg.analysis.get("binder_bins", 20))))
        return ("ok", overrides, seed, row)
    except Exception as exc:  # isolate per-task failures
        return ("error", overrides, seed, f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}")


def _schedule_tasks(cfg: runio.RunConfig, out_dir: str, seeds, workers: int):
    tasks = [
        (cfg.as_dict(), overrides, seed, out_dir) for overrides in cfg.points() for seed in seeds
    ]
    for _, overrides, seed, _ in tasks:
        cfg.validate_point(seed, overrides)  # fail before launching anything
    if workers > 1 and len(tasks) > 1:
        with multiprocessing.get_context("spawn").Pool(workers) as pool:
            results = pool.map(_run_chain, tasks)
    else:
        results = [_run_chain(t) for t in tasks]
    return results


def _aggregate(results, out_dir: Path):
    ok_rows = []
    failures = []
    for status, overrides, seed, payload in results:
        if status == "ok":
            ok_rows.append(payload)
        else:
            failures.append((overrides, seed, payload))
    if ok_rows:
        runio.write_summary_csv(out_dir / "summary.csv", ok_rows)
        # aggregate over seeds per grid point
        keyed: dict[tuple, list[dict]] = {}
        for row in ok_rows:
            key = tuple((k, row[k]) for k in sorted(row) if k in runio.SWEEPABLE)
            keyed.setdefault(key, []).append(row)
        agg_rows = []
        for key, rows in sorted(keyed.items()):
            agg = {k: v for k, v in key}
            agg["n_seeds"] = len(rows)
            for col in rows[0]:
                if col.endswith("_mean") or col.startswith("U4_"):
                    if col.endswith("_err") or col.endswith("_tau"):
                        continue
                    vals = np.array([r[col] for r in rows if col in r])
                    if len(vals) == 0:
                        continue
                    agg[col] = float(vals.mean())
                    if len(vals) > 1:
                        agg[f"{col}_seed_err"] = float(vals.std(ddof=1) / np.sqrt(len(vals)))
                    else:
                        err_col = col.replace("_mean", "_err") if col.endswith("_mean") else f"{col}_err"
                        agg[f"{col}_seed_err"] = float(rows[0].get(err_col, 0.0))
            agg_rows.append(agg)
        runio.write_summary_csv(out_dir / "aggregate.csv", agg_rows)
    for overrides, seed, msg in failures:
        print(f"FAILED point={overrides} seed={seed}: {msg}", file=sys.stderr)
    return len(failures)


def cmd_run(args) -> int:
    cfg = runio.RunConfig.load(args.config)
    out_dir = Path(args.out or cfg.output["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = list(range(args.seeds)) if args.seeds else [int(s) for s in cfg.engine["seeds"]]

    if args.resume:
        doc = runio.load_checkpoint(args.resume)
        config = runio.configuration_from_checkpoint(doc)
        seed = int(doc["params"]["rng_seed"])
        params = cfg.params(seed)
        if doc["params"]["Rb"] != params.Rb or doc["params"]["T"] != params.T:
            raise runio.ConfigError("checkpoint physics does not match the supplied config")
        series, _ = engine.run(
            cfg.spec(),
            params,
            initial_config=config,
            rng_state=np.array(doc["rng_state"], dtype=np.uint64),
            start_measurement_sweep=int(doc["completed_measurement_sweep"]),
        )
        run_dir = out_dir / f"point_seed{seed}_resumed"
        run_dir.mkdir(parents=True, exist_ok=True)
        runio.write_series_jsonl(run_dir / "samples.jsonl", series)
        runio.write_summary_csv(run_dir / "summary.csv", [runio.summarize_series(series)])
        print(f"resumed {len(series)} samples into {run_dir}", file=sys.stderr)
        return 0

    results = _schedule_tasks(cfg, str(out_dir), seeds, args.workers)
    failures = _aggregate(results, out_dir)
    return 1 if failures else 0


def cmd_sweep(args) -> int:
    cfg = runio.RunConfig.load(args.config)
    if not cfg.sweep:
        print("config has no sweep axes; nothing to scan", file=sys.stderr)
        return 1
    out_dir = Path(args.out or cfg.output["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = list(range(args.seeds)) if args.seeds else [int(s) for s in cfg.engine["seeds"]]
    results = _schedule_tasks(cfg, str(out_dir), seeds, args.workers)
    failures = _aggregate(results, out_dir)
    return 1 if failures else 0


def cmd_analyze(args) -> int:
    series_dir = Path(args.series)
    files = sorted(series_dir.glob("**/samples.jsonl"))
    if not files:
        print(f"no samples.jsonl files under {series_dir}", file=sys.stderr)
        return 1
    out_dir = Path(args.out or series_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = []
    pooled_density = []
    for path in files:
        cols = runio.read_series_jsonl(path)
        entry = {"file": str(path), "n_samples": int(len(cols["sweep_index"]))}
        for order in ("checkerboard", "striated", "star", "boundary"):
            f2 = cols.get(f"F2_{order}")
            f4 = cols.get(f"F4_{order}")
            if f2 is None or f4 is None or len(f2) < 2:
                continue
            try:
                u4, err = binder_from_moments(f2, f4, n_bins=args.binder_bins)
            except ZeroDivisionError:
                continue
            entry[f"U4_{order}"] = u4
            entry[f"U4_{order}_err"] = err
        if "density" in cols:
            pooled_density.extend(cols["density"].tolist())
            entry["density_mean"] = float(np.mean(cols["density"]))
        report.append(entry)
    counts, edges = histogram(pooled_density, args.bins)
    runio.write_histogram_csv(out_dir / "density_histogram.csv", counts, edges)
    is_bimodal, dip = bimodality(counts, dip_threshold=args.dip_threshold)
    doc = {
        "series": report,
        "pooled_samples": len(pooled_density),
        "density_bimodal": bool(is_bimodal),
        "density_dip_score": dip,
    }
    with open(out_dir / "analysis.json", "w") as fh:
        json.dump(doc, fh, indent=2)
    print(json.dumps({"bimodal": bool(is_bimodal), "dip_score": dip}))
    return 0


def cmd_fit(args) -> int:
    data = scaling.ScalingDataset.from_csv(args.csv, kind=args.kind)
    if args.kind == "binder":
        result = scaling.fit_binder(data, K=args.K, L_min=args.L_min, bootstrap=args.bootstrap)
    else:
        if args.gc is None or args.nu is None:
            print("order fits need --gc and --nu from a previous binder fit", file=sys.stderr)
            return 2
        result = scaling.fit_order(
            data, args.gc, args.nu, K=args.K, L_min=args.L_min, bootstrap=args.bootstrap
        )
    text = json.dumps(result.as_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_collapse(args) -> int:
    data = scaling.ScalingDataset.from_csv(args.csv, kind=args.kind)
    score = scaling.collapse_score(data, args.gc, args.nu, args.beta)
    print(json.dumps({"score": score, "g_c": args.gc, "nu": args.nu, "beta": args.beta}))
    return 0


def cmd_lgw(args) -> int:
    couplings = lgw.LgwCouplings(r=0.0, s=0.0, g=args.g, u1=args.u1, u2=args.u2, v=args.v, w=args.w)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    diagram = lgw.phase_diagram(
        couplings, (args.rmin, args.rmax), (args.smin, args.smax), args.grid
    )
    edges = diagram.boundary_edges()
    first_order_cells = set()
    second_order_cells = set()
    for e in edges:
        target = first_order_cells if e["first_order"] else second_order_cells
        target.update(e["cells"])
    with open(out_dir / "phase_map.csv", "w") as fh:
        fh.write("r,s,phase_label,psi1,psi2,phi,V,order_flag\n")
        for a, r in enumerate(diagram.r_values):
            for b, s in enumerate(diagram.s_values):
                flag = 2 if (a, b) in first_order_cells else (1 if (a, b) in second_order_cells else 0)
                f1, f2, ph = (float(x) for x in diagram.fields[a, b])
                fh.write(
                    f"{float(r)!r},{float(s)!r},{lgw.PHASE_NAMES[int(diagram.labels[a, b])]},"
                    f"{f1!r},{f2!r},{ph!r},{float(diagram.potentials[a, b])!r},{flag}\n"
                )
    t1, t2 = lgw.tricritical_points(couplings)
    with open(out_dir / "tricritical.json", "w") as fh:
        json.dump({"T1": {"r": t1[0], "s": t1[1]}, "T2": {"r": t2[0], "s": t2[1]}}, fh, indent=2)
    print(f"phase map {args.grid}x{args.grid} written to {out_dir}")
    return 0


def cmd_oracle(args) -> int:
    spec = LatticeSpec(Lx=args.Lx, Ly=args.Ly, boundary=Boundary(args.boundary))
    table = build_interactions(spec, args.Rb, args.R0, allow_half_cutoff=args.allow_half_cutoff)
    H = build_hamiltonian(spec, table, args.delta)
    values = thermal_expectations(H, 1.0 / args.T, spec)
    out = Path(args.out) if args.out else None
    lines = ["observable,value"]
    for key in sorted(values):
        lines.append(f"{key},{values[key]!r}")
    text = "\n".join(lines) + "\n"
    if out:
        out.write_text(text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydqmc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run chains for one config (optionally with sweep axes)")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seeds", type=int, default=None, help="use seeds 0..N-1 instead of the config list")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--resume", default=None, help="checkpoint file to resume from")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="scan the sweep axes of a config over a worker pool")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--seeds", type=int, default=None)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_an = sub.add_parser("analyze", help="Binder ratios, histograms, bimodality of stored series")
    p_an.add_argument("--series", required=True)
    p_an.add_argument("--out", default=None)
    p_an.add_argument("--bins", type=int, default=24)
    p_an.add_argument("--binder-bins", type=int, default=20)
    p_an.add_argument("--dip-threshold", type=float, default=0.2)
    p_an.set_defaults(fn=cmd_analyze)

    p_fit = sub.add_parser("fit", help="finite-size-scaling fit of a (L, g, y, y_err) CSV")
    p_fit.add_argument("--csv", required=True)
    p_fit.add_argument("--kind", choices=("binder", "order"), default="binder")
    p_fit.add_argument("--K", type=int, default=scaling.DEFAULT_K)
    p_fit.add_argument("--L-min", type=int, default=None)
    p_fit.add_argument("--gc", type=float, default=None)
    p_fit.add_argument("--nu", type=float, default=None)
    p_fit.add_argument("--bootstrap", type=int, default=0)
    p_fit.add_argument("--out", default=None)
    p_fit.set_defaults(fn=cmd_fit)

    p_col = sub.add_parser("collapse", help="score a universal collapse at given exponents")
    p_col.add_argument("--csv", required=True)
    p_col.add_argument("--kind", choices=("binder", "order"), default="order")
    p_col.add_argument("--gc", type=float, required=True)
    p_col.add_argument("--nu", type=float, required=True)
    p_col.add_argument("--beta", type=float, default=None)
    p_col.set_defaults(fn=cmd_collapse)

    p_lgw = sub.add_parser("lgw", help="mean-field phase map and tricritical points")
    p_lgw.add_argument("--g", type=float, required=True)
    p_lgw.add_argument("--u1", type=float, required=True)
    p_lgw.add_argument("--u2", type=float, required=True)
    p_lgw.add_argument("--v", type=float, required=True)
    p_lgw.add_argument("--w", type=float, required=True)
    p_lgw.add_argument("--rmin", type=float, default=-0.2)
    p_lgw.add_argument("--rmax", type=float, default=0.6)
    p_lgw.add_argument("--smin", type=float, default=-0.4)
    p_lgw.add_argument("--smax", type=float, default=0.4)
    p_lgw.add_argument("--grid", type=int, default=200)
    p_lgw.add_argument("--out", required=True)
    p_lgw.set_defaults(fn=cmd_lgw)

    p_or = sub.add_parser("oracle", help="dense-diagonalization golden values for a small lattice")
    p_or.add_argument("--Lx", type=int, required=True)
    p_or.add_argument("--Ly", type=int, required=True)
    p_or.add_argument("--boundary", choices=("PBC", "OBC"), default="OBC")
    p_or.add_argument("--Rb", type=float, required=True)
    p_or.add_argument("--R0", type=float, default=4.0)
    p_or.add_argument("--delta", type=float, required=True)
    p_or.add_argument("--T", type=float, required=True)
    p_or.add_argument("--allow-half-cutoff", action="store_true")
    p_or.add_argument("--out", default=None)
    p_or.set_defaults(fn=cmd_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
