"""Command-line front door: grid tables, dataset generation, analysis, sweeps.

Verbs: ``grid``, ``simulate``, ``analyze``, ``sweep-depolarizing``.  All
computation happens before any file is written, grid points may be spread
over worker processes, and a fixed seed gives byte-identical outputs no
matter the worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import multiprocessing
import sys
from pathlib import Path

import numpy as np

from . import analysis, io, plots
from .analysis import PointEstimate, pipeline_once, process_point, violation_verdict
from .core import GridPoint, noncontextual_bound, quantum_bound, theory_params
from .equiv import average_mixture_weight
from .errors import (
    BootstrapError,
    ConfigError,
    ConstraintError,
    ConvergenceError,
    IllConditionedError,
    InfeasibleError,
    SingularTransformError,
)
from .io import RunConfig, fmt
from .sim import CountTable, simulate_point

SLICE_ALPHAS = (0.0, 0.3, 0.785, 1.2)
SLICE_WINDOW = 0.05  # capture the nearest grid line for off-grid requests

PIPELINE_ERRORS = (
    BootstrapError,
    ConstraintError,
    ConvergenceError,
    IllConditionedError,
    InfeasibleError,
    SingularTransformError,
    np.linalg.LinAlgError,
)


def _parse_points(text: str) -> tuple[tuple[float, float], ...]:
    """``"0.6:0.3,1.0:0.4"`` -> ((0.6, 0.3), (1.0, 0.4))."""
    points = []
    for chunk in text.split(","):
        parts = chunk.split(":")
        if len(parts) != 2:
            raise ConfigError(f"point {chunk!r} is not of the form theta:alpha")
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ConfigError(f"point {chunk!r}: {exc}") from exc
    return tuple(points)


def _resolve_config(args) -> RunConfig:
    config = io.load_config(args.config) if args.config else RunConfig()
    if getattr(args, "points", None):
        config = config.replace(grid=_parse_points(args.points))
    if getattr(args, "seed", None) is not None:
        config = config.replace(
            noise=dataclasses.replace(config.noise, seed=args.seed)
        )
    if getattr(args, "out", None):
        config = config.replace(out_dir=args.out)
    return config


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _boot_seed(seed: int, index: int) -> int:
    return seed * 100_000 + index


def _analyze_one(payload):
    """One grid point end to end; exceptions become a recorded failure."""
    index, counts, b_boot, seed = payload
    try:
        _, sol, params = pipeline_once(counts)
        estimate = process_point(counts, b_boot=b_boot, seed=_boot_seed(seed, index))
    except PIPELINE_ERRORS as exc:
        return index, None, 0.0, 0, f"{type(exc).__name__}: {exc}"
    return index, estimate, average_mixture_weight(sol), params.clamp_events, None


def _run_pool(worker, payloads, workers: int):
    if workers <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with multiprocessing.Pool(min(workers, len(payloads))) as pool:
        return pool.map(worker, payloads)


def cmd_grid(config: RunConfig) -> int:
    rows = []
    for point in config.resolve_grid():
        c, eps, s = theory_params(point)
        s_nc = noncontextual_bound(c, eps)
        s_q = quantum_bound(c, eps)
        rows.append(
            [fmt(point.theta), fmt(point.alpha), fmt(c), fmt(eps), fmt(s),
             fmt(s_nc), fmt(s_q), fmt(s_q - s_nc)]
        )
    out = _out_dir(config)
    io.write_table(out / "grid.csv", io.GRID_HEADER, rows, config)
    print(f"wrote {out / 'grid.csv'} ({len(rows)} points)")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    tables = [
        simulate_point(point, config.noise, point_index=index)
        for index, point in enumerate(config.resolve_grid())
    ]
    out = _out_dir(config)
    io.save_counts(out / "counts.json", tables, config)
    cells = sum(t.n_outcome1.size for t in tables)
    print(f"wrote {out / 'counts.json'} ({len(tables)} points, {cells} count records)")
    return 0


def _slice_rows(estimates: list[PointEstimate]) -> dict[float, list[tuple]]:
    slices: dict[float, list[tuple]] = {}
    for alpha in SLICE_ALPHAS:
        rows = [
            (pe.c, pe.s, pe.ci["s"][1], pe.s_nc, pe.s_q)
            for pe in estimates
            if abs(pe.alpha - alpha) <= SLICE_WINDOW
        ]
        if rows:
            slices[alpha] = sorted(rows)
    return slices


def cmd_analyze(counts_path: str, config_override: RunConfig | None, args) -> int:
    tables, config = io.load_counts(counts_path)
    if config_override is not None:
        config = config.replace(
            bootstrap=config_override.bootstrap,
            k_sigma=config_override.k_sigma,
            out_dir=config_override.out_dir,
        )
    if args.seed is not None:
        config = config.replace(
            noise=dataclasses.replace(config.noise, seed=args.seed)
        )
    if args.out:
        config = config.replace(out_dir=args.out)

    payloads = [
        (index, counts, config.bootstrap, config.noise.seed)
        for index, counts in enumerate(tables)
    ]
    results = _run_pool(_analyze_one, payloads, args.workers)

    estimates, weights, failures = [], [], []
    clamp_events = 0
    for index, estimate, weight, clamps, error in results:
        if error is not None:
            failures.append({"point_index": index, "error": error})
            continue
        estimates.append(estimate)
        weights.append(weight)
        clamp_events += clamps

    out = _out_dir(config)
    rows = []
    for pe in estimates:
        verdict = violation_verdict(pe, k_sigma=config.k_sigma)
        rows.append(
            [fmt(pe.theta), fmt(pe.alpha), fmt(pe.c), fmt(pe.epsilon), fmt(pe.s),
             fmt(pe.s_nc), fmt(pe.s_q), fmt(pe.ds_exp), fmt(pe.ds_theory),
             fmt(pe.ci["c"][1]), fmt(pe.ci["eps"][1]), fmt(pe.ci["s"][1]),
             fmt(pe.ci["ds_exp"][1]), verdict]
        )
    io.write_table(out / "points.csv", io.POINTS_HEADER, rows, config)

    fidelity, excluded = None, []
    if estimates:
        try:
            fidelity, excluded = analysis.grid_fidelity(estimates)
        except ConstraintError:
            # every surviving point sits on the no-advantage boundary
            excluded = [(pe.theta, pe.alpha) for pe in estimates]
    io.write_json(
        out / "summary.json",
        {
            "fidelity": fidelity,
            "mean_mixture_weight": float(np.mean(weights)) if weights else None,
            "excluded_points": [list(p) for p in excluded],
            "clamp_events": clamp_events,
            "n_points": len(tables),
            "n_failed": len(failures),
            "failed_points": failures,
        },
        config,
    )
    for name, attr in (("heatmap_ds_exp.csv", "ds_exp"), ("heatmap_ds_theory.csv", "ds_theory")):
        io.write_table(
            out / name,
            f"c,eps,{attr}",
            [[fmt(pe.c), fmt(pe.epsilon), fmt(getattr(pe, attr))] for pe in estimates],
            config,
        )
    slices = _slice_rows(estimates)
    for alpha, slice_rows in slices.items():
        io.write_table(
            out / f"slice_alpha_{alpha:g}.csv",
            "c,s_exp,std_s,s_nc,s_q",
            [[fmt(v) for v in row] for row in slice_rows],
            config,
        )
    if not args.no_plots and estimates:
        plots.render_heatmaps(out / "advantage_heatmaps.png", estimates)
        if slices:
            plots.render_slices(out / "slices_s_vs_c.png", slices)

    shown = "n/a" if fidelity is None else f"{fidelity:.6f}"
    print(
        f"analyzed {len(estimates)}/{len(tables)} points -> {out} "
        f"(fidelity {shown}, {len(failures)} failed)"
    )
    if failures:
        for failure in failures:
            print(f"  point {failure['point_index']}: {failure['error']}", file=sys.stderr)
    if len(failures) > 0.1 * len(tables):
        print("error: more than 10% of points failed", file=sys.stderr)
        return 1
    return 0


def _sweep_one(payload):
    index, point, noise, p, b_boot = payload
    counts = simulate_point(
        point, dataclasses.replace(noise, depolarizing_p=p), point_index=index
    )
    estimate = process_point(counts, b_boot=b_boot, seed=_boot_seed(noise.seed, index))
    return estimate.ds_exp, estimate.ci["ds_exp"][1]


def _zero_crossing(p_values, ds_values):
    pairs = list(zip(p_values, ds_values))
    for (p0, d0), (p1, d1) in zip(pairs, pairs[1:]):
        if d0 > 0.0 >= d1:
            return p0 + (p1 - p0) * d0 / (d0 - d1)
    return None


def cmd_sweep(config: RunConfig, p_values: list[float], args) -> int:
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"depolarizing p must be in [0, 1], got {p}")
    if config.grid == "default":
        point = GridPoint(1.0, 0.4)
    else:
        point = config.resolve_grid()[0]
    payloads = [
        (index, point, config.noise, p, config.bootstrap)
        for index, p in enumerate(p_values)
    ]
    results = _run_pool(_sweep_one, payloads, args.workers)
    ds_values = [r[0] for r in results]
    std_values = [r[1] for r in results]
    p_star = _zero_crossing(p_values, ds_values)

    out = _out_dir(config)
    io.write_table(
        out / "sweep.csv",
        "p,ds_exp,std_ds",
        [[fmt(p), fmt(d), fmt(s)] for p, d, s in zip(p_values, ds_values, std_values)],
        config,
    )
    io.write_json(
        out / "sweep.json",
        {
            "point": [point.theta, point.alpha],
            "p_values": list(p_values),
            "ds_exp": ds_values,
            "p_star": p_star,
        },
        config,
    )
    if not args.no_plots:
        plots.render_sweep(out / "sweep_depolarizing.png", p_values, ds_values, p_star)
    print(f"wrote {out / 'sweep.csv'} (p* = {p_star})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mesdlab",
        description="Simulate and analyze a qubit state-discrimination contextuality test.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, points=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the noise seed")
        p.add_argument("--out", help="output directory")
        if points:
            p.add_argument(
                "--points", help="explicit grid, e.g. '0.6:0.3,1.0:0.4' (theta:alpha)"
            )

    p_grid = sub.add_parser("grid", help="write the scan grid with theory values")
    common(p_grid)

    p_sim = sub.add_parser("simulate", help="generate a counts dataset")
    common(p_sim)

    p_ana = sub.add_parser("analyze", help="run the two-stage pipeline on counts")
    p_ana.add_argument("counts", help="counts.json produced by simulate")
    common(p_ana, points=False)
    p_ana.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_ana.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    p_sw = sub.add_parser(
        "sweep-depolarizing", help="advantage against depolarizing strength"
    )
    common(p_sw)
    p_sw.add_argument(
        "--pvalues",
        default=",".join(f"{0.05 * i:g}" for i in range(11)),
        help="comma-separated depolarizing strengths",
    )
    p_sw.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_sw.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "grid":
            return cmd_grid(_resolve_config(args))
        if args.command == "simulate":
            return cmd_simulate(_resolve_config(args))
        if args.command == "analyze":
            override = io.load_config(args.config) if args.config else None
            return cmd_analyze(args.counts, override, args)
        if args.command == "sweep-depolarizing":
            try:
                p_values = [float(p) for p in args.pvalues.split(",")]
            except ValueError as exc:
                raise ConfigError(f"bad --pvalues: {exc}") from exc
            return cmd_sweep(_resolve_config(args), p_values, args)
    except (ConfigError, ConstraintError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
