"""Experiment runner: simulate sweeps, verify closed-form identities, and
fit decay laws from persisted diagnostics.

Exit codes: 0 success, 1 check failure, 2 config error, 3 solver failure.
The CUSPFLOW_OUTDIR environment variable sets the default output directory.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, barriers, flow, reporting, surgery
from .analysis import AnalysisError, FIT_OBSERVABLES
from .config import KNOWN_CHECKS, ConfigError, ExperimentConfig, parse_config
from .flow import FunctionalProbe, SolverError, exact_solution
from .grid import Field, RadialGrid
from .metrics import MetricSpec, gauss_curvature, sample
from .reporting import ViolationRow

ENV_OUTDIR = "CUSPFLOW_OUTDIR"
DEFAULT_OUTDIR = "cuspflow-out"

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_FAILURE = 3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuspflow",
        description="Contracting-cusp conformal Ricci flow: simulate, verify, fit.",
    )
    sub = parser.add_subparsers(required=True)

    sim = sub.add_parser("simulate", help="run a configured flow sweep with checks")
    sim.add_argument("--config", required=True, help="experiment config file")
    sim.add_argument("--jobs", type=int, default=1,
                     help="parallel workers for independent runs (lockstep sweeps ignore this)")
    sim.add_argument("--out", default=None, help="output directory")
    sim.set_defaults(handler=_cmd_simulate)

    ver = sub.add_parser("verify-metrics", help="closed-form identity battery")
    ver.add_argument("--resolution", type=int, default=4096, help="grid nodes for the battery")
    ver.add_argument("--out", default=None, help="output directory for the report figure")
    ver.set_defaults(handler=_cmd_verify_metrics)

    fit = sub.add_parser("fit", help="fit a decay law from a diagnostics CSV")
    fit.add_argument("--series", required=True, help="diagnostics.csv produced by simulate")
    fit.add_argument("--observable", required=True, choices=FIT_OBSERVABLES)
    fit.add_argument("--window", default=None, help="t_lo,t_hi override for the fit window")
    fit.add_argument("--out", default=None, help="output directory")
    fit.set_defaults(handler=_cmd_fit)
    return parser


def _outdir(explicit) -> Path:
    out = Path(explicit or os.environ.get(ENV_OUTDIR) or DEFAULT_OUTDIR)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------- simulate


def _cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    out = _outdir(args.out or cfg.output_dir)
    series_list = _run_experiment(cfg, jobs=max(1, args.jobs))
    violations = _run_checks(cfg, series_list)
    fits = _run_fits(series_list)

    reporting.write_snapshots_csv(out / "snapshots.csv", series_list)
    reporting.write_diagnostics_csv(out / "diagnostics.csv", series_list)
    reporting.write_violations_csv(out / "violations.csv", violations)
    reporting.write_fits_csv(out / "fits.csv", fits)
    reporting.render_profiles(out / "profiles.png", series_list)
    reporting.render_diagnostics(out / "diagnostics.png", series_list)
    if violations:
        reporting.render_margins(out / "margins.png", violations)

    failures = [v for v in violations if not v.passed]
    print(f"[simulate] runs: {' '.join(s.run_id for s in series_list)}; "
          f"checks: {' '.join(cfg.checks) or 'none'}; outputs in {out}")
    if failures:
        summary = [
            {"run_id": v.run_id, "check": v.check, "t": v.t, "margin": v.margin}
            for v in failures
        ]
        print(json.dumps({"failures": summary}, sort_keys=True))
        return EXIT_CHECK_FAILURE
    print(json.dumps({"failures": []}))
    return EXIT_OK


def _initial_fields(cfg: ExperimentConfig) -> list[tuple[str, Field]]:
    grid = RadialGrid(cfg.n_nodes, cfg.r_max)
    if cfg.metric == "truncated_cusp":
        runs = [
            (_level_id(k), surgery.truncate(MetricSpec.hyperbolic_cusp(), k, grid))
            for k in cfg.truncation_levels
        ]
    elif cfg.metric == "flat":
        runs = [("flat", Field(grid, np.full(grid.n_nodes, cfg.flat_value)))]
    elif cfg.metric == "sphere":
        runs = [("sphere", sample(MetricSpec.sphere(cfg.sphere_lambda, cfg.sphere_shift), grid))]
    elif cfg.metric == "cigar":
        runs = [("cigar", sample(MetricSpec.cigar(), grid))]
    else:  # hyperbolic_band; origin node takes the first positive node's value
        runs = [("band", sample(MetricSpec.hyperbolic_band(cfg.band_delta), grid))]
    if cfg.initial_offset != 0.0:
        runs = [(rid, f.with_values(f.values + cfg.initial_offset)) for rid, f in runs]
    return runs


def _level_id(k: float) -> str:
    return f"k{k:g}"


def _probe(cfg: ExperimentConfig) -> FunctionalProbe | None:
    if "functional" not in cfg.checks:
        return None
    return FunctionalProbe(cfg.functional_level, cfg.functional_radius)


def _worker_run(payload):
    run_id, u0, t_end, solver, snaps, probe = payload
    return flow.run(u0, t_end, solver, snaps, run_id=run_id, probe=probe)


def _run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[analysis.TimeSeries]:
    runs = _initial_fields(cfg)
    probe = _probe(cfg)
    lockstep = "comparison" in cfg.checks and len(runs) > 1
    if lockstep:
        # A shared adaptive time grid keeps the discrete comparison principle
        # exact across the sweep; the runs advance together.
        return flow.run_family(
            [f for _, f in runs], cfg.t_end, cfg.solver, cfg.snapshot_times,
            run_ids=[rid for rid, _ in runs], probe=probe,
        )
    payloads = [
        (rid, f, cfg.t_end, cfg.solver, cfg.snapshot_times, probe) for rid, f in runs
    ]
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
            return list(pool.map(_worker_run, payloads))
    return [_worker_run(p) for p in payloads]


def _run_checks(cfg: ExperimentConfig, series_list) -> list[ViolationRow]:
    rows: list[ViolationRow] = []
    for check in KNOWN_CHECKS:
        if check not in cfg.checks:
            continue
        if check == "static_upper":
            for series in series_list:
                for t, field in series.snapshots:
                    rep = barriers.check_static_upper(field, t)
                    rows.append(_from_report(series.run_id, rep))
        elif check == "moving_cap":
            for series in series_list:
                for t, field in series.snapshots:
                    if not 0.0 < t < 1.0:
                        continue  # the cap barrier is only defined there
                    rep = barriers.check_moving_cap(field, t)
                    rows.append(_from_report(series.run_id, rep))
        elif check == "rate_bound":
            rows.extend(_rate_bound_rows(cfg, series_list))
        elif check == "comparison":
            rows.extend(_comparison_rows(series_list))
        elif check == "truncation":
            rows.extend(_truncation_rows(cfg))
        elif check == "functional":
            rows.extend(_functional_rows(cfg, series_list))
    return rows


def _from_report(run_id: str, rep: barriers.ViolationReport) -> ViolationRow:
    return ViolationRow(run_id, rep.check, rep.t, rep.worst_r, rep.margin, rep.passed)


def _rate_bound_rows(cfg, series_list) -> list[ViolationRow]:
    rows = []
    for series in series_list:
        beta_hat = barriers.fit_rate_bound(series)
        worst_t, worst_r = 0.0, 0.0
        for t, field in series.snapshots:
            if not 0.0 < t < 1.0:
                continue
            mask = field.grid.r <= 0.5
            i = int(np.argmax(field.values[mask]))
            sup = float(field.values[mask][i])
            if sup > 0.0 and t * sup == beta_hat:
                worst_t, worst_r = t, float(field.grid.r[mask][i])
        rows.append(ViolationRow(
            series.run_id, "rate_bound", worst_t, worst_r,
            beta_hat - cfg.rate_bound_max, beta_hat <= cfg.rate_bound_max,
        ))
    return rows


def _comparison_rows(series_list) -> list[ViolationRow]:
    """Chain ordering between consecutive runs plus domination by the exact
    cusp solution, per snapshot, on the nodes with r > 0."""
    slack = barriers.BARRIER_SLACK
    rows = []
    for lo, hi in zip(series_list, series_list[1:]):
        for (t, f_lo), (t2, f_hi) in zip(lo.snapshots, hi.snapshots):
            gap = f_lo.values - f_hi.values
            i = int(np.argmax(gap))
            rows.append(ViolationRow(
                f"{lo.run_id}<={hi.run_id}", "comparison_chain", t,
                float(f_lo.grid.r[i]), float(gap[i]), bool(gap[i] <= slack),
            ))
    for series in series_list:
        for t, field in series.snapshots:
            r = field.grid.r[1:]
            gap = field.values[1:] - exact_solution("cusp", r, t)
            i = int(np.argmax(gap))
            rows.append(ViolationRow(
                series.run_id, "comparison_exact", t,
                float(r[i]), float(gap[i]), bool(gap[i] <= slack),
            ))
    return rows


def _truncation_rows(cfg: ExperimentConfig) -> list[ViolationRow]:
    """Truncation property suite: identity and ordering checks on the sweep
    grid, curvature checks on a grid adapted to each level's transition.

    The transition of a level-k cap sits at radius ~ e^{-(k+1)} / (k + 1); a
    uniform sweep grid cannot resolve it for moderate k, so the curvature
    part is validated on its own resolving grid.
    """
    if cfg.metric != "truncated_cusp":
        return []
    rows = []
    spec = MetricSpec.hyperbolic_cusp()
    sweep_grid = RadialGrid(cfg.n_nodes, cfg.r_max)
    for k in cfg.truncation_levels:
        run_id = _level_id(k)
        fine_grid = surgery.adapted_grid(k, cfg.n_nodes)
        u_fine = surgery.truncate(spec, k, fine_grid)
        m_bound = surgery.measured_lower_curvature_bound(
            spec, fine_grid, r_min=surgery.cap_edge_radius(k)
        )
        rep_fine = surgery.verify_truncation(u_fine, spec, k, m_bound)
        u_sweep = surgery.truncate(spec, k, sweep_grid)
        rep_sweep = surgery.verify_truncation(u_sweep, spec, k, m_bound)
        rows.append(ViolationRow(
            run_id, "truncation_identity", 0.0, rep_sweep.equal_outside_radius,
            max(rep_sweep.max_excess_over_input, rep_sweep.cap_value_error),
            rep_sweep.ordering_ok and rep_sweep.cap_level_ok,
        ))
        floor_margin = (rep_fine.curvature_floor - 0.05) - rep_fine.curvature_min
        rows.append(ViolationRow(
            run_id, "truncation_curvature", 0.0, fine_grid.r_max,
            max(floor_margin, rep_fine.cap_curvature_max_abs - 1e-6,
                rep_fine.untouched_curvature_max_dev - 1e-6),
            rep_fine.floor_ok and rep_fine.cap_flat_ok and rep_fine.untouched_ok,
        ))
    return rows


def _functional_rows(cfg, series_list) -> list[ViolationRow]:
    rows = []
    for series in series_list:
        trace = series.step_functional
        if len(trace) < 2:
            continue
        vals = np.array([v for _, v in trace])
        times = np.array([t for t, _ in trace])
        increases = np.diff(vals)
        i = int(np.argmax(increases))
        rows.append(ViolationRow(
            series.run_id, "functional", float(times[i + 1]),
            cfg.functional_radius, float(increases[i]), bool(increases[i] <= 1e-8),
        ))
    return rows


def _run_fits(series_list) -> list[tuple[str, analysis.FitResult]]:
    fits = []
    for series in series_list:
        for fit_fn in (analysis.fit_diameter_law, analysis.fit_sup_factor_exponent):
            try:
                fits.append((series.run_id, fit_fn(series)))
            except AnalysisError:
                continue
        try:
            fits.append((series.run_id, analysis.fit_curvature_blowup(series).fit))
        except AnalysisError:
            pass
    return fits


# ----------------------------------------------------------- verify-metrics


@dataclass(frozen=True)
class BatteryRow:
    name: str
    value: float
    lo: float
    hi: float

    @property
    def passed(self) -> bool:
        return self.lo <= self.value <= self.hi


def run_metric_battery(resolution: int = 4096, curvature_fn=gauss_curvature) -> list[BatteryRow]:
    """Closed-form identity suite: curvature of the reference metrics, seam
    continuity of the moving-cap barrier, and the cap residual identities.

    curvature_fn is injectable so the battery itself can be exercised
    against a deliberately broken operator.
    """
    rows: list[BatteryRow] = []

    def curvature_worst(field: Field, mask: np.ndarray, target: float) -> float:
        K = curvature_fn(field).values
        sel = K[mask]
        return float(sel[np.argmax(np.abs(sel - target))])

    grid = RadialGrid(resolution, 0.9)
    margin = 5 * grid.h
    inner_mask = (grid.r >= 0.05) & (grid.r <= 0.9 - margin)

    cusp = sample(MetricSpec.hyperbolic_cusp(), grid)
    rows.append(BatteryRow(
        "K(cusp) on [0.05, 0.9)", curvature_worst(cusp, inner_mask, -1.0),
        -1.0 - 1e-3, -1.0 + 1e-3,
    ))

    fine = RadialGrid(2 * resolution - 1, 0.9)
    fine_mask = (fine.r >= 0.05) & (fine.r <= 0.9 - margin)
    cusp_fine = sample(MetricSpec.hyperbolic_cusp(), fine)
    err_coarse = float(np.max(np.abs(curvature_fn(cusp).values[inner_mask] + 1.0)))
    err_fine = float(np.max(np.abs(curvature_fn(cusp_fine).values[fine_mask] + 1.0)))
    rows.append(BatteryRow(
        "K(cusp) refinement ratio", err_coarse / err_fine, 2.8, 5.5,
    ))

    interior = np.zeros(grid.n_nodes, dtype=bool)
    interior[: -5] = True
    sphere = sample(MetricSpec.sphere(1.0, 0.0), grid)
    rows.append(BatteryRow(
        "K(sphere) on [0, 0.9)", curvature_worst(sphere, interior, 1.0),
        1.0 - 1e-3, 1.0 + 1e-3,
    ))

    cigar = sample(MetricSpec.cigar(), grid)
    k_cigar = curvature_fn(cigar).values
    rows.append(BatteryRow("K(cigar) at r = 0", float(k_cigar[0]), 2.0 - 1e-3, 2.0 + 1e-3))
    exact = 2.0 / (1.0 + grid.r**2)
    dev = float(np.max(np.abs((k_cigar - exact)[interior])))
    rows.append(BatteryRow("max |K(cigar) - 2/(1+r^2)|", dev, 0.0, 1e-3))

    for delta in (0.05, 0.1):
        band = sample(MetricSpec.hyperbolic_band(delta), grid)
        # The band factor degenerates at its domain edge r = e^{-delta};
        # keep a fixed physical margin so the row is resolution-robust.
        band_mask = inner_mask & (grid.r <= np.exp(-delta) - 0.03)
        rows.append(BatteryRow(
            f"K(band {delta:g}), edge margin 0.03", curvature_worst(band, band_mask, -1.0),
            -1.0 - 1e-3, -1.0 + 1e-3,
        ))

    seam = max(
        abs(barriers.barrier_S(barriers.lambda_of_t(t), t)
            - barriers.barrier_h(barriers.lambda_of_t(t)))
        for t in np.arange(0.1, 0.95, 0.1)
    )
    rows.append(BatteryRow("moving-cap seam |S - h| at r = lam(t)", float(seam), 0.0, 1e-12))

    rows.append(BatteryRow(
        "cap diffusion term at (r, t) = (0, 1)", barriers.cap_diffusion_term(0.0, 1.0),
        -12.0 * (1.0 + 1e-6), -12.0 * (1.0 - 1e-6),
    ))

    rel_dev, residual_floor = _cap_residual_sample()
    rows.append(BatteryRow(
        "cap diffusion vs -12/t^2, max rel dev (20x20)", rel_dev, 0.0, 1e-6,
    ))
    rows.append(BatteryRow(
        "supersolution residual floor, min of t^2 residual / 6 (20x20)",
        residual_floor, 1.0 - 1e-6, float("inf"),
    ))
    return rows


def _cap_residual_sample(n: int = 20) -> tuple[float, float]:
    """Sample the cap identities on an n x n grid of (r, t), r < lam(t)."""
    rel_dev = 0.0
    floor = float("inf")
    for t in np.linspace(0.05, 0.95, n):
        lam = barriers.lambda_of_t(t)
        for i in range(n):
            r = lam * i / n
            term = barriers.cap_diffusion_term(r, t)
            rel_dev = max(rel_dev, abs(term * t * t / 12.0 + 1.0))
            floor = min(floor, barriers.supersolution_residual(r, t) * t * t / 6.0)
    return rel_dev, floor


def _cmd_verify_metrics(args) -> int:
    rows = run_metric_battery(args.resolution)
    out = _outdir(args.out)
    reporting.render_battery(out / "verify_metrics.png", rows)
    width = max(len(r.name) for r in rows)
    for row in rows:
        status = "pass" if row.passed else "FAIL"
        print(f"{row.name:<{width}}  {row.value: .9e}  in [{row.lo:g}, {row.hi:g}]  {status}")
    failures = [r for r in rows if not r.passed]
    print(f"[verify-metrics] {len(rows) - len(failures)}/{len(rows)} identities hold; "
          f"figure in {out / 'verify_metrics.png'}")
    return EXIT_CHECK_FAILURE if failures else EXIT_OK


# -------------------------------------------------------------------- fit


def _cmd_fit(args) -> int:
    path = Path(args.series)
    if not path.is_file():
        raise ConfigError(f"series file not found: {path}")
    window = None
    if args.window is not None:
        try:
            t_lo, t_hi = (float(x) for x in args.window.split(","))
        except ValueError:
            raise ConfigError(f"bad --window '{args.window}', expected t_lo,t_hi") from None
        window = (t_lo, t_hi)
    column = {"diameter": "dist_half", "sup_factor": "sup_u_half",
              "curvature": "sup_abs_K"}[args.observable]
    data = reporting.read_diagnostics_csv(path)
    if not data:
        raise ConfigError(f"no rows in {path}")
    out = _outdir(args.out)
    fits, points = [], []
    for run_id in sorted(data):
        cols = data[run_id]
        times, values = cols["t"], cols[column]
        try:
            fit = analysis.fit_line(args.observable, times, values, window)
        except AnalysisError as exc:
            print(f"[fit] {run_id}: skipped ({exc})", file=sys.stderr)
            continue
        fits.append((run_id, fit))
        mask = (times >= fit.window[0]) & (times <= fit.window[1]) & (times > 0)
        if args.observable == "diameter":
            points.append((run_id, -np.log(times[mask]), values[mask]))
        else:
            points.append((run_id, np.log(times[mask]), np.log(values[mask])))
        print(f"[fit] {run_id} {args.observable}: slope {fit.slope:.4f}, "
              f"intercept {fit.intercept:.4f}, r2 {fit.r_squared:.4f}, "
              f"window [{fit.window[0]:g}, {fit.window[1]:g}]")
    if not fits:
        raise ConfigError("no run produced a fit (window too restrictive?)")
    reporting.write_fits_csv(out / "fits.csv", fits, append=True)
    reporting.render_fit(out / f"fit_{args.observable}.png", args.observable, points, fits)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
