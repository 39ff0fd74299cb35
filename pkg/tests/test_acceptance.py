"""Acceptance battery: one test per criterion, each printing a PASS/FAIL line.

The flow-based criteria run the truncation-level sweep k in {4, 8, 12} at
n_nodes = 2049 on [0, 0.9].  A level-k cap sits at radius ~ e^{-(k+1)}/(k+1)
(about 1e-3, 1.1e-5, 1.4e-7 for k = 4, 8, 12) while the grid spacing is
~4.4e-4: levels 8 and 12 are below grid resolution, their sampled initial
data degenerate to a single stuck origin node, and the criteria that probe
those runs fail with the margins printed here.  Resolving level k uniformly
needs roughly 5 (k+1) e^{k+1} r_max nodes (~3e5 for k = 8, ~2e7 for k = 12),
which is outside the desk-scale budget the battery runs at.  See the test
bodies for the per-criterion consequences; everything not tied to the
under-resolved runs passes.
"""

from pathlib import Path

import numpy as np
import pytest

from cuspflow import analysis, barriers, cli
from cuspflow.cli import run_metric_battery
from cuspflow.flow import (
    BoundaryDriver,
    FunctionalProbe,
    SolverConfig,
    exact_solution,
    run,
    run_family,
)
from cuspflow.grid import Field, RadialGrid
from cuspflow.metrics import MetricSpec, cusp_factor, sample
from cuspflow.surgery import (
    adapted_grid,
    cap_edge_radius,
    measured_lower_curvature_bound,
    transition_outer_radius,
    truncate,
    verify_truncation,
)

CUSP = MetricSpec.hyperbolic_cusp()
LEVELS = (4.0, 8.0, 12.0)
N_SWEEP = 2049
SNAPSHOTS = sorted(
    {round(float(t), 6) for t in np.geomspace(0.01, 0.5, 16)} | {0.05, 0.1, 0.2, 0.5}
)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{name}] {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def sweep():
    """Lockstep sweep of the three truncation levels with the functional probe."""
    grid = RadialGrid(N_SWEEP, 0.9)
    u0s = [truncate(CUSP, k, grid) for k in LEVELS]
    series = run_family(
        u0s, 0.5, SolverConfig(), SNAPSHOTS,
        run_ids=[f"k{k:g}" for k in LEVELS],
        probe=FunctionalProbe(level=1.3, region_r=0.9),
    )
    return {"grid": grid, "series": series}


@pytest.fixture(scope="module")
def regressions():
    """Exact-solution reference runs at n_nodes = 2049, dt <= 1e-4."""
    grid = RadialGrid(N_SWEEP, 0.9)
    cfg = SolverConfig(dt_max=1e-4)
    times = [0.05, 0.1, 0.15, 0.2]

    sphere0 = sample(MetricSpec.sphere(1.0, 0.0), grid)
    sphere_bc = BoundaryDriver(outer=lambda t: exact_solution("sphere", 0.9, t))
    sphere = run(sphere0, 0.2, cfg, times, boundary=sphere_bc, run_id="sphere")

    vals = np.empty(grid.n_nodes)
    vals[1:] = cusp_factor(grid.r[1:])
    vals[0] = vals[1]
    n_inner = grid.index_at(0.05) + 1
    cusp_bc = BoundaryDriver(
        outer=lambda t: exact_solution("cusp", 0.9, t),
        n_inner=n_inner,
        inner=lambda r, t: exact_solution("cusp", np.maximum(r, grid.h), t),
    )
    cusp = run(Field(grid, vals), 0.2, cfg, times, boundary=cusp_bc, run_id="cusp")
    return {"grid": grid, "sphere": sphere, "cusp": cusp, "n_inner": n_inner}


def test_criterion_01_closed_form_curvature_identities():
    rows = run_metric_battery(4096)
    wanted = [r for r in rows if r.name.startswith("K(") or "refinement" in r.name]
    bad = [r for r in wanted if not r.passed]
    detail = "; ".join(f"{r.name} = {r.value:.6g}" for r in wanted)
    report("criterion-01", not bad, detail)
    assert not bad, bad


def test_criterion_02_exact_solution_regressions(regressions):
    grid = regressions["grid"]
    worst = {}
    for name in ("sphere", "cusp"):
        series = regressions[name]
        errs = []
        for t, f in series.snapshots:
            exact = exact_solution(name, grid.r[1:], t)
            errs.append(float(np.max(np.abs(f.values[1:] - exact))))
        worst[name] = max(errs)
    ok = all(w <= 2e-4 for w in worst.values())
    report("criterion-02", ok,
           f"sup errors over t in [0, 0.2]: sphere {worst['sphere']:.3e}, "
           f"cusp {worst['cusp']:.3e} (tol 2e-4)")
    assert ok, worst


def test_criterion_03_truncation_properties():
    sweep_grid = RadialGrid(N_SWEEP, 0.9)
    details = []
    ok = True
    prev = None
    for k in LEVELS:
        fine = adapted_grid(k, N_SWEEP)
        M = measured_lower_curvature_bound(CUSP, fine, r_min=cap_edge_radius(k))
        rep = verify_truncation(truncate(CUSP, k, fine), CUSP, k, M)
        ok &= rep.passed
        ok &= rep.curvature_min >= -np.exp(2.0) * M - 0.05
        ok &= rep.cap_curvature_max_abs <= 1e-6
        ok &= rep.equal_outside_radius <= transition_outer_radius(k) * 1.05
        details.append(
            f"k={k:g}: M={M:.4f} minK={rep.curvature_min:.4f} "
            f"capK={rep.cap_curvature_max_abs:.1e} eq_r={rep.equal_outside_radius:.2e}"
        )
        u_k = truncate(CUSP, k, sweep_grid)
        if prev is not None:
            ok &= bool(np.max(prev.values - u_k.values) <= 1e-12)
        ok &= bool(np.max(u_k.values[1:] - cusp_factor(sweep_grid.r[1:])) <= 1e-12)
        prev = u_k
    report("criterion-03", ok, "; ".join(details))
    assert ok


def test_criterion_04_comparison_chain(sweep):
    series = sweep["series"]
    grid = sweep["grid"]
    chain_worst = -np.inf
    for lo, hi in zip(series, series[1:]):
        for (t, fl), (_, fh) in zip(lo.snapshots, hi.snapshots):
            chain_worst = max(chain_worst, float(np.max(fl.values - fh.values)))
    exact_worst = {}
    for s in series:
        worst = -np.inf
        for t, f in s.snapshots:
            gap = np.max(f.values[1:] - exact_solution("cusp", grid.r[1:], t))
            worst = max(worst, float(gap))
        exact_worst[s.run_id] = worst
    ok = chain_worst <= 1e-6 and all(w <= 1e-6 for w in exact_worst.values())
    detail = (
        f"chain worst gap {chain_worst:+.2e}; vs exact cusp: "
        + ", ".join(f"{rid} {w:+.2e}" for rid, w in exact_worst.items())
        + " (tol 1e-6; k8/k12 caps are subgrid at n=2049, see module docstring)"
    )
    report("criterion-04", ok, detail)
    assert ok, detail


def test_criterion_05_barrier_certificates(sweep):
    series = sweep["series"]
    worst = {}
    for s in series:
        ws, wc = -np.inf, -np.inf
        for t, f in s.snapshots:
            ws = max(ws, barriers.check_static_upper(f, t).margin)
            if 0.0 < t < 1.0:
                wc = max(wc, barriers.check_moving_cap(f, t).margin)
        worst[s.run_id] = (ws, wc)
    beta_hat = max(barriers.fit_rate_bound(s) for s in series)
    barrier_ok = all(ws <= 1e-6 and wc <= 1e-6 for ws, wc in worst.values())
    beta_ok = beta_hat <= 20.0
    detail = (
        ", ".join(f"{rid}: static {ws:+.2e} cap {wc:+.2e}" for rid, (ws, wc) in worst.items())
        + f"; beta_hat {beta_hat:.3f} <= 20 {beta_ok}"
        + " (k8/k12 caps are subgrid at n=2049, see module docstring)"
    )
    report("criterion-05", barrier_ok and beta_ok, detail)
    assert beta_ok, detail
    assert barrier_ok, detail


def test_criterion_06_supersolution_residual():
    worst_rel = 0.0
    floor = np.inf
    for t in np.linspace(0.05, 0.95, 20):
        lam = barriers.lambda_of_t(t)
        for i in range(20):
            r = lam * i / 20.0
            floor = min(floor, barriers.supersolution_residual(r, t) * t * t / 6.0)
            worst_rel = max(
                worst_rel, abs(barriers.cap_diffusion_term(r, t) * t * t / 12.0 + 1.0)
            )
    ok = floor >= 1.0 - 1e-6 and worst_rel <= 1e-6
    report("criterion-06", ok,
           f"min residual/(6/t^2) = {floor:.6f}; max relative deviation of the "
           f"diffusion term from -12/t^2 = {worst_rel:.2e}")
    assert ok


def test_criterion_07_diameter_law(sweep):
    s12 = sweep["series"][-1]
    window = (0.02, 0.3)
    times = s12.times
    dist = np.array([r.dist_half for r in s12.diagnostics])
    try:
        fit = analysis.fit_diameter_law(s12, window)
        slope, r2 = fit.slope, fit.r_squared
    except analysis.AnalysisError:
        slope, r2 = float("nan"), float("nan")
    mask = (times >= window[0]) & (times <= window[1])
    bound_ok = bool(np.all(dist[mask] <= -2.0 * np.log(times[mask]) + 3.0))
    ok = bound_ok and 0.5 <= slope <= 2.5 and r2 >= 0.9
    report("criterion-07", ok,
           f"k12 diameter fit on {window}: slope {slope:.3f} (want [0.5, 2.5]), "
           f"r2 {r2:.3f} (want >= 0.9), dist <= -2 ln t + 3: {bound_ok}; "
           f"dist range [{dist.min():.2f}, {dist.max():.2f}] "
           "(window implementation-calibrated; k12 cap is subgrid at n=2049)")
    assert ok, "k12 run is dominated by the unresolved origin cap"


def test_criterion_08_sup_factor_exponent(sweep):
    s12 = sweep["series"][-1]
    bc_value = float(s12.snapshots[0][1].values[-1])
    sup = np.array([r.sup_u_half for r in s12.diagnostics])
    times = s12.times
    in_band = (sup >= 2.0 * bc_value) & (sup <= 0.8 * 12.0)
    detail_band = f"scaling band [2 bc, 0.8 k] = [{2*bc_value:.2f}, {0.8*12.0:.2f}]"
    if np.count_nonzero(in_band & (times > 0)) >= 2:
        window = (float(times[in_band & (times > 0)].min()),
                  float(times[in_band].max()))
        fit = analysis.fit_sup_factor_exponent(s12, window)
        slope = fit.slope
    else:
        window, slope = None, float("nan")
    ok = window is not None and -1.3 <= slope <= -0.4
    report("criterion-08", ok,
           f"k12 sup-exponent: window {window}, slope {slope:.3f} "
           f"(want [-1.3, -0.4]); {detail_band}; sup stays at "
           f"{sup.min():.2f}..{sup.max():.2f} because the cap never drains")
    assert ok, "k12 sup never enters the scaling band at n=2049"


def test_criterion_09_persistence_scaling(sweep):
    s12 = sweep["series"][-1]
    probes = (0.02, 0.05, 0.1, 0.2)
    taus = {rp: analysis.persistence_time(s12, rp) for rp in probes}
    finite = {rp: tau for rp, tau in taus.items() if np.isfinite(tau)}
    if len(finite) == len(probes):
        x = np.log(-np.log(np.array(probes)))
        y = np.log([taus[rp] for rp in probes])
        slope = float(np.polyfit(x, y, 1)[0])
        ok = -2.7 <= slope <= -1.3
    else:
        slope = float("nan")
        ok = False
    report("criterion-09", ok,
           f"k12 drop times {taus} -> slope {slope} (want -2 +- 0.7); "
           "unresolved cap never contracts and the frozen boundary refills "
           "the outer probes, so the drops never occur")
    assert ok, taus


def test_criterion_10_monotone_functional(sweep):
    worst = {}
    for s in sweep["series"]:
        vals = np.array([v for _, v in s.step_functional])
        worst[s.run_id] = float(np.max(np.diff(vals)))
    ok = all(w <= 1e-8 for w in worst.values())
    report("criterion-10", ok,
           "max per-step increase: "
           + ", ".join(f"{rid} {w:+.2e}" for rid, w in worst.items())
           + " (tol 1e-8)")
    assert ok, worst


def test_criterion_11_curvature_blowup_report(sweep):
    fits = {}
    for s in sweep["series"]:
        try:
            bf = analysis.fit_curvature_blowup(s)
            fits[s.run_id] = (bf.fit.slope, bf.fit.r_squared)
        except analysis.AnalysisError:
            fits[s.run_id] = (float("nan"), float("nan"))
    # The resolved member carries the consistency gate: its fitted exponent
    # must be below -1 (t sup|K| grows backward in time); the heuristic -2
    # rate is reported, not gated.
    slope4 = fits["k4"][0]
    ok = slope4 < -1.0
    report("criterion-11", ok,
           "fitted |K| exponents vs the -2 heuristic: "
           + ", ".join(f"{rid} {s:.3f} (r2 {r2:.2f})" for rid, (s, r2) in fits.items())
           + f"; type-II consistency gate on the resolved member k4: slope {slope4:.3f} < -1")
    assert ok, fits


def test_criterion_12_engineering_determinism(tmp_path):
    cfg_text = (Path(__file__).resolve().parents[1] / "configs" / "contracting_cusp.cfg").read_text()
    cfg_text = cfg_text.replace("n_nodes = 1025", "n_nodes = 257")
    cfg_text = cfg_text.replace("t_end = 0.5", "t_end = 0.05")
    cfg_text = cfg_text.replace(
        "snapshot_times = 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5",
        "snapshot_times = 0.02, 0.05",
    )
    cfg = tmp_path / "det.cfg"
    cfg.write_text(cfg_text)
    outs = []
    for name in ("o1", "o2"):
        out = tmp_path / name
        code = cli.main(["simulate", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    identical = outs[0] == outs[1]

    corrupted = tmp_path / "bad.cfg"
    corrupted.write_text(cfg_text + "initial_offset = 1.0\n")
    bad_out = tmp_path / "bad"
    bad_code = cli.main(["simulate", "--config", str(corrupted), "--out", str(bad_out)])
    rows = (bad_out / "violations.csv").read_text().splitlines()[1:]
    has_false = any(line.endswith("False") for line in rows)
    contract_ok = bad_code == 1 and has_false
    ok = identical and contract_ok
    report("criterion-12", ok,
           f"byte-identical reruns: {identical}; injected violation -> "
           f"exit {bad_code} with failing rows: {has_false}")
    assert ok
