"""CSV persistence and report figures.

CSV schemas (headers are part of the CLI contract):

    snapshots.csv    run_id, t, r, u, K
    diagnostics.csv  run_id, t, sup_u_half, dist_half, sup_abs_K, min_K, functional_value
    violations.csv   run_id, check, t, worst_r, margin, pass
    fits.csv         run_id, observable, slope, intercept, r_squared, t_lo, t_hi

Floats are written with repr (shortest round-trip form), so identical inputs
produce byte-identical files.  Figures are rendered next to the CSVs; they
are a convenience view of the same data, not part of the byte-level
determinism contract.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import FitResult, TimeSeries
from .metrics import gauss_curvature


@dataclass(frozen=True)
class ViolationRow:
    """One serialized check result (mirrors barriers.ViolationReport)."""

    run_id: str
    check: str
    t: float
    worst_r: float
    margin: float
    passed: bool


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_snapshots_csv(path, series_list: list[TimeSeries]) -> None:
    def rows():
        for series in series_list:
            for t, field in series.snapshots:
                K = gauss_curvature(field).values
                for r, u, k in zip(field.grid.r, field.values, K):
                    yield (series.run_id, t, float(r), float(u), float(k))

    _write_csv(Path(path), ["run_id", "t", "r", "u", "K"], rows())


def write_diagnostics_csv(path, series_list: list[TimeSeries]) -> None:
    def rows():
        for series in series_list:
            for row in series.diagnostics:
                yield (
                    series.run_id, row.t, row.sup_u_half, row.dist_half,
                    row.sup_abs_K, row.min_K, row.functional_value,
                )

    _write_csv(
        Path(path),
        ["run_id", "t", "sup_u_half", "dist_half", "sup_abs_K", "min_K", "functional_value"],
        rows(),
    )


def write_violations_csv(path, rows: list[ViolationRow]) -> None:
    _write_csv(
        Path(path),
        ["run_id", "check", "t", "worst_r", "margin", "pass"],
        ((r.run_id, r.check, r.t, r.worst_r, r.margin, r.passed) for r in rows),
    )


def write_fits_csv(path, fits: list[tuple[str, FitResult]], append: bool = False) -> None:
    path = Path(path)
    header = ["run_id", "observable", "slope", "intercept", "r_squared", "t_lo", "t_hi"]
    new_file = not (append and path.exists())
    mode = "w" if new_file else "a"
    with path.open(mode, newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(header)
        for run_id, fit in fits:
            writer.writerow(
                [
                    run_id, fit.observable, _fmt(fit.slope), _fmt(fit.intercept),
                    _fmt(fit.r_squared), _fmt(fit.window[0]), _fmt(fit.window[1]),
                ]
            )


def read_diagnostics_csv(path) -> dict[str, dict[str, np.ndarray]]:
    """Read diagnostics.csv back as {run_id: {column: array}}."""
    out: dict[str, dict[str, list[float]]] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            run = out.setdefault(row["run_id"], {})
            for key, value in row.items():
                if key == "run_id":
                    continue
                run.setdefault(key, []).append(float(value))
    return {
        run_id: {key: np.array(vals) for key, vals in cols.items()}
        for run_id, cols in out.items()
    }


def render_profiles(path, series_list: list[TimeSeries]) -> None:
    """Factor profiles u(r) at snapshot times, one panel per run."""
    n = len(series_list)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.4), squeeze=False, sharey=True)
    for ax, series in zip(axes[0], series_list):
        for t, field in series.snapshots:
            ax.plot(field.grid.r, field.values, lw=1.0, label=f"t = {t:g}")
        ax.set_xlabel("r")
        ax.set_title(series.run_id)
        ax.legend(fontsize="x-small")
    axes[0][0].set_ylabel("u")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_diagnostics(path, series_list: list[TimeSeries]) -> None:
    """Diagnostic traces against time for every run."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 7))
    for series in series_list:
        t = series.times
        pos = t > 0
        sup = np.array([r.sup_u_half for r in series.diagnostics])
        dist = np.array([r.dist_half for r in series.diagnostics])
        supk = np.array([r.sup_abs_K for r in series.diagnostics])
        func = np.array([r.functional_value for r in series.diagnostics])
        axes[0, 0].loglog(t[pos], np.maximum(sup[pos], 1e-12), label=series.run_id)
        axes[0, 1].plot(-np.log(t[pos]), dist[pos], label=series.run_id)
        axes[1, 0].loglog(t[pos], np.maximum(supk[pos], 1e-12), label=series.run_id)
        if np.any(np.isfinite(func)):
            axes[1, 1].plot(t, func, label=series.run_id)
    axes[0, 0].set_xlabel("t"); axes[0, 0].set_ylabel("sup u on r <= 1/2")
    axes[0, 1].set_xlabel("-ln t"); axes[0, 1].set_ylabel("dist(0, 1/2)")
    axes[1, 0].set_xlabel("t"); axes[1, 0].set_ylabel("sup |K| on r <= 1/2")
    axes[1, 1].set_xlabel("t"); axes[1, 1].set_ylabel("convex functional")
    for ax in axes.flat:
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize="x-small")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_margins(path, rows: list[ViolationRow]) -> None:
    """Barrier margins against time, one line per (run, check)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    keys = sorted({(r.run_id, r.check) for r in rows})
    for run_id, check in keys:
        pts = [(r.t, r.margin) for r in rows if r.run_id == run_id and r.check == check]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=2.5,
                lw=0.9, label=f"{run_id}:{check}")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("violation margin")
    ax.legend(fontsize="x-small", ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_fit(path, observable: str, points: list[tuple[str, np.ndarray, np.ndarray]],
               fits: list[tuple[str, FitResult]]) -> None:
    """Scatter of the fitted observable with its regression lines.

    points holds (run_id, x, y) in the fit's own coordinates (already
    log-transformed where applicable).
    """
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    fit_by_run = dict(fits)
    for run_id, x, y in points:
        ax.plot(x, y, "o", ms=3, label=run_id)
        fit = fit_by_run.get(run_id)
        if fit is not None:
            xs = np.linspace(float(np.min(x)), float(np.max(x)), 50)
            ax.plot(xs, fit.intercept + fit.slope * xs, lw=1.0,
                    label=f"{run_id} slope {fit.slope:.3f} (r2 {fit.r_squared:.3f})")
    xlabel = "-ln t" if observable == "diameter" else "ln t"
    ylabel = {
        "diameter": "dist(0, 1/2)",
        "sup_factor": "ln sup u",
        "curvature": "ln sup |K|",
    }.get(observable, observable)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="x-small")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_battery(path, rows) -> None:
    """Margin chart for the closed-form identity battery (verify-metrics).

    Rows carry name, value, lo, hi, passed; the plotted margin is the signed
    distance outside [lo, hi] (negative means inside the admissible band).
    """
    fig, ax = plt.subplots(figsize=(8, 4))
    names = [row.name for row in rows]
    margins = [max(row.lo - row.value, row.value - row.hi) for row in rows]
    xs = np.arange(len(names))
    ax.bar(xs, margins, color=["tab:blue" if r.passed else "tab:red" for r in rows])
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xticks(xs)
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize="x-small")
    ax.set_ylabel("signed margin (neg = pass)")
    ax.set_yscale("symlog", linthresh=1e-12)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
