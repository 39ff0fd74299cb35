import json
import os
from pathlib import Path

import numpy as np
import pytest

from cuspflow import cli
from cuspflow.cli import BatteryRow, run_metric_battery
from cuspflow.config import ConfigError, parse_config
from cuspflow.grid import Field


def write_config(path: Path, text: str) -> str:
    path.write_text(text)
    return str(path)


MINIMAL = """
metric = flat
n_nodes = 64
t_end = 0.01
snapshot_times = 0.005, 0.01
checks = static_upper, moving_cap, rate_bound, comparison, truncation, functional
"""

SMALL_SWEEP = """
metric = truncated_cusp
truncation_levels = 1.5, 2
n_nodes = 257
r_max = 0.9
t_end = 0.05
snapshot_times = 0.02, 0.05
dt_max = 1e-3
checks = static_upper, moving_cap, rate_bound, comparison, truncation, functional
"""


class TestParseConfig:
    def test_minimal_fills_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path / "a.cfg", MINIMAL))
        assert cfg.metric == "flat"
        assert cfg.n_nodes == 64
        assert cfg.solver.dt_max == 1e-3
        assert cfg.rate_bound_max == 20.0
        assert cfg.functional_radius == cfg.r_max

    def test_unknown_key_named(self, tmp_path):
        bad = MINIMAL + "snapshotts = 0.1\n"
        with pytest.raises(ConfigError, match="snapshotts"):
            parse_config(write_config(tmp_path / "a.cfg", bad))

    def test_duplicate_key(self, tmp_path):
        bad = MINIMAL + "t_end = 0.2\n"
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(write_config(tmp_path / "a.cfg", bad))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.cfg")

    def test_levels_parse(self, tmp_path):
        cfg = parse_config(write_config(tmp_path / "a.cfg", SMALL_SWEEP))
        assert cfg.truncation_levels == (1.5, 2.0)

    def test_levels_required_for_truncated(self, tmp_path):
        bad = MINIMAL.replace("metric = flat", "metric = truncated_cusp")
        with pytest.raises(ConfigError, match="truncation_levels"):
            parse_config(write_config(tmp_path / "a.cfg", bad))

    def test_unknown_check(self, tmp_path):
        bad = MINIMAL.replace("moving_cap", "moving_cup")
        with pytest.raises(ConfigError, match="moving_cup"):
            parse_config(write_config(tmp_path / "a.cfg", bad))

    def test_snapshots_inside_horizon(self, tmp_path):
        bad = MINIMAL.replace("0.005, 0.01", "0.005, 0.02")
        with pytest.raises(ConfigError, match="snapshot_times"):
            parse_config(write_config(tmp_path / "a.cfg", bad))


def read_bytes(path: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(path.glob("*.csv"))}


class TestSimulateCommand:
    def test_flat_all_margins_nonpositive(self, tmp_path):
        cfg = write_config(tmp_path / "a.cfg", MINIMAL)
        out = tmp_path / "out"
        code = cli.main(["simulate", "--config", cfg, "--out", str(out)])
        assert code == 0
        for name in ("snapshots.csv", "diagnostics.csv", "violations.csv", "fits.csv"):
            assert (out / name).exists()
        assert (out / "profiles.png").exists()
        assert (out / "diagnostics.png").exists()
        rows = (out / "violations.csv").read_text().splitlines()
        assert rows[0] == "run_id,check,t,worst_r,margin,pass"
        assert all(line.endswith("True") for line in rows[1:])
        assert all(float(line.split(",")[4]) <= 0.0 for line in rows[1:])

    def test_headers_exact(self, tmp_path):
        cfg = write_config(tmp_path / "a.cfg", MINIMAL)
        out = tmp_path / "out"
        cli.main(["simulate", "--config", cfg, "--out", str(out)])
        heads = {
            "snapshots.csv": "run_id,t,r,u,K",
            "diagnostics.csv": "run_id,t,sup_u_half,dist_half,sup_abs_K,min_K,functional_value",
            "violations.csv": "run_id,check,t,worst_r,margin,pass",
            "fits.csv": "run_id,observable,slope,intercept,r_squared,t_lo,t_hi",
        }
        for name, head in heads.items():
            assert (out / name).read_text().splitlines()[0] == head

    def test_deterministic_reruns(self, tmp_path):
        cfg = write_config(tmp_path / "a.cfg", SMALL_SWEEP)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert cli.main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
        assert cli.main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
        assert read_bytes(out1) == read_bytes(out2)

    def test_jobs_do_not_change_outputs(self, tmp_path):
        no_cmp = SMALL_SWEEP.replace(
            "checks = static_upper, moving_cap, rate_bound, comparison, truncation, functional",
            "checks = static_upper, rate_bound",
        )
        cfg = write_config(tmp_path / "a.cfg", no_cmp)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert cli.main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
        assert cli.main(["simulate", "--config", cfg, "--jobs", "2", "--out", str(out2)]) == 0
        assert read_bytes(out1) == read_bytes(out2)

    def test_corrupted_data_fails_with_summary(self, tmp_path, capsys):
        corrupted = SMALL_SWEEP + "initial_offset = 1.0\n"
        cfg = write_config(tmp_path / "a.cfg", corrupted)
        out = tmp_path / "out"
        code = cli.main(["simulate", "--config", cfg, "--out", str(out)])
        assert code == 1
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert payload["failures"]
        checks = {f["check"] for f in payload["failures"]}
        assert "static_upper" in checks
        rows = (out / "violations.csv").read_text().splitlines()[1:]
        assert any(line.endswith("False") for line in rows)

    def test_exit_code_matches_violation_rows(self, tmp_path):
        cfg = write_config(tmp_path / "a.cfg", SMALL_SWEEP)
        out = tmp_path / "out"
        code = cli.main(["simulate", "--config", cfg, "--out", str(out)])
        rows = (out / "violations.csv").read_text().splitlines()[1:]
        any_false = any(line.endswith("False") for line in rows)
        assert (code == 1) == any_false
        assert code == 0  # this resolvable sweep passes everything

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "a.cfg", MINIMAL + "snapshotts = 1\n")
        assert cli.main(["simulate", "--config", cfg]) == 2
        assert "snapshotts" in capsys.readouterr().err

    def test_env_var_outdir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CUSPFLOW_OUTDIR", str(tmp_path / "envout"))
        cfg = write_config(tmp_path / "a.cfg", MINIMAL)
        assert cli.main(["simulate", "--config", cfg]) == 0
        assert (tmp_path / "envout" / "snapshots.csv").exists()


class TestVerifyMetrics:
    def test_battery_passes(self, tmp_path, capsys):
        code = cli.main(["verify-metrics", "--resolution", "2049", "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "K(cusp)" in out
        assert "pass" in out
        assert (tmp_path / "verify_metrics.png").exists()

    def test_battery_rows_hold_at_default_resolution(self):
        rows = run_metric_battery(4096)
        for row in rows:
            assert row.passed, row

    def test_injected_sign_bug_detected(self):
        from cuspflow.metrics import gauss_curvature

        def flipped(field: Field):
            good = gauss_curvature(field)
            return good.with_values(-good.values)

        rows = run_metric_battery(1025, curvature_fn=flipped)
        assert any(not row.passed for row in rows)

    def test_battery_row_bounds(self):
        row = BatteryRow("demo", 0.5, 0.0, 1.0)
        assert row.passed
        assert not BatteryRow("demo", 2.0, 0.0, 1.0).passed


class TestFitCommand:
    @pytest.fixture()
    def diagnostics_csv(self, tmp_path):
        # A clean synthetic diagnostics table with known laws.
        t = np.geomspace(0.01, 0.5, 12)
        lines = ["run_id,t,sup_u_half,dist_half,sup_abs_K,min_K,functional_value"]
        for ti in map(float, t):
            lines.append(
                f"demo,{ti!r},{3.0 / ti!r},{float(2.0 * (-np.log(ti)) + 1.0)!r},"
                f"{7.0 / ti**2!r},0.0,nan"
            )
        path = tmp_path / "diagnostics.csv"
        path.write_text("\n".join(lines) + "\n")
        return path

    def test_diameter_fit(self, tmp_path, diagnostics_csv, capsys):
        code = cli.main([
            "fit", "--series", str(diagnostics_csv), "--observable", "diameter",
            "--out", str(tmp_path / "o"),
        ])
        assert code == 0
        assert "slope 2.0000" in capsys.readouterr().out
        fits = (tmp_path / "o" / "fits.csv").read_text().splitlines()
        assert fits[0].startswith("run_id,observable")
        assert fits[1].startswith("demo,diameter,")
        assert (tmp_path / "o" / "fit_diameter.png").exists()

    def test_window_override(self, tmp_path, diagnostics_csv, capsys):
        code = cli.main([
            "fit", "--series", str(diagnostics_csv), "--observable", "curvature",
            "--window", "0.02,0.3", "--out", str(tmp_path / "o"),
        ])
        assert code == 0
        assert "slope -2.0000" in capsys.readouterr().out

    def test_bad_window_is_config_error(self, tmp_path, diagnostics_csv):
        code = cli.main([
            "fit", "--series", str(diagnostics_csv), "--observable", "diameter",
            "--window", "oops", "--out", str(tmp_path / "o"),
        ])
        assert code == 2

    def test_missing_series(self, tmp_path):
        code = cli.main([
            "fit", "--series", str(tmp_path / "none.csv"), "--observable", "diameter",
        ])
        assert code == 2


def test_demo_config_passes_end_to_end(tmp_path):
    cfg = Path(__file__).resolve().parents[1] / "configs" / "contracting_cusp.cfg"
    out = tmp_path / "demo"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "violations.csv").read_text().splitlines()[1:]
    assert rows and all(line.endswith("True") for line in rows)
