import json
from pathlib import Path

import pytest

from rspool.cli import main

SMALL_CELL = """
[cell]
n_stations = 200
radius_m = 1000

[traffic]
t_ri_s = 300
lambda_d_per_s = 0.000666666666667

[protocol]
omega = 10
delta_c_pct = 50
t_r_s = 2.5
rs_duration_s = 0.0002

[deadlines]
tau_a_s = 5
tau_d_s = 60

[priors]
p_h1 = 0.005

[alarm.quake]
speed_m_per_s = 4000
event_time_s = 10
correlation = sqrtcap
d_max_m = 500

[simulation]
horizon_s = 125
bin_width_s = 0.005

[sweep]
omega_values = 1 5 10 20
delta_c_pcts = 25 50

[compare]
omega_values = 5 10 20
delta_c_pct = 50
"""


@pytest.fixture
def config_path(tmp_path) -> Path:
    path = tmp_path / "cell.ini"
    path.write_text(SMALL_CELL, encoding="utf-8")
    return path


def run_cli(*argv) -> int:
    return main(list(argv))


class TestTrafficCommand:
    def test_writes_curve_and_fit(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run_cli("traffic", "--config", str(config_path),
                       "--seed", "7", "--out", str(out)) == 0
        csv_text = (out / "activation_quake.csv").read_text()
        assert csv_text.splitlines()[0] == "bin_start_s,count"
        fit = json.loads((out / "fit_quake.json").read_text())
        assert set(fit) >= {"alpha", "beta", "t_span_s", "residual"}

    def test_requires_seed(self, config_path, tmp_path, capsys):
        assert run_cli("traffic", "--config", str(config_path),
                       "--out", str(tmp_path / "x")) == 1
        assert "error:seed-required" in capsys.readouterr().err

    def test_no_scenarios_error(self, tmp_path, capsys):
        cfg = tmp_path / "noalarm.ini"
        cfg.write_text("[cell]\nn_stations = 10\nradius_m = 100\n", encoding="utf-8")
        assert run_cli("traffic", "--config", str(cfg), "--seed", "1",
                       "--out", str(tmp_path / "o")) == 1
        assert "error:no-scenarios" in capsys.readouterr().err

    def test_missing_config_error(self, tmp_path, capsys):
        assert run_cli("traffic", "--config", str(tmp_path / "nope.ini"),
                       "--seed", "1", "--out", str(tmp_path)) == 1
        assert "error:config-missing" in capsys.readouterr().err


class TestAnalyzeCommand:
    def test_writes_report(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run_cli("analyze", "--config", str(config_path),
                       "--seed", "3", "--out", str(out)) == 0
        report = json.loads((out / "analysis.json").read_text())
        assert report["p_00"] + report["p_10"] == pytest.approx(1.0)
        assert report["e_c"] >= report["params"]["n"] / report["params"]["omega"]

    def test_infeasible_config_cites_worst_case(self, tmp_path, capsys):
        # worst-case pool for this cell runs 0.044 s, so 2.52 s cannot cover
        # the 2.5 s period plus the pool
        text = SMALL_CELL.replace("tau_a_s = 5", "tau_a_s = 2.52")
        cfg = tmp_path / "tight.ini"
        cfg.write_text(text, encoding="utf-8")
        assert run_cli("analyze", "--config", str(cfg), "--seed", "3",
                       "--out", str(tmp_path / "o")) == 1
        err = capsys.readouterr().err
        assert "error:infeasible-config" in err
        assert "worst-case" in err

    def test_schema_violation_names_key(self, tmp_path, capsys):
        text = SMALL_CELL.replace("omega = 10", "omega = ten")
        cfg = tmp_path / "bad.ini"
        cfg.write_text(text, encoding="utf-8")
        assert run_cli("analyze", "--config", str(cfg), "--seed", "3",
                       "--out", str(tmp_path / "o")) == 1
        assert "protocol.omega" in capsys.readouterr().err


class TestSimulateCommand:
    def test_writes_stats_and_histogram(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", str(config_path),
                       "--seed", "11", "--out", str(out)) == 0
        stats = json.loads((out / "scenario_stats.json").read_text())
        assert stats["pools_run"] == 50
        assert stats["unresolved_active"] == 0
        hist = (out / "delay_histogram.csv").read_text().splitlines()
        assert hist[0] == "kind,bin_start_s,count"
        assert len(hist) > 1

    def test_trace_option(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", str(config_path),
                       "--seed", "11", "--out", str(out), "--trace") == 0
        lines = (out / "pool_trace.jsonl").read_text().splitlines()
        assert len(lines) == 50
        first = json.loads(lines[0])
        assert {"window", "k_c", "decision", "total_rs"} <= set(first)

    def test_replications_override_horizon(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run_cli("simulate", "--config", str(config_path),
                       "--seed", "11", "--out", str(out),
                       "--replications", "8") == 0
        stats = json.loads((out / "scenario_stats.json").read_text())
        assert stats["pools_run"] == 8

    def test_byte_identical_reruns(self, config_path, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run_cli("simulate", "--config", str(config_path),
                           "--seed", "42", "--out", str(out)) == 0
        for name in ("scenario_stats.json", "delay_histogram.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


class TestSweepCommand:
    def test_writes_rows_and_argmin(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run_cli("sweep", "--config", str(config_path),
                       "--seed", "5", "--out", str(out)) == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0].startswith("omega,delta_c_pct")
        assert len(rows) == 1 + 4 * 2
        argmin = json.loads((out / "sweep_argmin.json").read_text())
        assert argmin["evaluation"] == "analytical"
        assert argmin["omega"] in (1, 5, 10, 20)

    def test_json_format(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run_cli("sweep", "--config", str(config_path),
                       "--seed", "5", "--out", str(out),
                       "--format", "json") == 0
        rows = json.loads((out / "sweep.json").read_text())
        assert len(rows) == 8
        assert {"omega", "delta_c_pct", "e_c_analytical"} <= set(rows[0])


class TestCompareNaiveCommand:
    def test_writes_table_and_summary(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert run_cli("compare-naive", "--config", str(config_path),
                       "--seed", "5", "--out", str(out)) == 0
        rows = (out / "compare_naive.csv").read_text().splitlines()
        assert rows[0] == "omega,e_c_adaptive,e_c_naive"
        assert len(rows) == 4
        summary = json.loads((out / "compare_naive_summary.json").read_text())
        assert summary["naive_over_adaptive_ratio"] >= 1.0


class TestSampleConfigs:
    def test_reference_cell_analyzes(self, tmp_path):
        assert run_cli("analyze", "--config", "configs/reference_cell.ini",
                       "--seed", "1", "--out", str(tmp_path)) == 0
        report = json.loads((tmp_path / "analysis.json").read_text())
        assert report["params"]["omega"] == 40

    def test_activation_curves_config(self, tmp_path):
        assert run_cli("traffic", "--config", "configs/activation_curves.ini",
                       "--seed", "2", "--out", str(tmp_path)) == 0
        for name in ("all_affected", "exp_decay", "sqrt_cap"):
            assert (tmp_path / f"activation_{name}.csv").exists()
            assert (tmp_path / f"fit_{name}.json").exists()
