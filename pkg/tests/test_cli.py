import os

import pytest

from loadsync import cli, harness


def write_config(tmp_path, **overrides):
    config = harness.ScenarioConfig(**overrides)
    path = str(tmp_path / "config.txt")
    harness.write_config(config, path)
    return path


class TestSimulate:
    def test_successful_run(self, tmp_path, capsys):
        path = write_config(tmp_path, user_count=200, seed=0)
        out = str(tmp_path / "out")
        assert cli.main(["simulate", path, "--out", out]) == 0
        captured = capsys.readouterr().out
        assert "final_mean=" in captured and "final_sd=" in captured
        for filename in (harness.HISTORY_FILE, harness.EVENTS_FILE, harness.OMEGA_FILE,
                         harness.STABILITY_FILE, harness.CONFIG_FILE):
            assert os.path.exists(os.path.join(out, filename))

    def test_missing_config_exits_two(self, tmp_path):
        assert cli.main(["simulate", str(tmp_path / "nope.txt"),
                         "--out", str(tmp_path / "o")]) == 2

    def test_seed_override_changes_users_not_grid(self, tmp_path):
        path = write_config(tmp_path, user_count=150)
        out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
        assert cli.main(["simulate", path, "--seed", "1", "--out", out1]) == 0
        assert cli.main(["simulate", path, "--seed", "2", "--out", out2]) == 0
        h1 = (tmp_path / "o1" / "history.csv").read_bytes()
        h2 = (tmp_path / "o2" / "history.csv").read_bytes()
        assert h1 != h2
        c1 = harness.parse_config(str(tmp_path / "o1" / "config.txt"))
        c2 = harness.parse_config(str(tmp_path / "o2" / "config.txt"))
        assert (c1.grid_rows, c1.grid_cols, c1.spacing_m) == (c2.grid_rows, c2.grid_cols, c2.spacing_m)

    def test_refuses_to_overwrite_without_force(self, tmp_path):
        path = write_config(tmp_path, user_count=100)
        out = str(tmp_path / "out")
        assert cli.main(["simulate", path, "--out", out]) == 0
        assert cli.main(["simulate", path, "--out", out]) == 2
        assert cli.main(["simulate", path, "--out", out, "--force"]) == 0

    def test_unknown_flag_exits_two(self, tmp_path):
        path = write_config(tmp_path)
        with pytest.raises(SystemExit) as excinfo:
            cli.main(["simulate", path, "--bogus"])
        assert excinfo.value.code == 2

    def test_env_default_out(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
        path = write_config(tmp_path, user_count=100)
        assert cli.main(["simulate", path]) == 0
        assert os.path.exists(tmp_path / "envout" / "history.csv")


class TestAnalyze:
    def test_two_cell_conservative_stable(self, tmp_path, capsys):
        path = write_config(tmp_path, grid_rows=1, grid_cols=2, user_count=10)
        assert cli.main(["analyze", path, "--mode", "conservative",
                         "--f-prime", "-0.5", "--coupling", "-1",
                         "--out", str(tmp_path / "a")]) == 0
        out = capsys.readouterr().out
        assert "verdict: stable" in out

    def test_disconnected_topology_inconclusive(self, tmp_path, capsys):
        path = write_config(tmp_path, coverage_radius_m=200.0, user_count=10)
        assert cli.main(["analyze", path, "--mode", "discrete",
                         "--out", str(tmp_path / "a")]) == 0
        out = capsys.readouterr().out
        assert "verdict: inconclusive" in out
        assert "components: 16" in out

    def test_oversized_step_unstable(self, tmp_path, capsys):
        path = write_config(tmp_path, grid_rows=1, grid_cols=2, user_count=10)
        assert cli.main(["analyze", path, "--mode", "discrete", "--eps", "1.1",
                         "--out", str(tmp_path / "a")]) == 0
        out = capsys.readouterr().out
        assert "verdict: unstable" in out
        eta = float(next(ln for ln in out.splitlines() if ln.startswith("eta:")).split(":")[1])
        assert eta == pytest.approx(1.2, abs=1e-9)

    def test_report_written_to_file(self, tmp_path):
        path = write_config(tmp_path, user_count=10)
        out = str(tmp_path / "a")
        assert cli.main(["analyze", path, "--out", out]) == 0
        assert "verdict:" in (tmp_path / "a" / "analysis.txt").read_text()


class TestBound:
    def test_conservative_trace_prints_zero(self, tmp_path, capsys):
        path = write_config(tmp_path, user_count=200, seed=0, rho_th=1.0)
        out = str(tmp_path / "t")
        assert cli.main(["simulate", path, "--out", out]) == 0
        capsys.readouterr()
        assert cli.main(["bound", out]) == 0
        assert "V~ = 0" in capsys.readouterr().out

    def test_greedy_trace_bound(self, tmp_path, capsys):
        path = write_config(tmp_path, user_count=300, seed=0, policy="greedy", rounds=40)
        out = str(tmp_path / "t")
        assert cli.main(["simulate", path, "--out", out]) == 0
        capsys.readouterr()
        assert cli.main(["bound", out]) == 0
        printed = capsys.readouterr().out
        assert "gamma_sup=" in printed and "alpha_sup=" in printed
        assert "empirical_tail_sup=" in printed


class TestSweep:
    def test_cross_product_cells(self, tmp_path, capsys):
        path = write_config(tmp_path, user_count=100)
        out = str(tmp_path / "sweep")
        assert cli.main(["sweep", path, "--users", "100,150", "--policies", "alg1,alg3",
                         "--seeds", "2", "--out", out]) == 0
        table = (tmp_path / "sweep" / "aggregate.csv").read_text().strip().splitlines()
        assert len(table) == 1 + 4
        assert os.path.isdir(tmp_path / "sweep" / "users100_c0.25_alg1" / "seed0")
        assert os.path.isdir(tmp_path / "sweep" / "users150_c0.25_alg3" / "seed1")

    def test_accommodation_axis(self, tmp_path):
        path = write_config(tmp_path, user_count=100)
        out = str(tmp_path / "sweep")
        assert cli.main(["sweep", path, "--accommodations", "0.25,0.3,0.4",
                         "--seeds", "1", "--out", out]) == 0
        table = (tmp_path / "sweep" / "aggregate.csv").read_text().strip().splitlines()
        assert len(table) == 1 + 3

    def test_bad_policy_axis_exits_two(self, tmp_path):
        path = write_config(tmp_path)
        assert cli.main(["sweep", path, "--policies", "alg9",
                         "--out", str(tmp_path / "s")]) == 2

    def test_parallel_workers_match_serial(self, tmp_path):
        path = write_config(tmp_path, user_count=100)
        serial, parallel = str(tmp_path / "s1"), str(tmp_path / "s2")
        assert cli.main(["sweep", path, "--users", "100,120", "--seeds", "1",
                         "--out", serial]) == 0
        assert cli.main(["sweep", path, "--users", "100,120", "--seeds", "1",
                         "--workers", "2", "--out", parallel]) == 0
        assert ((tmp_path / "s1" / "aggregate.csv").read_bytes()
                == (tmp_path / "s2" / "aggregate.csv").read_bytes())
