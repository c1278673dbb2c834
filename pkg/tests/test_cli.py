"""CLI wiring: run directories, config echo reproducibility, exit codes."""

import numpy as np

from bregdecomp.cli import main
from bregdecomp.fieldio import read_csv, read_field


def run_cli(*args):
    return main(list(args))


class TestRun:
    def test_exp1_morozov_run_directory(self, tmp_path):
        out = tmp_path / "run1"
        code = run_cli("run", "--experiment", "exp1", "--algo", "morozov",
                       "--alpha", "400", "--seed", "7", "--size", "64",
                       "--max-outer", "3", "--inner-tol", "1e-6",
                       "--out", str(out))
        assert code == 0
        header, rows = read_csv(out / "trajectory.csv")
        assert header[0] == "l"
        assert 1 <= len(rows) <= 3
        for name in ("config.txt", "summary.txt", "u_true.field",
                     "v_stop.field", "x_final.field", "bound.csv"):
            assert (out / name).exists()

    def test_trajectory_row_cap(self, tmp_path):
        out = tmp_path / "run2"
        code = run_cli("run", "--experiment", "exp1", "--algo", "morozov",
                       "--seed", "3", "--size", "48", "--max-outer", "4",
                       "--no-halt", "--out", str(out))
        assert code == 0
        _, rows = read_csv(out / "trajectory.csv")
        assert len(rows) == 4

    def test_classic_bregman_summary_and_csv(self, tmp_path):
        out = tmp_path / "run3"
        code = run_cli("run", "--experiment", "exp1", "--algo",
                       "classic-bregman", "--alpha", "1600", "--beta", "4",
                       "--seed", "5", "--size", "64", "--tau", "1.001",
                       "--max-outer", "20", "--out", str(out))
        assert code == 0
        header, rows = read_csv(out / "bregman.csv")
        assert header == ["k", "residual", "g_value", "h_value", "objective"]
        assert len(rows) >= 1
        summary = (out / "summary.txt").read_text()
        assert "stop_index=" in summary

    def test_rerun_from_echoed_config_is_bitwise(self, tmp_path):
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert run_cli("run", "--experiment", "exp1", "--algo",
                       "single-step-morozov", "--seed", "11", "--size", "48",
                       "--out", str(out1)) == 0
        assert run_cli("run", "--config", str(out1 / "config.txt"),
                       "--out", str(out2)) == 0
        a = (out1 / "trajectory.csv").read_bytes()
        b = (out2 / "trajectory.csv").read_bytes()
        # the out directory differs in the echo; every data file is bitwise equal
        assert a == b
        assert (out1 / "u_final.field").read_bytes() == \
            (out2 / "u_final.field").read_bytes()

    def test_pgm_written_for_2d(self, tmp_path):
        out = tmp_path / "run4"
        code = run_cli("run", "--experiment", "exp2", "--algo",
                       "single-step-tikhonov", "--seed", "1", "--size", "32",
                       "--alpha", "100", "--out", str(out))
        assert code == 0
        assert (out / "u_final.pgm").exists()
        assert (out / "f_delta.pgm").read_bytes().startswith(b"P5\n32 32\n255\n")

    def test_figures_flag_renders_report(self, tmp_path):
        out = tmp_path / "run5"
        code = run_cli("run", "--experiment", "exp1", "--algo", "morozov",
                       "--seed", "2", "--size", "48", "--max-outer", "3",
                       "--no-halt", "--figures", "--out", str(out))
        assert code == 0
        assert (out / "figures" / "trajectory.png").exists()
        assert (out / "figures" / "components.png").exists()

    def test_report_subcommand(self, tmp_path):
        out = tmp_path / "run6"
        assert run_cli("run", "--experiment", "exp1", "--algo",
                       "single-step-morozov", "--seed", "2", "--size", "48",
                       "--out", str(out)) == 0
        assert run_cli("report", str(out)) == 0
        assert (out / "figures" / "components.png").exists()


class TestSweep:
    def test_small_sweep(self, tmp_path):
        out = tmp_path / "sw"
        code = run_cli("sweep", "--experiment", "exp1", "--seed", "4",
                       "--size", "48", "--alphas", "1:100:log:4",
                       "--mode", "morozov-single-step", "--out", str(out))
        assert code == 0
        header, rows = read_csv(out / "sweep.csv")
        assert header[0] == "alpha"
        assert len(rows) == 4
        alphas = [float(r[0]) for r in rows]
        assert alphas == sorted(alphas)

    def test_bad_grid_spec_is_config_error(self, tmp_path):
        code = run_cli("sweep", "--experiment", "exp1",
                       "--alphas", "nonsense", "--out", str(tmp_path / "x"))
        assert code == 1


class TestExitCodes:
    def test_unknown_experiment_exits_1(self, tmp_path):
        assert run_cli("run", "--experiment", "exp9",
                       "--out", str(tmp_path / "x")) == 1

    def test_unknown_flag_exits_1(self, tmp_path):
        assert run_cli("run", "--experiment", "exp1", "--bogus") == 1

    def test_solver_failure_exits_2(self, tmp_path):
        # an absurdly small iteration cap forces NonConverged
        code = run_cli("run", "--experiment", "exp1", "--algo", "morozov",
                       "--seed", "1", "--size", "64", "--max-inner", "60",
                       "--inner-tol", "1e-12",
                       "--out", str(tmp_path / "x"))
        assert code == 2

    def test_missing_config_file_exits_1(self, tmp_path):
        assert run_cli("run", "--config", str(tmp_path / "nope.txt")) == 1


class TestSwapRoles:
    def test_swap_roles_exchanges_components(self, tmp_path):
        out1 = tmp_path / "fwd"
        out2 = tmp_path / "swp"
        common = ["--experiment", "exp1", "--algo", "single-step-morozov",
                  "--seed", "6", "--size", "48"]
        assert run_cli("run", *common, "--out", str(out1)) == 0
        assert run_cli("run", *common, "--swap-roles", "--out", str(out2)) == 0
        # truths swap: u_true of the swapped run equals v_true of the plain run
        u2 = read_field(out2 / "u_true.field")
        v1 = read_field(out1 / "v_true.field")
        np.testing.assert_array_equal(u2.values, v1.values)
