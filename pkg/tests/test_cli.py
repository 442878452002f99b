import pytest

from qbattery.cli import EXIT_INVALID, EXIT_INVARIANT, EXIT_OK, build_parser, main


def test_optimal_prints_summary(capsys):
    assert main(["optimal"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "tau0 = 1.1655611" in out and "p_inc_max = 0.72461" in out
    assert "theta0,tau_ridge,tau_ridge_linear" in out


def test_trajectory_subcommand_writes_files(tmp_path, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("n_levels_top = 20\nn_atoms = 2\ntau = pi/8\nsteps = 10\n")
    code = main(["--config", str(cfg), "--out", str(tmp_path / "out"), "trajectory",
                 "--set", "polar_angle=pi/2"])
    assert code == EXIT_OK
    assert (tmp_path / "out" / "trajectory.csv").exists()
    assert (tmp_path / "out" / "trajectory.csv.meta.json").exists()


def test_global_flags_after_subcommand(tmp_path):
    code = main(["scan", "--out", str(tmp_path), "--threads", "1",
                 "--set", "n_levels_top=10", "--set", "n_atoms=1", "--set", "steps=3",
                 "--set", "theta_count=2", "--set", "tau_count=2"])
    assert code == EXIT_OK
    assert len((tmp_path / "scan.csv").read_text().splitlines()) == 5


def test_scan_command_honours_sweep_scenario(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("scenario = sweep_na\nn_levels_top = 10\nn_atoms_list = 1, 2\ntau = 0.5\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path), "scan"]) == EXIT_OK
    assert (tmp_path / "sweep_na.csv").exists()


@pytest.mark.parametrize("argv", [
    ["trajectory", "--set", "bogus=1"],
    ["trajectory", "--set", "n_atoms=0"],
    ["--config", "/nonexistent/cfg", "trajectory"],
    ["--tolerance", "-1", "trajectory"],
])
def test_invalid_input_exits_1(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_INVALID
    assert "error:" in capsys.readouterr().err


def test_invariant_failure_exits_2(tmp_path, capsys):
    # an absurdly tight tolerance turns round-off into an invariant failure;
    # the diagonal charger avoids the eigenvalue check on the input state
    code = main(["--tolerance", "1e-30", "--out", str(tmp_path), "trajectory",
                 "--set", "n_levels_top=20", "--set", "n_atoms=3", "--set", "steps=5",
                 "--set", "tau=0.7", "--set", "coherence_factor=0"])
    assert code == EXIT_INVARIANT
    assert "invariant" in capsys.readouterr().err


def test_parser_lists_all_subcommands():
    help_text = build_parser().format_help()
    for name in ("trajectory", "scan", "figure2", "figure3", "figure4", "figure5", "optimal"):
        assert name in help_text
