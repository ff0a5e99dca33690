"""Command line behavior: subcommands, artifacts and exit codes."""

import shutil
import subprocess
import sys

import pytest

from phcosim.cli import EXIT_CERTIFICATE, EXIT_OK, EXIT_USAGE, main

TINY = "dt = 0.01\nT = 0.2\nbudgets = 0, 3\n"


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return str(path)


def test_no_command_prints_help(capsys):
    assert main([]) == EXIT_USAGE
    assert "phcosim" in capsys.readouterr().out


def test_bad_usage_exits_one():
    with pytest.raises(SystemExit) as excinfo:
        main(["run", "--budget", "three"])
    assert excinfo.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as excinfo:
        main(["frobnicate"])
    assert excinfo.value.code == EXIT_USAGE


def test_run_requires_exactly_one_mode(tiny_config, capsys):
    assert main(["run", "--config", tiny_config]) == EXIT_USAGE
    assert main(["run", "--config", tiny_config, "--budget", "3", "--monolithic"]) == EXIT_USAGE
    capsys.readouterr()


def test_run_missing_config_names_path(capsys):
    assert main(["run", "--budget", "3", "--config", "/no/such/file.cfg"]) == EXIT_USAGE
    assert "/no/such/file.cfg" in capsys.readouterr().err


def test_run_budget_passes_and_writes(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--config", tiny_config, "--budget", "3", "--out", str(out)])
    captured = capsys.readouterr().out
    assert code == EXIT_OK
    assert "certificates: PASS" in captured
    assert "passivity residual" in captured
    assert "fne margins" in captured
    assert (out / "trajectory_budget_3.csv").exists()
    assert (out / "trajectory_budget_3.csv.meta").exists()


def test_run_monolithic_passes(tiny_config, capsys):
    assert main(["run", "--config", tiny_config, "--monolithic"]) == EXIT_OK
    assert "run monolithic" in capsys.readouterr().out


def test_sweep_writes_artifacts(tiny_config, tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", tiny_config, "--out", str(out)])
    captured = capsys.readouterr().out
    assert code == EXIT_OK
    assert "budget 0" in captured and "budget 3" in captured
    for name in (
        "trajectory_monolithic.csv",
        "trajectory_budget_0.csv",
        "trajectory_budget_3.csv",
        "sweep_summary.csv",
        "plot_data.csv",
    ):
        assert (out / name).exists(), name
        if name.startswith("trajectory"):
            assert (out / (name + ".meta")).exists(), name


def test_certify_round_trip(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", tiny_config, "--budget", "3", "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    code = main(["certify", str(out / "trajectory_budget_3.csv")])
    captured = capsys.readouterr().out
    assert code == EXIT_OK
    assert "certificates: PASS" in captured


def test_certify_detects_mismatched_metadata(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--config", tiny_config, "--budget", "3", "--out", str(out)])
    main(["run", "--config", tiny_config, "--budget", "0", "--out", str(out)])
    capsys.readouterr()
    # metadata claims budget 0, table holds the budget-3 run
    shutil.copy(out / "trajectory_budget_0.csv.meta", out / "trajectory_budget_3.csv.meta")
    code = main(["certify", str(out / "trajectory_budget_3.csv")])
    assert code == EXIT_USAGE
    assert "does not match" in capsys.readouterr().err


def test_certify_missing_inputs(tmp_path, capsys):
    assert main(["certify", str(tmp_path / "gone.csv")]) == EXIT_USAGE
    orphan = tmp_path / "orphan.csv"
    orphan.write_text("t\n")
    assert main(["certify", str(orphan)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "gone.csv" in err
    assert "orphan.csv.meta" in err


def test_compare_self_is_zero(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--config", tiny_config, "--budget", "0", "--out", str(out)])
    capsys.readouterr()
    path = str(out / "trajectory_budget_0.csv")
    assert main(["compare", path, path]) == EXIT_OK
    assert "rms state error: 0.0" in capsys.readouterr().out
    assert main(["compare", path, str(tmp_path / "missing.csv")]) == EXIT_USAGE


def test_compare_rejects_mismatched_grids(tiny_config, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--config", tiny_config, "--budget", "0", "--out", str(out)])
    longer = tmp_path / "longer.cfg"
    longer.write_text("dt = 0.01\nT = 0.3\n")
    main(["run", "--config", str(longer), "--budget", "0", "--out", str(out / "b")])
    capsys.readouterr()
    code = main(
        ["compare", str(out / "trajectory_budget_0.csv"), str(out / "b" / "trajectory_budget_0.csv")]
    )
    assert code == EXIT_USAGE
    assert "grids" in capsys.readouterr().err


def test_certificate_violation_exits_three(tmp_path, capsys):
    # a reference impedance far above the subsystem impedances breaks the
    # gamma rule, so the frozen maps stop being firmly nonexpansive and
    # the margin certificate must flag the run
    bad = tmp_path / "bad.cfg"
    bad.write_text(TINY + "gamma = 10.0\n")
    code = main(["run", "--config", str(bad), "--budget", "3"])
    captured = capsys.readouterr().out
    assert code == EXIT_CERTIFICATE
    assert "certificates: FAIL" in captured


def test_console_script_entry_point():
    exe = shutil.which("phcosim")
    if exe is None:
        pytest.skip("console script not installed")
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "sweep" in proc.stdout


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "phcosim.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
