import numpy as np
import pytest

from arhgof.cli import main
from arhgof.grid import kernel_from_csv, kernel_to_csv, series_from_csv
from arhgof.meptest import TestOutcome
from arhgof.simulate import exp_operator


@pytest.fixture
def series_csv(tmp_path):
    path = tmp_path / "y.csv"
    assert main(["simulate", "--n", "80", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_simulate(series_csv, tmp_path):
    series = series_from_csv(series_csv)
    assert series.values.shape == (80, 71)
    alt = tmp_path / "alt.csv"
    assert main(["simulate", "--n", "80", "--seed", "3", "--alternative", "--out", str(alt)]) == 0
    assert not np.array_equal(series_from_csv(alt).values, series.values)


def test_test_command(series_csv, tmp_path):
    out = tmp_path / "o.csv"
    assert main(["test", "--series", str(series_csv), "--np", "3", "--boot", "100", "--out", str(out)]) == 0
    outcome = TestOutcome.from_csv(out.read_text())
    assert outcome.p_values.size == 3 and outcome.mode == "specified"
    assert outcome.reject == (outcome.combined_p <= 0.05)


def test_test_misspecified_with_gamma0(series_csv, tmp_path, grid):
    g0 = tmp_path / "g0.csv"
    kernel_to_csv(exp_operator(grid), g0)
    out = tmp_path / "o.csv"
    args = ["test", "--series", str(series_csv), "--gamma0", str(g0), "--boot", "50",
            "--mode", "misspecified", "--out", str(out)]
    assert main(args) == 0
    assert TestOutcome.from_csv(out.read_text()).k_n >= 1


def test_estimate(series_csv, tmp_path):
    out = tmp_path / "g.csv"
    assert main(["estimate", "--series", str(series_csv), "--k-n", "3", "--out", str(out)]) == 0
    assert kernel_from_csv(out).entries.shape == (71, 71)


def test_mc_size_csv(tmp_path):
    out = tmp_path / "t.csv"
    args = ["mc-size", "--n", "30", "--np", "1,2", "--reps", "4", "--boot", "30", "--out", str(out)]
    assert main(args) == 0
    assert out.read_text().splitlines()[0] == "n,R,NP=1,NP=2"


def test_mc_power_markdown(capsys):
    args = ["mc-power", "--n", "30", "--np", "1", "--reps", "2", "--boot", "20", "--format", "markdown", "--stderr"]
    assert main(args) == 0
    assert capsys.readouterr().out.startswith("| n | NP=1 |")


@pytest.mark.parametrize(
    "args",
    [
        [],
        ["bogus"],
        ["test"],
        ["test", "--series", "/nonexistent.csv"],
        ["mc-size", "--n", "a,b"],
        ["mc-size", "--reps", "0"],
        ["simulate", "--config", "/nonexistent.cfg"],
    ],
)
def test_config_errors_exit_2(args, capsys):
    assert main(args) == 2


def test_numeric_error_exits_3(tmp_path, grid):
    # a constant series has a single positive eigenvalue
    path = tmp_path / "flat.csv"
    rows = ["t," + ",".join(f"node_{j}" for j in range(71))]
    rows += [f"{t}," + ",".join(["1.0"] * 71) for t in range(5)]
    path.write_text("\n".join(rows) + "\n")
    assert main(["estimate", "--series", str(path), "--k-n", "2"]) == 3
