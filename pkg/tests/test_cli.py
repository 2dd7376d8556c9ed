import re

import numpy as np
import pytest

from mcscan.cli import read_dataset, run, write_dataset
from mcscan.core import RegressionDataset


@pytest.fixture
def cusum_csv(tmp_path):
    path = tmp_path / "toy.csv"
    y = np.r_[np.zeros(50), 10 * np.ones(50)]
    write_dataset(path, RegressionDataset(np.ones((100, 1)), y))
    return path


@pytest.fixture
def no_change_csv(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "flat.csv"
    write_dataset(path, RegressionDataset(rng.standard_normal((200, 5)), rng.standard_normal(200)))
    return path


def test_detect_cusum_toy(cusum_csv, capsys):
    assert run(["detect", "--input", str(cusum_csv)]) == 0
    assert "change_points: 50" in capsys.readouterr().out


def test_infer_no_change(no_change_csv, capsys):
    code = run(["infer", "--input", str(no_change_csv), "--standardize", "--alpha", "0.1", "--B", "999"])
    out = capsys.readouterr().out
    assert code == 0
    assert "change_points: -" in out and "bands: 0" in out


def test_infer_given_change_point(cusum_csv, tmp_path, capsys):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((200, 4))
    y = X[:, 0] + rng.standard_normal(200)
    y[100:] += 2 * X[100:, 1]
    path = tmp_path / "one.tsv"
    path.write_text("\n".join("\t".join(f"{v:.17g}" for v in (y[t], *X[t])) for t in range(200)) + "\n")
    code = run(["infer", "-i", str(path), "--change-points", "100", "--B", "199", "--ci", "gauss"])
    out = capsys.readouterr().out
    assert code == 0 and "bands: 1" in out
    row = re.search(r"^1\t100\t.*$", out, re.M)
    assert row is not None and row.group(0).split("\t")[-1] == "2"


def test_simulate_m3_truth(tmp_path, capsys):
    out_dir = tmp_path / "sim"
    code = run(["simulate", "--scenario", "M3", "--n", "480", "--p", "900", "--reps", "1",
                "--seed", "7", "--output-dir", str(out_dir), "--threshold", "fixed:1e9"])
    assert code == 0
    assert (out_dir / "truth_0000.txt").read_text().strip() == "theta = 120,240,360"
    data = read_dataset(out_dir / "data_0000.csv")
    assert (data.n, data.p) == (480, 900)
    assert "scenario = M3" in (out_dir / "config.txt").read_text()


def test_round_trip_thread_invariant(tmp_path, capsys):
    args = ["simulate", "--scenario", "M1", "--n", "300", "--p", "50", "--reps", "2", "--seed", "3", "--single"]
    strip = lambda s: [ln.rsplit("\t", 1)[0] for ln in s.splitlines()]  # drop runtime column
    assert run(args + ["--threads", "1"]) == 0
    one = strip(capsys.readouterr().out)
    assert run(args + ["--threads", "3"]) == 0
    three = strip(capsys.readouterr().out)
    assert one == three


def test_threads_env(monkeypatch, cusum_csv, capsys):
    monkeypatch.setenv("MCSCAN_THREADS", "2")
    assert run(["detect", "-i", str(cusum_csv)]) == 0
    monkeypatch.setenv("MCSCAN_THREADS", "zero")
    assert run(["detect", "-i", str(cusum_csv)]) == 1


def test_path_and_estimate(cusum_csv, capsys):
    assert run(["path", "-i", str(cusum_csv)]) == 0
    assert "selected_change_points" in capsys.readouterr().out
    assert run(["estimate", "-i", str(cusum_csv), "--change-points", "50", "--lambda", "0"]) == 0
    assert "[delta]" in capsys.readouterr().out


def test_bench(capsys):
    assert run(["bench", "--grid-n", "100", "--grid-p", "5", "--reps", "1"]) == 0
    assert "[timings]" in capsys.readouterr().out


def test_header_detection(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("y,x1\n1,2\n3,4\n")
    data = read_dataset(path)
    assert data.y.tolist() == [1.0, 3.0] and data.X[:, 0].tolist() == [2.0, 4.0]


@pytest.mark.parametrize(
    "argv, code",
    [
        (["detect"], 1),
        (["nonsense"], 1),
        (["detect", "-i", "x.csv", "--threshold", "sometimes"], 1),
        (["detect", "-i", "/nonexistent/file.csv"], 2),
        (["simulate", "--scenario", "M3", "--n", "481"], 1),
    ],
)
def test_exit_codes(argv, code, capsys):
    assert run(argv) == code


def test_exit_code_bad_data(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,nan\n4,5\n")
    assert run(["detect", "-i", str(path)]) == 2


def test_exit_code_numerical(tmp_path, capsys):
    path = tmp_path / "short.csv"
    rng = np.random.default_rng(0)
    write_dataset(path, RegressionDataset(rng.standard_normal((100, 2)), rng.standard_normal(100)))
    code = run(["infer", "-i", str(path), "--change-points", "50,52", "--ci", "gauss", "--eps", "0.5",
                "--lambda", "0.1", "--eta", "1", "--B", "20"])
    assert code == 3
    assert "stage gamma" in capsys.readouterr().err
