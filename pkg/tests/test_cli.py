import csv

import numpy as np
import pytest

from koopvamp.cli import run_cli
from koopvamp.tcca import load_model
from koopvamp.trajectory_store import TrajectoryCollection, read_meta, save_trajectories


def _run(capsys, *argv):
    code = run_cli([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text, header):
    lines = text.strip().splitlines()
    i = lines.index(header)
    return list(csv.DictReader(lines[i:]))


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run_cli(["simulate", "--system", "onedim", "--n-traj", "10", "--length", "500", "--seed", "7",
                    "--out", str(d)]) == 0
    return d


def _scores(text):
    return {(r["score_kind"], r["r"]): float(r["value"]) for r in _rows(text, "score_kind,r,k,value")}


def test_simulate_writes_directory(sim_dir):
    assert len(list(sim_dir.glob("*.csv"))) == 10
    meta = read_meta(sim_dir)
    assert float(meta["dt"]) == 1.0 and meta["system"] == "onedim" and meta["bounds"] == "-20.0:20.0"


def test_estimate_indicator_pipeline(sim_dir, tmp_path, capsys):
    model_path = tmp_path / "m.json"
    code, out, _ = _run(capsys, "estimate", "--data", sim_dir, "--basis", "indicator", "--m", 33, "--lag", 1,
                        "--k", 4, "--out", model_path)
    assert code == 0
    model = load_model(model_path)
    assert model.k == 4 and abs(model.singular_values[0] - 1) < 1e-8
    summary = _rows(out, "lag_steps,lag_time,m,w,k")[0]
    assert summary == {"lag_steps": "1", "lag_time": "1.0", "m": "33", "w": "inf", "k": "4"}
    printed = _scores(out)

    code, out, _ = _run(capsys, "score", "--model", model_path, "--data", sim_dir, "--score", "vampe")
    assert code == 0
    vampe = _scores(out)[("vamp-e", "")]
    assert abs(vampe - printed[("vamp-e", "")]) < 1e-10
    code, out, _ = _run(capsys, "score", "--model", model_path, "--data", sim_dir, "--score", "vampr", "--r", 2)
    assert abs(_scores(out)[("vamp-r", "2")] - vampe) < 1e-8


def test_estimate_rbf_optimized(sim_dir, tmp_path, capsys):
    code, out, _ = _run(capsys, "estimate", "--data", sim_dir, "--m", 12, "--optimize-w", "--w-tol", 0.05,
                        "--lag", 1, "--out", tmp_path / "r.json")
    assert code == 0
    model = load_model(tmp_path / "r.json")
    assert model.basis0.w == float(_rows(out, "lag_steps,lag_time,m,w,k")[0]["w"])
    assert np.all(model.singular_values <= 1 + 1e-10)


def test_truth_export(tmp_path, capsys):
    code, out, _ = _run(capsys, "truth", "--system", "onedim", "--k", 4, "--out", tmp_path, "--plot")
    assert code == 0
    row = _rows(out, "system,k,sum_sigma_sq,relative_error")[0]
    sigma = np.loadtxt(tmp_path / "sigma.csv", delimiter=",", skiprows=1)[:, 1]
    rel = np.sqrt(np.sum(sigma[4:] ** 2) / np.sum(sigma ** 2))
    assert abs(rel - float(row["relative_error"])) < 1e-12
    psi = np.loadtxt(tmp_path / "psi.csv", delimiter=",", skiprows=1)
    assert psi.shape == (2000, 11)
    mu = np.loadtxt(tmp_path / "mu.csv", delimiter=",", skiprows=1)
    assert abs(mu[:, 1].sum() - 1) < 1e-12
    for name in ("phi.csv", "sigma.png", "psi.png"):
        assert (tmp_path / name).stat().st_size > 0


def test_export_density(sim_dir, tmp_path, capsys):
    model_path = tmp_path / "m.json"
    assert run_cli(["estimate", "--data", str(sim_dir), "--basis", "indicator", "--m", "20", "--lag", "1",
                    "--k", "4", "--out", str(model_path)]) == 0
    code, _, _ = _run(capsys, "export-density", "--k", 4, "--stride", 20, "--model", model_path, "--data",
                      sim_dir, "--out", tmp_path / "dens", "--plot")
    assert code == 0
    true = np.loadtxt(tmp_path / "dens" / "density_true.csv", delimiter=",", skiprows=1)
    assert true.shape == (100 * 100, 3)
    assert (tmp_path / "dens" / "density_rank4.csv").exists()
    assert np.loadtxt(tmp_path / "dens" / "density_model.csv", delimiter=",", skiprows=1).shape == (400, 3)
    assert (tmp_path / "dens" / "density_true.png").exists()


def test_cv_report_and_plot(sim_dir, tmp_path, capsys):
    report = tmp_path / "cv.csv"
    code, out, _ = _run(capsys, "cv", "--data", sim_dir, "--basis", "indicator", "--m-grid", "5,10,20",
                        "--lag", 1, "--out", report, "--plot", tmp_path / "cv.png", "--truth", "onedim")
    assert code == 0 and "selected m=" in out
    head, tail = report.read_text().split("\n\n")
    assert head.splitlines()[0] == "theta_id,basis,m,w,k,fold,train_score,test_score"
    assert len(head.splitlines()) == 1 + 3 * 5
    assert tail.splitlines()[0] == "theta_id,mcv,selected"
    assert (tmp_path / "cv.png").stat().st_size > 0


def test_determinism(sim_dir, tmp_path, capsys):
    outs = []
    for i in range(2):
        _, out, _ = _run(capsys, "cv", "--data", sim_dir, "--m-grid", "4,8", "--w", 0.5, "--lag", 1,
                         "--threads", 1 + i)
        outs.append(out)
    assert outs[0] == outs[1]


@pytest.mark.parametrize("argv", [
    ["estimate", "--basis", "indicator", "--optimize-w", "--m", "10", "--lag", "1"],
    ["estimate", "--m", "10", "--lag", "1", "--frobnicate"],
    ["estimate", "--m", "10"],
    ["frobnicate"],
])
def test_usage_errors(sim_dir, tmp_path, capsys, argv):
    argv = argv + (["--data", str(sim_dir), "--out", str(tmp_path / "x.json")] if argv[0] == "estimate" else [])
    code, _, err = _run(capsys, *argv)
    assert code == 1 and err


def test_missing_data_is_usage_error(tmp_path, capsys):
    assert _run(capsys, "score", "--model", tmp_path / "none.json", "--data", tmp_path)[0] == 1


def test_numerical_failure_exit_code(sim_dir, tmp_path, capsys):
    model_path = tmp_path / "m.json"
    assert run_cli(["estimate", "--data", str(sim_dir), "--basis", "indicator", "--m", "8", "--lag", "1",
                    "--out", str(model_path)]) == 0
    flat = tmp_path / "flat"
    save_trajectories(TrajectoryCollection((np.full((30, 1), 2.5),), 1.0), flat)
    code, _, err = _run(capsys, "score", "--model", model_path, "--data", flat, "--score", "subspace")
    assert code == 2 and "SingularProjectionError" in err
