import json

import numpy as np
import pytest

from schwarzpde.cli import main
from schwarzpde.fem import Equation, ProblemSpec, solve_direct
from schwarzpde.geometry import mesh_from_dict


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    rc = main(
        [
            "gen-shape", "--n-min", "4", "--n-max", "8", "--seed", "5",
            "--edge-length", "0.12", "--out", str(root / "mesh.json"),
        ]
    )
    assert rc == 0
    mesh_payload = json.loads((root / "mesh.json").read_text())
    mesh = mesh_from_dict(mesh_payload)
    rng = np.random.default_rng(1)
    spec = ProblemSpec(
        Equation.LAPLACE_DIRICHLET,
        {int(v): float(rng.uniform()) for v in mesh.boundary_vertices()},
    )
    (root / "problem.json").write_text(json.dumps(spec.to_dict()))
    return root, mesh, spec


def test_gen_shape_output_is_valid_mesh(workspace):
    root, mesh, _ = workspace
    payload = json.loads((root / "mesh.json").read_text())
    assert "polygon" in payload and len(payload["polygon"]) >= 4
    assert payload["flags"]["seed"] == 5
    assert mesh.n_vertices > 0


def test_solve_direct_and_error(workspace):
    root, mesh, spec = workspace
    rc = main(
        [
            "solve", "--method", "direct", "--mesh", str(root / "mesh.json"),
            "--problem", str(root / "problem.json"), "--out", str(root / "direct.json"),
        ]
    )
    assert rc == 0
    payload = json.loads((root / "direct.json").read_text())
    truth = solve_direct(mesh, spec)
    assert np.allclose(payload["values"], truth, atol=1e-12)
    rc = main(
        [
            "error", "--pred", str(root / "direct.json"),
            "--truth", str(root / "direct.json"),
        ]
    )
    assert rc == 0


def test_solve_sni_converges_and_exits_zero(workspace, capsys):
    root, mesh, spec = workspace
    rc = main(
        [
            "solve", "--method", "sni", "--mesh", str(root / "mesh.json"),
            "--problem", str(root / "problem.json"),
            "--k", "4", "--depth", "2", "--tau", "0.2", "--tol", "1e-9",
            "--max-iter", "1500", "--out", str(root / "sni.json"),
        ]
    )
    assert rc == 0
    out = json.loads((root / "sni.json").read_text())
    diag = json.loads((root / "sni.diag.json").read_text())
    assert diag["converged"] is True
    assert diag["flags"]["tau"] == 0.2
    truth = solve_direct(mesh, spec)
    err = np.linalg.norm(np.array(out["values"]) - truth) / np.linalg.norm(truth)
    assert err <= 1e-6


def test_solve_sni_nonconverged_exit_code(workspace):
    root, _, _ = workspace
    rc = main(
        [
            "solve", "--method", "sni", "--mesh", str(root / "mesh.json"),
            "--problem", str(root / "problem.json"),
            "--k", "4", "--depth", "1", "--tau", "0.1", "--tol", "1e-13",
            "--max-iter", "3", "--out", str(root / "short.json"),
        ]
    )
    assert rc == 1


def test_solve_rejects_bad_tau(workspace, capsys):
    root, _, _ = workspace
    rc = main(
        [
            "solve", "--method", "sni", "--mesh", str(root / "mesh.json"),
            "--problem", str(root / "problem.json"),
            "--k", "4", "--tau", "0.5", "--out", str(root / "bad.json"),
        ]
    )
    assert rc == 2
    captured = capsys.readouterr()
    assert captured.err.startswith("error: ConfigurationError:")


def test_solve_missing_file_is_single_line_error(tmp_path, capsys):
    rc = main(
        [
            "solve", "--method", "direct", "--mesh", str(tmp_path / "nope.json"),
            "--problem", str(tmp_path / "nope2.json"), "--out", str(tmp_path / "o.json"),
        ]
    )
    assert rc == 2
    err_lines = capsys.readouterr().err.strip().splitlines()
    assert len(err_lines) == 1 and err_lines[0].startswith("error: ")


def test_gen_data_cli(tmp_path):
    rc = main(
        [
            "gen-data", "--equation", "laplace_dirichlet", "--shapes", "1",
            "--per-shape", "2", "--resolution", "0.2", "--seed", "3",
            "--out-dir", str(tmp_path / "ds"),
        ]
    )
    assert rc == 0
    manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
    assert manifest["count"] == 2


def test_solve_heat_direct_and_spacetime(tmp_path, workspace):
    root, mesh, _ = workspace
    rng = np.random.default_rng(2)
    heat = ProblemSpec(
        Equation.HEAT,
        {int(v): float(rng.uniform()) for v in mesh.boundary_vertices()},
        alpha=1.0,
        initial_u0=rng.uniform(size=mesh.n_vertices),
        n_steps=8,
        dt=0.01,
    )
    (tmp_path / "heat.json").write_text(json.dumps(heat.to_dict()))
    rc = main(
        [
            "solve-heat", "--method", "direct", "--mesh", str(root / "mesh.json"),
            "--problem", str(tmp_path / "heat.json"), "--out", str(tmp_path / "rollout.json"),
        ]
    )
    assert rc == 0
    rollout = json.loads((tmp_path / "rollout.json").read_text())
    assert rollout["steps"] == 8
    rc = main(
        [
            "solve-heat", "--method", "sni", "--mesh", str(root / "mesh.json"),
            "--problem", str(tmp_path / "heat.json"),
            "--k-spatial", "2", "--k-temporal", "2", "--delta-t-overlap", "1",
            "--tau", "0.2", "--tol", "1e-8", "--out", str(tmp_path / "st.json"),
        ]
    )
    assert rc == 0
    st = json.loads((tmp_path / "st.json").read_text())
    err = np.linalg.norm(np.array(st["values"]) - np.array(rollout["values"]))
    err /= np.linalg.norm(rollout["values"])
    assert err <= 1e-4


def test_sweep_csv(workspace, tmp_path):
    root, _, _ = workspace
    rc = main(
        [
            "sweep", "--param", "tau", "--values", "0.1,0.2", "--repeat", "1",
            "--mesh", str(root / "mesh.json"), "--problem", str(root / "problem.json"),
            "--k", "4", "--stop-error", "1e-6", "--max-iter", "3000",
            "--out", str(tmp_path / "sweep.csv"),
        ]
    )
    assert rc == 0
    lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
    assert lines[0] == "param,value,repeat,iterations,final_error,wall_time"
    assert len(lines) == 3
    # larger tau must not need more iterations
    it_small = int(lines[1].split(",")[3])
    it_large = int(lines[2].split(",")[3])
    assert it_large <= it_small


def test_diag_csv_format(workspace, tmp_path):
    root, _, _ = workspace
    rc = main(
        [
            "solve", "--method", "sni", "--mesh", str(root / "mesh.json"),
            "--problem", str(root / "problem.json"),
            "--k", "3", "--depth", "1", "--tau", "0.3", "--max-iter", "30",
            "--tol", "1e-14", "--format", "csv", "--out", str(tmp_path / "s.json"),
        ]
    )
    assert rc in (0, 1)
    lines = (tmp_path / "s.diag.csv").read_text().strip().splitlines()
    assert lines[0] == "iteration,update_norm,error_vs_oracle"
    assert len(lines) == 31


def test_verify_cli_suite(tmp_path):
    rc = main(["verify", "--suite", "symmetry", "--out", str(tmp_path / "report.json")])
    assert rc == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["all_passed"] is True
    assert report["results"][0]["criterion"] == 5


def test_threads_env_fallback(workspace, tmp_path, monkeypatch):
    root, _, _ = workspace
    monkeypatch.setenv("SNI_THREADS", "2")
    rc = main(
        [
            "solve", "--method", "sni", "--mesh", str(root / "mesh.json"),
            "--problem", str(root / "problem.json"),
            "--k", "3", "--depth", "1", "--tau", "0.3", "--tol", "1e-8",
            "--max-iter", "500", "--out", str(tmp_path / "threaded.json"),
        ]
    )
    assert rc == 0
    # identical result to the single-thread run (fixed accumulation order)
    rc2 = main(
        [
            "solve", "--method", "sni", "--mesh", str(root / "mesh.json"),
            "--problem", str(root / "problem.json"),
            "--k", "3", "--depth", "1", "--tau", "0.3", "--tol", "1e-8",
            "--max-iter", "500", "--out", str(tmp_path / "single.json"),
        ]
    )
    a = json.loads((tmp_path / "threaded.json").read_text())["values"]
    b = json.loads((tmp_path / "single.json").read_text())["values"]
    assert a == b


def test_default_configuration_flags(workspace, tmp_path):
    # K=20, depth 2, tau=0.04 is the documented default operating point
    root, _, _ = workspace
    rc = main(
        [
            "solve", "--method", "sni", "--mesh", str(root / "mesh.json"),
            "--problem", str(root / "problem.json"),
            "--k", "20", "--depth", "2", "--tau", "0.04",
            "--max-iter", "40", "--tol", "1e-12",
            "--out", str(tmp_path / "k20.json"),
        ]
    )
    assert rc in (0, 1)  # executes; convergence not expected in 40 iterations
    diag = json.loads((tmp_path / "k20.diag.json").read_text())
    assert diag["iterations"] == 40 or diag["converged"]


def test_sweep_k_and_d_params(workspace, tmp_path):
    root, _, _ = workspace
    rc = main(
        [
            "sweep", "--param", "k", "--values", "2,4", "--repeat", "1",
            "--mesh", str(root / "mesh.json"), "--problem", str(root / "problem.json"),
            "--stop-error", "1e-5", "--max-iter", "3000",
            "--out", str(tmp_path / "k.csv"),
        ]
    )
    assert rc == 0
    rows = (tmp_path / "k.csv").read_text().strip().splitlines()
    assert len(rows) == 3
    rc = main(
        [
            "sweep", "--param", "d", "--values", "1,2", "--repeat", "1",
            "--mesh", str(root / "mesh.json"), "--problem", str(root / "problem.json"),
            "--k", "4", "--tau", "0.2", "--stop-error", "1e-5", "--max-iter", "3000",
            "--out", str(tmp_path / "d.csv"),
        ]
    )
    assert rc == 0
    assert len((tmp_path / "d.csv").read_text().strip().splitlines()) == 3
