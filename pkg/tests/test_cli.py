import json
import subprocess
import sys

import pytest

from otcompress.cli import main
from otcompress.io import emit_edgelist, make_fig2_tree

from conftest import FIXTURES


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def tree_file(tmp_path):
    p = tmp_path / "tree.txt"
    p.write_text(emit_edgelist(make_fig2_tree()))
    return p


def test_gen_tree_pipe_compress():
    gen = subprocess.run([sys.executable, "-m", "otcompress", "gen-tree"], capture_output=True, check=True)
    res = subprocess.run(
        [sys.executable, "-m", "otcompress", "compress", "-", "-k", "5"],
        input=gen.stdout, capture_output=True, check=True,
    )
    assert json.loads(res.stdout)["support"] == [0, 1, 2, 3, 4]


def test_compress_full_budget(tree_file, capsys):
    code, out, _ = run(["compress", str(tree_file), "-k", "21"], capsys)
    data = json.loads(out)
    assert code == 0 and data["support"] == list(range(21)) and len(data["kept_edges"]) == 20


def test_compress_dot(tree_file, capsys):
    code, out, _ = run(["compress", str(tree_file), "-k", "5", "--format", "dot"], capsys)
    assert code == 0 and out.startswith('digraph "compressed"')


def test_compress_config_and_override(tree_file, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("k = 21\nT = 3\n")
    code, out, _ = run(["compress", str(tree_file), "--config", str(cfg)], capsys)
    assert json.loads(out)["T"] == 3 and json.loads(out)["k"] == 21
    code, out, _ = run(["compress", str(tree_file), "--config", str(cfg), "-k", "5"], capsys)
    data = json.loads(out)
    assert (data["k"], data["T"]) == (5, 3)
    code, out, _ = run(["compress", str(tree_file), "--k-frac", "0.25"], capsys)
    assert json.loads(out)["k"] == 6


def test_compress_prior_and_labels(tmp_path, capsys):
    g = tmp_path / "g.txt"
    g.write_text("node 0 A\nnode 1 A\nnode 2 B\n0 1\n1 2\n")
    code, out, _ = run(["compress", str(g), "-k", "1", "--prior", "0.8,0.1,0.1", "--cost-mode", "label"], capsys)
    assert code == 0 and json.loads(out)["support"] == [0]
    code, _, err = run(["compress", str(g), "-k", "1", "--prior", "0.5,0.1,0.1"], capsys)
    assert code == 1 and "sum to 1" in err


def test_compress_dataset_directory(capsys):
    code, out, _ = run(["compress", str(FIXTURES / "toy"), "-k", "2"], capsys)
    data = json.loads(out)
    assert code == 0 and len(data["graphs"]) == 2
    assert all(len(r["support"]) <= 2 for r in data["graphs"])


def test_distance(tree_file, capsys):
    rho = ",".join(["0.1"] + ["0.125"] * 4 + ["0.025"] * 16)
    code, out, _ = run(["distance", str(tree_file), "--rho0", rho, "--rho1", rho], capsys)
    assert code == 0 and json.loads(out)["distance"] == 0.0


def test_distance_from_files_and_infeasible(tmp_path, capsys):
    g = tmp_path / "k2.txt"
    g.write_text("0 1 0.5\n")
    (tmp_path / "a").write_text("1 0\n")
    (tmp_path / "b").write_text("0.25\n0.75\n")
    code, out, _ = run(["distance", str(g), "--rho0", f"@{tmp_path / 'a'}", "--rho1", f"@{tmp_path / 'b'}"], capsys)
    assert json.loads(out)["distance"] == pytest.approx(0.375)
    code, out, _ = run(["distance", str(g), "--rho0", "1,0", "--rho1", "0,1", "--convention", "as-written"], capsys)
    data = json.loads(out)
    assert code == 0 and data["status"] == "infeasible" and data["distance"] is None


def test_project(tmp_path, capsys):
    code, out, _ = run(["project", "simplex", "--y", "0,0", "--eps", "1,0.5"], capsys)
    assert json.loads(out)["x"] == pytest.approx([0.8, 0.4])
    code, out, _ = run(["project", "capped", "--y", "2,2,-1", "-k", "1"], capsys)
    assert json.loads(out)["x"] == pytest.approx([0.5, 0.5, 0])
    g = tmp_path / "e.txt"
    g.write_text("0 1\n")
    code, out, _ = run(["project", "slab", "--y", "0,2", "--graph", str(g)], capsys)
    assert json.loads(out)["x"] == pytest.approx([0.5, 1.5])
    code, _, err = run(["project", "simplex", "--y", "0,0"], capsys)
    assert code == 1 and "--eps" in err


def test_certify(tmp_path, capsys):
    g = tmp_path / "g.txt"
    g.write_text("0 1 0.5\n1 2 1.0\n2 3 0.3\n0 3 1.5\n")
    code, out, _ = run(["certify", str(g), "--support", "0,1,2,3", "--prior", "0.1,0.4,0.3,0.2"], capsys)
    data = json.loads(out)
    assert code == 0 and data["exact"] and data["gamma"] > 0
    code, out, _ = run(["certify", str(g), "--support", "0,2", "--prior", "0.1,0.4,0.3,0.2"], capsys)
    assert not json.loads(out)["exact"]
    code, _, _ = run(["certify", str(g), "--support", "0,9"], capsys)
    assert code == 1


def test_batch(tmp_path, capsys):
    out_dir = tmp_path / "out"
    code, _, _ = run(["batch", str(FIXTURES / "toy"), "-o", str(out_dir), "-k", "2", "--cost-mode", "label"], capsys)
    assert code == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["compressed"] == 2 and summary["failed"] == []
    assert sorted(p.name for p in (out_dir / "reports").iterdir()) == ["1.json", "2.json"]
    assert (out_dir / "TOY_compressed" / "TOY_compressed_A.txt").exists()


def test_batch_workers_match_serial(tmp_path, capsys):
    args = [str(FIXTURES / "labeled20"), "--k-frac", "0.5", "--cost-mode", "label", "-T", "10"]
    assert run(["batch", *args, "-o", str(tmp_path / "a")], capsys)[0] == 0
    assert run(["batch", *args, "-o", str(tmp_path / "b"), "--workers", "2"], capsys)[0] == 0
    for name in ("summary.json", "reports/7.json", "LAB20_compressed/LAB20_compressed_A.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_batch_label_costs_need_labels(tmp_path, capsys):
    d = tmp_path / "d"
    d.mkdir()
    (d / "X_A.txt").write_text("1, 2\n2, 1\n")
    (d / "X_graph_indicator.txt").write_text("1\n1\n")
    code, _, _ = run(["batch", str(d), "-o", str(tmp_path / "o"), "-k", "1", "--cost-mode", "label"], capsys)
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert code == 1 and "label" in summary["failed"][0]["error"]


@pytest.mark.parametrize(
    "argv",
    [
        ["compress", "x", "--bogus"],
        ["nonsense"],
        [],
        ["compress", "{tree}", "-k", "0"],
        ["compress", "{tree}"],
        ["compress", "{tree}", "-k", "2", "--lambda", "-1"],
        ["compress", "/does/not/exist", "-k", "1"],
    ],
)
def test_input_errors_exit_1(argv, tree_file, capsys):
    argv = [a.replace("{tree}", str(tree_file)) for a in argv]
    code, _, err = run(argv, capsys)
    assert code == 1 and err


def test_solver_failure_exit_2(tree_file, capsys):
    code, _, err = run(["compress", str(tree_file), "-k", "3", "--steps", "0.1", "0.1", "1e8"], capsys)
    assert code == 2 and "solver failure" in err


def test_log_level_env(tree_file):
    res = subprocess.run(
        [sys.executable, "-m", "otcompress", "compress", str(tree_file), "-k", "3"],
        capture_output=True, env={"OTCOMPRESS_LOG_LEVEL": "INFO", "PATH": ""}, text=True,
    )
    assert res.returncode == 0 and "INFO" in res.stderr
