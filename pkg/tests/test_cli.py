import json
import subprocess
import sys

import numpy as np
import pytest

from gainclass.cli import main
from gainclass.core import GridSpec


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def four(tmp_path):
    p = tmp_path / "four.txt"
    p.write_text("# four points\n-5\n-4.9\n4.9\n5\n")
    return p


def test_classify_sign_split(four, tmp_path, capsys):
    out = tmp_path / "res"
    assert run("classify", four, "--out", out) == 0
    d = json.loads((tmp_path / "res.solution.json").read_text())
    assert d["certificate"]["passed"]
    rows = (tmp_path / "res.memberships.csv").read_text().splitlines()
    m1 = [float(r.split(",")[1]) for r in rows[1:]]
    assert m1[0] == m1[1] != m1[2] == m1[3]


def test_classify_deterministic(four, tmp_path):
    run("classify", four, "--seed", 4, "--out", tmp_path / "a")
    run("classify", four, "--seed", 4, "--out", tmp_path / "b")
    for suffix in (".solution.json", ".memberships.csv"):
        assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()


def test_empty_file(tmp_path, capsys):
    p = tmp_path / "e.txt"
    p.write_text("")
    assert run("classify", p) == 2


def test_parse_error_names_line(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("1\n2\nthree\n")
    assert run("classify", p) == 2
    assert "3" in capsys.readouterr().err


def test_collapse_exit(tmp_path, capsys):
    p = tmp_path / "same.txt"
    p.write_text("1\n1\n1\n")
    assert run("classify", p) == 3


def test_oracle(four, capsys):
    assert run("oracle", four) == 0
    d = json.loads(capsys.readouterr().out)
    assert [r[0] for r in d["memberships"]] == [1.0, 1.0, 0.0, 0.0]


def test_oracle_two_samples(tmp_path, capsys):
    p = tmp_path / "two.txt"
    p.write_text("0\n1\n")
    assert run("oracle", p) == 0
    assert [r[0] for r in json.loads(capsys.readouterr().out)["memberships"]] == [1.0, 0.0]


def test_oracle_too_large(tmp_path, capsys):
    p = tmp_path / "big.txt"
    p.write_text("".join(f"{v}\n" for v in range(25)))
    assert run("oracle", p) == 4
    assert "20" in capsys.readouterr().err


def test_certify_roundtrip(four, tmp_path, capsys):
    run("oracle", four, "--out", tmp_path / "o")
    assert run("certify", four, tmp_path / "o.oracle.json") == 0
    assert json.loads(capsys.readouterr().out)["passed"]


def test_certify_failure(four, tmp_path, capsys):
    run("oracle", four, "--out", tmp_path / "o")
    d = json.loads((tmp_path / "o.oracle.json").read_text())
    d["memberships"][2] = [1.0, 0.0]
    (tmp_path / "bad.json").write_text(json.dumps(d))
    assert run("certify", four, tmp_path / "bad.json") == 1


def test_grid(capsys):
    assert run("grid", 10000) == 0
    d = json.loads(capsys.readouterr().out)
    g = GridSpec.from_constants(10000)
    assert (d["m_n"], d["l_n"], d["w_n"]) == (g.m_bound, g.n_bins, g.bin_width)


def test_grid_with_type(four, capsys):
    assert run("grid", 4, "--input", four, "--constants", "3,0.1,0.2") == 0
    out = capsys.readouterr().out
    assert "k,count" in out


def test_bad_constants(capsys):
    assert run("grid", 100, "--constants", "1,0.3,0.3") == 2


def test_bounds(capsys):
    theta = '{"alpha":[0.5,0.5],"mu":[0,0],"var":[1,1]}'
    assert run("bounds", "--theta", theta, "--n", 100) == 0
    d = json.loads(capsys.readouterr().out)
    g = GridSpec.from_constants(100)
    assert set(d) == {"m_n", "l_n", "w_n", "lemma1_bound", "lemma2_rhs"}
    assert (d["m_n"], d["l_n"], d["w_n"]) == (g.m_bound, g.n_bins, g.bin_width)
    assert d["lemma1_bound"] == pytest.approx(4 * np.exp(-g.m_bound**2 / 2 + np.log(100)), rel=1e-10)


def test_bounds_missing_alpha(capsys):
    assert run("bounds", "--theta", '{"mu":[0,0],"var":[1,1]}', "--n", 100) == 2


def test_bounds_malformed(capsys):
    assert run("bounds", "--theta", "{not json", "--n", 100) == 2


PLAN = """
mode = consistency
seed = 5
theta_star.alpha = 0.5, 0.5
theta_star.mu = -3, 3
theta_star.var = 1, 1
n_values = {nv}
trials_per_n = 3
optimizer.restarts = 2
"""


def test_experiment_bad_order(tmp_path, capsys):
    p = tmp_path / "plan.cfg"
    p.write_text(PLAN.format(nv="100, 50"))
    assert run("experiment", p, "--out", tmp_path / "x") == 2
    assert "n_values" in capsys.readouterr().err


def test_experiment_outputs_deterministic(tmp_path, capsys):
    p = tmp_path / "plan.cfg"
    p.write_text(PLAN.format(nv="40, 80"))
    assert run("experiment", p, "--out", tmp_path / "a") == 0
    assert run("experiment", p, "--out", tmp_path / "b", "--threads", 2) == 0
    err = capsys.readouterr().err
    assert "N=40" in err and "N=80" in err
    for suffix in (".trials.csv", ".summary.json", ".plot.csv"):
        assert (tmp_path / f"a{suffix}").read_bytes() == (tmp_path / f"b{suffix}").read_bytes()


def test_experiment_list(capsys):
    assert run("experiment", "--list") == 0
    assert "theorem4_default" in capsys.readouterr().out


def test_module_entry(four):
    out = subprocess.run([sys.executable, "-m", "gainclass", "oracle", str(four)], capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["kind"] == "hard"
