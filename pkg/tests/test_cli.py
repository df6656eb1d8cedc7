import csv
import io
import json
import math

import pytest

from bethezeta.cli import (ConfigError, ExperimentConfig, main, parse_beta_grid, parse_family,
                           run_command)
from bethezeta.factor_graph import write_graph
from bethezeta.families import ising_cycle


def run(tmp_path, *argv, name="out.csv"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    text = out.read_text() if out.exists() else ""
    return code, text, list(csv.DictReader(io.StringIO(text)))


def test_compare_tree_rows(tmp_path):
    code, text, rows = run(tmp_path, "compare", "--family", "random-tree:7/3", "--instances", "3",
                           "--beta-grid", "0.5:1.5:3")
    assert code == 0 and len(rows) == 9
    for r in rows:
        assert float(r["err_bethe"]) < 1e-8 and float(r["err_ab1"]) < 1e-8
        assert r["converged"] == "true" and r["seed"] == "0" and len(r["config_hash"]) == 12


def test_compare_cycle_ratio_shrinks(tmp_path):
    code, _, rows = run(tmp_path, "compare", "--family", "ising-cycle:6",
                        "--beta-grid", "0.05:0.4:4", "--estimators", "exact,bethe,ab1")
    assert code == 0
    ratios = [float(r["ratio"]) for r in rows]
    assert ratios == sorted(ratios) and ratios[0] < 0.01


def test_deterministic_and_worker_independent(tmp_path):
    argv = ["zeta", "--family", "random-pairwise:5/3/0.6", "--instances", "2",
            "--beta", "0.5", "--beta", "1.0", "--seed", "4"]
    _, a, _ = run(tmp_path, *argv, name="a.csv")
    _, b, _ = run(tmp_path, *argv, name="b.csv")
    _, c, _ = run(tmp_path, *argv, "--workers", "2", name="c.csv")
    assert a == b == c
    _, d, _ = run(tmp_path, *argv[:-1], "5", name="d.csv")
    assert d != a


def test_float_format(tmp_path):
    _, _, rows = run(tmp_path, "exact", "--family", "ising-cycle:5", "--beta", "0.3")
    ref = math.log((2 * math.cosh(0.3)) ** 5 + (2 * math.sinh(0.3)) ** 5)
    assert float(rows[0]["log_z_brute"]) == pytest.approx(ref, abs=1e-13)
    assert rows[0]["beta"] == format(0.3, ".17g")
    assert rows[0]["log_z_transfer"] and rows[0]["log_z_high_temp"]


def test_graph_file_and_config(tmp_path):
    path = tmp_path / "g.json"
    write_graph(ising_cycle(4, 1.0), path)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"graph": str(path), "beta_grid": "0.2:0.4:2", "restarts": 2}))
    code, _, rows = run(tmp_path, "loopseries", "--config", str(cfg))
    assert code == 0 and len(rows) == 2
    for r in rows:
        assert float(r["series_binary"]) == pytest.approx(float(r["excess"]), abs=1e-10)
        assert float(r["orthogonality_residual"]) < 1e-10
    code, _, rows = run(tmp_path, "cover", "--config", str(cfg), "--Ms", "1,2",
                        "--beta", "0.3")
    assert code == 0 and [r["M"] for r in rows] == ["1", "2"]


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n "family": "ising-cycle:4",\n "beta": 0.1,\n}')
    assert main(["compare", "--config", str(bad)]) == 1
    assert "bad.json:4" in capsys.readouterr().err
    unknown = tmp_path / "unknown.json"
    unknown.write_text('{\n "family": "ising-cycle:4",\n "colour": 1\n}')
    assert main(["compare", "--config", str(unknown)]) == 1
    assert "unknown.json:3" in capsys.readouterr().err
    assert main(["compare", "--family", "ising-cycle:4", "--beta", "0"]) == 1
    assert main(["compare", "--family", "ising-cycle:4", "--beta", "0.3", "--beta", "0.2"]) == 1
    assert main(["compare", "--family", "nope:3"]) == 1
    assert main(["compare", "--graph", str(tmp_path / "missing.json")]) == 1
    assert main(["compare", "--family", "ising-cycle:4", "--estimators", "magic"]) == 1


def test_bound_exit_code(tmp_path):
    code, _, rows = run(tmp_path, "compare", "--family", "random-pairwise:32/2/0.1",
                        "--beta", "0.1", "--estimators", "exact,bethe")
    assert code == 2 and rows[0]["status"] == "bound_exceeded"


def test_prime_cycle_bound_keeps_other_columns(tmp_path):
    code, _, rows = run(tmp_path, "zeta", "--family", "ising-torus:3x3", "--beta", "0.1",
                        "--max-len", "40", "--restarts", "1")
    assert code == 2
    assert rows[0]["status"] == "bound_exceeded" and rows[0]["log_zeta_prime"] == ""
    assert rows[0]["log_zeta_bass"] != ""


def test_invalid_family_argument_is_config_error(tmp_path, capsys):
    code, text, _ = run(tmp_path, "cover", "--family", "ising-torus:2x2", "--workers", "2")
    assert code == 1 and text == ""
    assert "torus sides" in capsys.readouterr().err


def test_numerical_exit_code_writes_partial_csv(tmp_path):
    beta = math.atanh(1 / 3)  # paramagnetic torus point sits exactly at det(I - M) = 0
    code, _, rows = run(tmp_path, "compare", "--family", "ising-torus:3x3", "--beta", "0.1",
                        "--beta", str(beta), "--estimators", "bethe,ab1", "--restarts", "1")
    assert code == 3
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"] in ("zeta_divergent", "bp_not_converged")


def test_parsers():
    assert parse_family("ising-torus:3x4") == ("ising-torus", [3, 4])
    assert parse_family("random-pairwise:6/3/0.5") == ("random-pairwise", [6, 3, 0.5])
    assert parse_family("theta") == ("theta", [1, 2, 3])
    assert parse_family("random-tree:8") == ("random-tree", [8, 2])
    assert parse_beta_grid("0.1:0.3:3") == pytest.approx([0.1, 0.2, 0.3])
    with pytest.raises(ConfigError):
        parse_beta_grid("0.1:0.3")
    with pytest.raises(ConfigError):
        ExperimentConfig(family="theta", estimators=[]).validate()


def test_config_hash_ignores_output():
    a = ExperimentConfig(family="theta", out="x.csv", workers=3)
    b = ExperimentConfig(family="theta")
    assert a.hash() == b.hash()
    assert ExperimentConfig(family="theta", seed=1).hash() != b.hash()
    text, code = run_command("exact", b.validate())
    assert code == 0 and text.startswith("instance,beta,")
