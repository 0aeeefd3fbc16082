import json

import pytest

from adapted_ot.cli import cli_main
from adapted_ot.metrics import aw_dist
from adapted_ot.process import E1, E2, E3, isomorphic
from adapted_ot.serialization import dump_json, load_tree, tree_to_json


@pytest.fixture
def trees(tmp_path):
    out = {}
    for name, x in (("e1", E1()), ("e2", E2()), ("e3", E3())):
        path = tmp_path / f"{name}.json"
        path.write_text(dump_json(tree_to_json(x)))
        out[name] = str(path)
    return out


def test_dist_aw(trees, capsys):
    assert cli_main(["dist", "--metric", "aw", "--p", "1", trees["e1"], trees["e2"]]) == 0
    out = capsys.readouterr().out.strip()
    assert out == "1.0"
    assert float(out) == float(aw_dist(E1(), E2(), 1).value)


@pytest.mark.parametrize("metric,expect", [("w", 0.0), ("cw", 1.0), ("scw", 1.0), ("aw-lp", 1.0), ("vsym", 0.0)])
def test_dist_metrics(trees, capsys, metric, expect):
    assert cli_main(["dist", "--metric", metric, trees["e1"], trees["e2"]]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(expect)


def test_dist_json_report(trees, capsys):
    assert cli_main(["dist", "--json", trees["e1"], trees["e3"]]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["value"] == 0 and doc["coupling"]["shape"] == [2, 4]


def test_quotient(trees, capsys, tmp_path):
    assert cli_main(["quotient", trees["e3"]]) == 0
    path = tmp_path / "q.json"
    path.write_text(capsys.readouterr().out)
    assert isomorphic(load_tree(str(path)), E1())


def test_stats(trees, capsys):
    assert cli_main(["stats", "--kind", "hellwig", trees["e2"]]) == 0
    assert len(json.loads(capsys.readouterr().out)["atoms"]) == 2
    assert cli_main(["stats", "--kind", "markov", "--n", "1", trees["e1"]]) == 0


def test_check(trees, capsys):
    assert cli_main(["check", trees["e1"], trees["e2"], trees["e3"]]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "metric chain" in out


def test_validate(tmp_path, trees, capsys):
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{ not json")
    assert cli_main(["validate", str(garbage)]) == 1
    assert "garbage.json:1:3" in capsys.readouterr().err
    assert cli_main(["validate", trees["e1"]]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"N": 1, "d": 1, "root": {"children": [{"p": 2, "value": [0]}]}}')
    assert cli_main(["validate", "--kind", "tree", str(bad)]) == 1


def test_usage_errors(trees):
    assert cli_main(["dist", "--bogus", trees["e1"], trees["e2"]]) == 64
    assert cli_main([]) == 64
    assert cli_main(["converge"]) == 64


def test_converge(capsys, tmp_path):
    assert cli_main(["converge", "--family", "leaky-bet", "--grid", "1", "2", "3",
                     "--threshold", "0.5", "--out", str(tmp_path / "r")]) == 0
    assert "AW-limit E2" in capsys.readouterr().out
    assert (tmp_path / "r.csv").read_text().startswith("family,k,metric,p,limit_id,value,runtime_ms")


def test_converge_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"family": "leaky-bet", "grid": [1, "x"]}')
    assert cli_main(["converge", str(cfg)]) == 1
