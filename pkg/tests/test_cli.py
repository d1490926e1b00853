import hashlib
import json

import pytest

import boundedauction.cli as cli
from boundedauction.cli import main
from boundedauction.distributions import Uniform
from boundedauction.errors import CertificationError, SolverError
from boundedauction.profit import solve_profit_optimal
from boundedauction.reproduction import Row
from boundedauction.sequential import example_tree, tree_to_json

U = Uniform()


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_csv_and_manifest(capsys, tmp_path):
    man = tmp_path / "m.json"
    mech = tmp_path / "mech.json"
    code, out, _ = run(capsys, "solve", "--n", "2", "--k", "2", "--manifest", str(man), "--mechanism-out", str(mech))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "bidder,priority_rank,cut_index,cut"
    cuts = sorted(float(l.split(",")[3]) for l in lines[1:3])
    assert cuts == pytest.approx([1 / 3, 2 / 3])
    assert "welfare,pg,0.648148148148" in out
    doc = json.loads(man.read_text())
    assert doc["command"] == "solve" and doc["version"] == cli.version()
    assert doc["output_sha256"] == hashlib.sha256(out.encode()).hexdigest()
    # the written mechanism evaluates back to the same welfare
    code, out, _ = run(capsys, "eval", "--mechanism", str(mech), "--json")
    assert code == 0 and json.loads(out)["expected_welfare"] == pytest.approx(35 / 54)


def test_solve_profit_json(capsys):
    code, out, _ = run(capsys, "solve", "--objective", "profit", "--n", "2", "--k", "2", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["value"] == pytest.approx(solve_profit_optimal([U, U], 2, 2).value, abs=1e-12)
    assert doc["mechanism"]["modified"]


def test_solve_without_characterization(capsys):
    code, _, err = run(capsys, "solve", "--n", "3", "--k", "3")
    assert code == 1 and "--fallback" in err
    code, out, _ = run(capsys, "solve", "--n", "3", "--k", "6", "--fallback", "--json")
    assert code == 0 and json.loads(out)["branch"] == "quantile"


def test_usage_errors(capsys, tmp_path):
    with pytest.raises(SystemExit) as e:
        main(["solve", "--k", "x"])
    assert e.value.code == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"allocation": [1,\n')
    code, _, err = run(capsys, "eval", "--mechanism", str(bad))
    assert code == 1 and "line 2" in err
    code, _, err = run(capsys, "eval", "--mechanism", str(tmp_path / "missing.json"))
    assert code == 1 and "cannot read" in err
    code, _, _ = run(capsys, "solve", "--n", "2", "--dist", "nonsense")
    assert code == 1


def test_mc_eval_needs_seed_and_is_reproducible(capsys, tmp_path):
    mech = tmp_path / "mech.json"
    run(capsys, "solve", "--n", "2", "--k", "2", "--mechanism-out", str(mech))
    code, _, err = run(capsys, "eval", "--mechanism", str(mech), "--method", "mc")
    assert code == 1 and "--seed" in err
    args = ("eval", "--mechanism", str(mech), "--method", "mc", "--samples", "20000", "--seed", "3")
    a = run(capsys, *args)
    b = run(capsys, *args, "--workers", "2")
    assert a[0] == b[0] == 0 and a[1] == b[1]


def test_numerical_failure_exit_code(capsys, monkeypatch):
    def boom(*a, **k):
        raise SolverError("no bracket")

    monkeypatch.setattr(cli, "solve_welfare_2bidder", boom)
    code, _, err = run(capsys, "solve", "--n", "2")
    assert code == 2 and "numerical failure" in err


def test_certify(capsys, monkeypatch):
    code, out, _ = run(capsys, "certify", "--k", "2", "--restarts", "2")
    assert code == 0 and out.startswith("allocation_id,label")

    def fail(*a, **k):
        raise CertificationError("beaten", {"certified": False, "argmax": 0, "entries": []})

    monkeypatch.setattr(cli, "certify_2bidder_optimality", fail)
    code, out, err = run(capsys, "certify", "--k", "2", "--json")
    assert code == 2 and json.loads(out)["certified"] is False and "beaten" in err


def test_sequential_commands(capsys, tmp_path):
    tree = tmp_path / "tree.json"
    tree.write_text(tree_to_json(example_tree()))
    code, out, _ = run(capsys, "sequential-eval", "--tree", str(tree), "--json")
    assert code == 0 and json.loads(out)["expected_welfare"] == pytest.approx(21 / 32)
    code, out, _ = run(capsys, "flatten", "--tree", str(tree), "--json")
    doc = json.loads(out)
    assert code == 0 and doc["bits"] == [1, 2] and doc["within_bound"]


def test_reproduce(capsys, monkeypatch):
    code, out, _ = run(capsys, "reproduce", "two-bidder-1bit")
    assert code == 0 and out.startswith("table,quantity,relation")
    code, _, err = run(capsys, "reproduce", "nope")
    assert code == 1 and "available" in err
    monkeypatch.setattr(cli, "reproduce", lambda *a, **k: [Row("t", "q", 1.0, 2.0)])
    code, _, err = run(capsys, "reproduce", "two-bidder-1bit")
    assert code == 3 and "mismatch" in err
