import csv
import json
from pathlib import Path

import numpy as np
import pytest

from lppgeo.cli import main
from lppgeo.core import compute_field, load_parents
from lppgeo.env import EnvSpec

SCHEMA = json.loads((Path(__file__).resolve().parents[1] / "docs" / "result.schema.json").read_text())


def validate(path):
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.validate(json.loads(Path(path).read_text()), SCHEMA)


def test_tm_enumerate(capsys):
    assert main(["tm", "--m", "3", "--enumerate"]) == 0
    lines = capsys.readouterr().out.split()
    assert lines == [f"3:{i:x}" for i in range(8)]


def test_coexist_rejects_n1(capsys):
    assert main(["coexist", "--n", "1"]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "--n" in err


@pytest.mark.parametrize("argv", [
    ["coexist", "--n", "3"],
    ["simulate", "--size", "10"],
    ["geodesic", "--seed", "1"],
    ["simulate", "--seed", "1", "--bogus"],
    ["simulate", "--seed", "1", "--siz", "10"],
    ["nope"],
    ["tm", "--m", "8", "--enumerate"],
    ["witness", "--tree", "2:7"],
])
def test_flag_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage:" in capsys.readouterr().err


def test_size_overflow_exit_1(capsys):
    assert main(["simulate", "--seed", "1", "--size", "200000"]) == 1
    assert "error" in capsys.readouterr().err


def test_coexist_json(tmp_path, capsys):
    out = tmp_path / "out.json"
    argv = ["coexist", "--n", "2", "--sizes", "16,32,64", "--reps", "200", "--seed-base", "7",
            "--json", str(out)]
    assert main(argv) == 0
    validate(out)
    doc = json.loads(out.read_text())
    assert doc["experiment"] == "coexist"
    assert [p["N"] for p in doc["per_size"]] == [16, 32, 64]
    assert doc["violations"] == 0


def test_witness_extract_round_trip(tmp_path, capsys):
    w = tmp_path / "w.csv"
    for mask in range(8):
        assert main(["witness", "--tree", f"3:{mask:x}", "--eps1", "1", "--csv", str(w)]) == 0
        capsys.readouterr()
        assert main(["tm", "--extract", "--times", str(w)]) == 0
        assert capsys.readouterr().out.strip() == f"3:{mask:x}"


def test_witness_stdout(capsys):
    assert main(["witness", "--tree", "1:0"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows == [["x", "y", "time"], ["0", "0", "0.5"]]


def test_tm_extract_from_seed(capsys):
    from lppgeo.localtree import sample_Tm
    assert main(["tm", "--extract", "--m", "4", "--seed", "9"]) == 0
    assert capsys.readouterr().out.strip() == sample_Tm(EnvSpec(9), 4).to_str()


def test_tm_frequency_json(tmp_path, capsys):
    out = tmp_path / "tm.json"
    assert main(["tm", "--m", "2", "--seed-base", "1", "--reps", "500", "--json", str(out)]) == 0
    validate(out)


def test_simulate_outputs(tmp_path, capsys):
    p = tmp_path / "p.bin"
    diag = tmp_path / "d.csv"
    splits = tmp_path / "s.csv"
    bnd = tmp_path / "b.csv"
    argv = ["simulate", "--seed", "3", "--size", "64", "--emit-parents", str(p), "--csv", str(diag),
            "--roots-diagonal", "3", "--splits-csv", str(splits), "--boundary-csv", str(bnd)]
    assert main(argv) == 0
    with open(p, "rb") as fh:
        N, rows = load_parents(fh)
    f = compute_field(EnvSpec(3), 64)
    assert N == 64
    np.testing.assert_array_equal(rows, f.parents)
    drows = list(csv.DictReader(open(diag)))
    assert float(drows[10]["G"]) == f.diag_G[10]
    assert len(list(csv.DictReader(open(bnd)))) == 65
    assert next(csv.reader(open(splits))) == ["angle", "left_root", "right_root"]


def test_geodesic_and_interface_csv(tmp_path, capsys):
    g = tmp_path / "g.csv"
    i = tmp_path / "i.csv"
    assert main(["geodesic", "--seed", "4", "--to", "5,5", "--csv", str(g)]) == 0
    assert main(["interface", "--seed", "4", "--size", "32", "--csv", str(i)]) == 0
    grows = list(csv.DictReader(open(g)))
    assert (grows[0]["x"], grows[0]["y"]) == ("0", "0")
    assert (grows[-1]["x"], grows[-1]["y"]) == ("5", "5")
    irows = list(csv.DictReader(open(i)))
    assert len(irows) == 33
    assert all(int(r["x"]) + int(r["y"]) == int(r["k"]) for r in irows)


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed_base = 5\nreps = 40\nsizes = [16, 32, 64]\n')
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert main(["fluct", "--config", str(cfg), "--json", str(a)]) == 0
    assert json.loads(a.read_text())["config"]["reps"] == 40
    assert main(["fluct", "--config", str(cfg), "--reps", "20", "--json", str(b)]) == 0
    assert json.loads(b.read_text())["config"]["reps"] == 20
    validate(b)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("seed_base = 5\nfoo = 1\n")
    assert main(["fluct", "--config", str(cfg)]) == 2


def test_coalesce_and_oracle(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert main(["coalesce", "--seed-base", "1", "--reps", "20", "--sizes", "16,32", "--json", str(out)]) == 0
    validate(out)
    out2 = tmp_path / "o.json"
    assert main(["oracle-check", "--seed-base", "1", "--reps", "3", "--max-size", "4", "--json", str(out2)]) == 0
    validate(out2)


def test_worker_count_does_not_change_output(tmp_path, capsys):
    outs = []
    for w in ("1", "3"):
        path = tmp_path / f"w{w}.json"
        assert main(["coexist", "--n", "3", "--sizes", "16,32", "--reps", "100", "--seed-base", "2",
                     "--workers", w, "--json", str(path)]) == 0
        doc = json.loads(path.read_text())
        outs.append((doc["per_size"], doc["violations"]))
    assert outs[0] == outs[1]
