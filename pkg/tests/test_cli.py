import csv
import io

import pytest

from potchain.chain import read_snapshot, validate_chain
from potchain.cli import main, run_to_string


def test_run_prints_digest_and_summary():
    code, text = run_to_string(["run", "--seed", "3", "--rounds", "1"])
    assert code == 0
    lines = text.splitlines()
    assert lines[0].startswith("trace-digest ")
    assert "forks 0" in lines


def test_run_twice_same_output():
    argv = ["run", "--seed", "11", "--nodes", "5", "--rounds", "2"]
    assert run_to_string(argv) == run_to_string(argv)


def test_run_writes_outputs(tmp_path):
    code, _ = run_to_string(["run", "--seed", "1", "--rounds", "1", "--out", str(tmp_path)])
    assert code == 0
    for name in ("trace.log", "chain.potc", "config.cfg", "summary.json", "forks.csv"):
        assert (tmp_path / name).exists()
    assert validate_chain(read_snapshot(tmp_path / "chain.potc")).ok


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("nodes = 5\nrounds = 1\nseed = 4\n")
    code, _ = run_to_string(["run", "--config", str(cfg), "--nodes", "6", "--out", str(tmp_path / "o")])
    assert code == 0
    text = (tmp_path / "o" / "config.cfg").read_text()
    assert "nodes = 6" in text and "seed = 4" in text


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--bogus"],
        ["run", "--latency", "9"],
        ["run", "--theta", "3/2"],
        ["run", "--peering", "carrier-pigeon"],
        ["frobnicate"],
        ["charts", "--figure", "shuffle-bft", "--n", "2"],
        ["validate", "/nonexistent/chain.potc"],
        ["sweep", "--param", "seed", "--values", "1,2"],
    ],
)
def test_usage_errors_exit_2(argv):
    assert main(argv, io.StringIO()) == 2


def test_charts_shuffle_bft():
    code, text = run_to_string(["charts", "--figure", "shuffle-bft", "--n", "60"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["n"] for r in rows] == [str(n) for n in range(3, 61)]
    for r in rows:
        assert float(r["delta"]) == 1.0
    by_n = {int(r["n"]): r for r in rows}
    assert float(by_n[60]["epsilon"]) == 0.5
    assert float(by_n[60]["theta"]) == pytest.approx(1 / 3, abs=1e-6)
    # odd sizes round the group count up
    assert float(by_n[7]["epsilon"]) == pytest.approx(4 / 7, abs=1e-6)
    assert run_to_string(["charts", "--figure", "shuffle-bft", "--n", "60"])[1] == text


@pytest.mark.parametrize("figure", ["breakeven", "storage-base", "storage-all"])
def test_other_charts_stable(figure, tmp_path):
    argv = ["charts", "--figure", figure, "--tx-count", "20000", "--step", "5000"]
    a = run_to_string(argv)
    assert a[0] == 0 and a[1].count("\n") > 2
    assert run_to_string(argv) == a
    out = tmp_path / "c.csv"
    assert main(argv + ["--out", str(out)], io.StringIO()) == 0
    assert out.read_text() == a[1]


@pytest.fixture(scope="module")
def sim_snapshot(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["run", "--seed", "3", "--out", str(d)], io.StringIO()) == 0
    return d / "chain.potc"


def test_validate_good_snapshot(sim_snapshot):
    code, text = run_to_string(["validate", str(sim_snapshot)])
    assert code == 0 and "well-formed" in text


def test_validate_broken_snapshot(sim_snapshot, tmp_path):
    data = bytearray(sim_snapshot.read_bytes())
    data[len(data) // 2] ^= 0xFF
    bad = tmp_path / "bad.potc"
    bad.write_bytes(bytes(data))
    assert run_to_string(["validate", str(bad)])[0] == 1
    trunc = tmp_path / "trunc.potc"
    trunc.write_bytes(bytes(data[:100]))
    assert run_to_string(["validate", str(trunc)])[0] == 1


def test_prune_snapshot(sim_snapshot, tmp_path):
    out = tmp_path / "p.potc"
    code, text = run_to_string(["prune", str(sim_snapshot), "--signer", "gc", "--out", str(out)])
    assert code == 0
    removed = int(text.split()[1])
    assert removed > 0
    before, after = read_snapshot(sim_snapshot), read_snapshot(out)
    assert validate_chain(after).ok
    assert after.total_size() < before.total_size()


def test_inspect_kinds(sim_snapshot, tmp_path):
    code, text = run_to_string(["inspect", str(sim_snapshot)])
    assert code == 0 and text.startswith("height ")
    code, text = run_to_string(["inspect", str(sim_snapshot.parent / "trace.log")])
    assert code == 0 and text.startswith("events ")
    scn = tmp_path / "x.scn"
    scn.write_text("AT 10 CRASH 2\n")
    assert run_to_string(["inspect", str(scn)]) == (0, "AT 10 CRASH 2\n")


def test_sweep_rows(tmp_path):
    argv = ["sweep", "--param", "latency", "--values", "1,2", "--seeds", "2", "--rounds", "1", "--nodes", "4"]
    code, text = run_to_string(argv)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [(r["value"], r["seed"]) for r in rows] == [("1", "0"), ("1", "1"), ("2", "0"), ("2", "1")]
    assert all(r["forks"] == "0" for r in rows)
