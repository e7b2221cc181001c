import json

import numpy as np
import pytest
from scipy import stats

from treedens.cli import main
from treedens.histograms import read_csv, write_csv
from treedens.trees import SpanningTree


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def chain_csv(tmp_path):
    p = tmp_path / "chain.csv"
    assert run("synth", "--d", 4, "--tree", "chain", "--coupling", 0.9, "-n", 100_000, "--seed", 1,
               "--output", p) == 0
    return p


def test_fit_two_columns(tmp_path, rng, capsys):
    p = tmp_path / "d.csv"
    write_csv(p, rng.random((100, 2)), ["a", "b"])
    m = tmp_path / "m.json"
    assert run("fit", "--input", p, "--has-header", "--output", m) == 0
    doc = json.loads(m.read_text())
    assert doc["tree"] == [[1, 2]]
    assert doc["provenance"]["command"] == "fit"
    out = capsys.readouterr().out
    assert "1 2" in out and "h' =" in out and "timings" in out


def test_fit_deterministic_across_runs_and_workers(tmp_path, rng):
    p = tmp_path / "d.csv"
    write_csv(p, rng.normal(size=(2000, 5)), [f"c{k}" for k in range(5)])
    outs = []
    for k, w in enumerate([1, 4, 1]):
        m = tmp_path / f"m{k}.json"
        assert run("fit", "--input", p, "--has-header", "--output", m, "--workers", w,
                   "--mi-output", tmp_path / f"mi{k}.csv", "--tree-output", tmp_path / f"t{k}.txt") == 0
        outs.append((m.read_bytes(), (tmp_path / f"mi{k}.csv").read_bytes(), (tmp_path / f"t{k}.txt").read_bytes()))
    assert outs[0] == outs[1] == outs[2]


def test_fit_recovers_chain(tmp_path, chain_csv):
    t = tmp_path / "tree.txt"
    assert run("fit", "--input", chain_csv, "--has-header", "--output", tmp_path / "m.json", "--tree-output", t) == 0
    assert SpanningTree.from_text(t.read_text(), 4) == SpanningTree(4, ((0, 1), (1, 2), (2, 3)))


def test_sample_refit_roundtrip(tmp_path, chain_csv):
    m = tmp_path / "m.json"
    assert run("fit", "--input", chain_csv, "--has-header", "--output", m) == 0
    s = tmp_path / "s.csv"
    assert run("sample", "--model", m, "-m", 100_000, "--seed", 3, "--output", s) == 0
    m2 = tmp_path / "m2.json"
    assert run("fit", "--input", s, "--has-header", "--output", m2) == 0
    assert json.loads(m2.read_text())["tree"] == json.loads(m.read_text())["tree"]


def test_sample_zero_and_determinism(tmp_path, rng):
    p = tmp_path / "d.csv"
    write_csv(p, rng.random((300, 3)), ["x", "y", "z"])
    m = tmp_path / "m.json"
    run("fit", "--input", p, "--has-header", "--output", m)
    e = tmp_path / "e.csv"
    assert run("sample", "--model", m, "-m", 0, "--output", e) == 0
    assert e.read_text() == "x1,x2,x3\n"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("sample", "--model", m, "-m", 70_000, "--seed", 9, "--output", a, "--workers", 1)
    run("sample", "--model", m, "-m", 70_000, "--seed", 9, "--output", b, "--workers", 4)
    assert a.read_bytes() == b.read_bytes()
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert meta["config"] == {"m": 70_000, "seed": 9}


def test_sample_corrupt_model(tmp_path, capsys):
    m = tmp_path / "bad.json"
    m.write_text('{"d": 2}')
    assert run("sample", "--model", m, "-m", 5, "--output", tmp_path / "o.csv") == 2
    assert "invalid model" in capsys.readouterr().err


def test_eval_model_vs_itself(tmp_path, rng, capsys):
    p = tmp_path / "d.csv"
    write_csv(p, rng.random((500, 3)), ["x", "y", "z"])
    m = tmp_path / "m.json"
    run("fit", "--input", p, "--has-header", "--output", m)
    r = tmp_path / "r.json"
    assert run("eval", "--model", m, "--reference", m, "-m", 10_000, "--output", r) == 0
    rep = json.loads(r.read_text())
    assert rep["l1"] == 0.0 and rep["se"] == 0.0
    assert rep["model_sha256"] == rep["reference_sha256"]


def test_eval_methods_agree_d2(tmp_path, capsys):
    data = tmp_path / "d.csv"
    run("synth", "--d", 2, "--coupling", 0.8, "-n", 5000, "--seed", 2, "--output", data)
    m = tmp_path / "m.json"
    run("fit", "--input", data, "--has-header", "--output", m)
    truth = tmp_path / "d.csv.truth.json"
    mc, grid = tmp_path / "mc.json", tmp_path / "grid.json"
    assert run("eval", "--model", m, "--truth", truth, "--method", "mc", "-m", 400_000, "--output", mc) == 0
    assert run("eval", "--model", m, "--truth", truth, "--method", "grid", "--output", grid) == 0
    a, b = json.loads(mc.read_text()), json.loads(grid.read_text())
    assert abs(a["l1"] - b["l1"]) <= 3 * a["se"]


def test_eval_dimension_mismatch_and_grid_limit(tmp_path, rng):
    p3, p4 = tmp_path / "d3.csv", tmp_path / "d4.csv"
    write_csv(p3, rng.random((100, 3)), ["a", "b", "c"])
    write_csv(p4, rng.random((100, 4)), ["a", "b", "c", "d"])
    m3, m4 = tmp_path / "m3.json", tmp_path / "m4.json"
    run("fit", "--input", p3, "--has-header", "--output", m3)
    run("fit", "--input", p4, "--has-header", "--output", m4)
    assert run("eval", "--model", m3, "--reference", m4) == 2
    assert run("eval", "--model", m4, "--reference", m4, "--method", "grid") == 2


def test_fit_input_errors(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,4\n5,oops\n")
    assert run("fit", "--input", p, "--output", tmp_path / "m.json") == 2
    assert "row 3" in capsys.readouterr().err
    good = tmp_path / "good.csv"
    write_csv(good, np.random.default_rng(0).random((50, 4)), ["a", "b", "c", "d"])
    mask = tmp_path / "mask.txt"
    mask.write_text("1 2\n3 4\n")
    assert run("fit", "--input", good, "--has-header", "--output", tmp_path / "m.json", "--mask", mask) == 2
    assert "connect" in capsys.readouterr().err
    assert run("fit", "--input", tmp_path / "missing.csv", "--output", tmp_path / "m.json") == 2
    with pytest.raises(SystemExit) as exc:
        run("fit", "--input", good)
    assert exc.value.code == 2


def test_fit_mask_root_and_overrides(tmp_path, rng):
    good = tmp_path / "good.csv"
    write_csv(good, rng.random((400, 4)), ["a", "b", "c", "d"])
    mask = tmp_path / "mask.txt"
    mask.write_text("1 2\n2 3\n3 4\n")
    m = tmp_path / "m.json"
    assert run("fit", "--input", good, "--has-header", "--output", m, "--mask", mask, "--root", 4,
               "--h", 0.25, "--h-prime", 0.2) == 0
    doc = json.loads(m.read_text())
    assert doc["tree"] == [[1, 2], [2, 3], [3, 4]]
    assert doc["root_original_label"] == 4
    assert doc["h"] == 0.25
    assert doc["provenance"]["config"]["h_prime"] == 0.2


def test_experiment_independence(tmp_path, capsys):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert run("experiment", "--input", "independence-d4", "--output", out1, "--workers", 1) == 0
    stdout = capsys.readouterr().out
    assert stdout.startswith("PASS")
    rep = json.loads((out1 / "independence-d4-0-identification.json").read_text())
    assert [s["frequency"] for s in rep["summary"]] == [1.0, 1.0]
    assert run("experiment", "--input", "independence-d4", "--output", out2, "--workers", 4) == 0
    for f in out1.iterdir():
        assert f.read_bytes() == (out2 / f.name).read_bytes()


def test_experiment_chain_rate_bundled(tmp_path):
    assert run("experiment", "--input", "chain-d4-rate", "--output", tmp_path) == 0
    rep = json.loads((tmp_path / "chain-d4-rate-0-rate.json").read_text())
    assert -0.45 <= rep["slope"] <= -0.12


def test_experiment_threshold_failure_and_bad_spec(tmp_path):
    spec = {"name": "strict", "truth": {"family": "fgm", "d": 3, "tree": "chain", "couplings": 0.2},
            "experiments": [{"kind": "identification", "n_grid": [100], "reps": 2, "mc_samples": 500,
                             "thresholds": {"final_frequency_min": 1.01}}]}
    p = tmp_path / "strict.json"
    p.write_text(json.dumps(spec))
    assert run("experiment", "--input", p, "--output", tmp_path / "o") == 1
    checks = json.loads((tmp_path / "o" / "strict-checks.json").read_text())
    assert checks["passed"] is False
    assert run("experiment", "--input", "no-such-spec", "--output", tmp_path / "o") == 2
    spec["experiments"][0]["kind"] = "bogus"
    p.write_text(json.dumps(spec))
    assert run("experiment", "--input", p, "--output", tmp_path / "o") == 2


def test_synth_uniform_ks(tmp_path):
    p = tmp_path / "u.csv"
    assert run("synth", "--d", 3, "--coupling", 0.0, "-n", 1000, "--seed", 4, "--output", p) == 0
    data = read_csv(p, has_header=True)
    assert data.n == 1000
    for k in range(3):
        assert stats.kstest(data.values[:, k], "uniform").pvalue > 1e-3


def test_synth_empty_determinism_and_errors(tmp_path):
    e = tmp_path / "e.csv"
    assert run("synth", "--d", 3, "-n", 0, "--output", e) == 0
    assert e.read_text() == "x1,x2,x3\n"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("synth", "--d", 4, "--tree", "star", "--coupling", 0.5, -0.4, 0.7, "-n", 80_000, "--seed", 6,
        "--output", a, "--workers", 1)
    run("synth", "--d", 4, "--tree", "star", "--coupling", 0.5, -0.4, 0.7, "-n", 80_000, "--seed", 6,
        "--output", b, "--workers", 4)
    assert a.read_bytes() == b.read_bytes()
    ta = json.loads((tmp_path / "a.csv.truth.json").read_text())
    assert ta["couplings"] == [0.5, -0.4, 0.7]
    assert ta["provenance"]["data_sha256"]
    assert run("synth", "--d", 3, "--coupling", 1.0, "-n", 10, "--output", tmp_path / "x.csv") == 2
    tree = tmp_path / "t.txt"
    tree.write_text("1 3\n2 3\n")
    assert run("synth", "--d", 3, "--tree", tree, "--coupling", 0.3, "-n", 10, "--output", tmp_path / "y.csv") == 0
    assert json.loads((tmp_path / "y.csv.truth.json").read_text())["tree"] == [[1, 3], [2, 3]]
