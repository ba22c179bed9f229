"""CLI subcommands: generate, solve, train, evaluate, ttest."""
import json
import os

import pytest

from csplab import gnn
from csplab.cli import main
from csplab.network import ConstraintNetwork, save_instance


def test_generate_and_determinism(tmp_path, capsys):
    out1 = tmp_path / "c1"
    out2 = tmp_path / "c2"
    assert main(["generate", "--preset", "D1", "--n", "10", "--count", "4",
                 "--seed", "3", "--out", str(out1)]) == 0
    assert main(["generate", "--preset", "D1", "--n", "10", "--count", "4",
                 "--seed", "3", "--out", str(out2)]) == 0
    m1 = (out1 / "manifest.txt").read_text()
    assert m1 == (out2 / "manifest.txt").read_text()
    assert len(m1.strip().splitlines()) == 4
    for name in m1.split():
        if name.endswith(".csp"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    assert (out1 / "run.json").exists()


def test_generate_d2_writes_arity3(tmp_path):
    out = tmp_path / "c"
    assert main(["generate", "--preset", "D2", "--n", "9", "--count", "2",
                 "--out", str(out)]) == 0
    from csplab.network import load_instance

    files = [f for f in os.listdir(out) if f.endswith(".csp")]
    for f in files:
        net = load_instance(out / f)
        assert all(c.arity == 3 for c in net.constraints)


def sat_instance(tmp_path):
    net = ConstraintNetwork([[0, 1], [0, 1]], [((0, 1), [(0, 0), (1, 1)])])
    path = tmp_path / "sat.csp"
    save_instance(net, path)
    return path


def unsat_instance(tmp_path):
    net = ConstraintNetwork([[0, 1], [0, 1]], [((0, 1), [])])
    path = tmp_path / "unsat.csp"
    save_instance(net, path)
    return path


def test_solve_exit_codes_and_record(tmp_path, capsys):
    code = main(["solve", str(sat_instance(tmp_path)), "--policy", "mindom"])
    rec = json.loads(capsys.readouterr().out.strip())
    assert code == 0
    assert rec["solved"] == "sat"
    assert rec["solution"] in ([0, 0], [1, 1])

    code = main(["solve", str(unsat_instance(tmp_path)), "--policy", "mindom"])
    rec = json.loads(capsys.readouterr().out.strip())
    assert code == 1
    assert rec["nodes"] == 1

    hard = tmp_path / "hard.csp"
    from csplab import rb

    save_instance(rb.generate(rb.preset("D1", 10, seed=1)), hard)
    code = main(["solve", str(hard), "--policy", "mindom", "--cutoff-nodes", "1"])
    rec = json.loads(capsys.readouterr().out.strip())
    assert code == 2
    assert rec["solved"] == "cutoff"


def test_solve_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.csp"
    bad.write_text("CSPINST 1\nvars 1\ndom 0 1 zero\n")
    code = main(["solve", str(bad)])
    err = capsys.readouterr().err
    assert code == 3
    assert "line 3" in err


def test_solve_trace_written(tmp_path, capsys):
    trace = tmp_path / "t.trace"
    main(["solve", str(sat_instance(tmp_path)), "--policy", "mindom",
          "--trace", str(trace)])
    capsys.readouterr()
    lines = trace.read_text().strip().splitlines()
    assert lines and all(line.startswith("T ") for line in lines)


def test_ttest_command(tmp_path, capsys):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("1\n2\n3\n")
    b.write_text("2\n3\n4\n")
    assert main(["ttest", "--a", str(a), "--b", str(b)]) == 0
    rec = json.loads(capsys.readouterr().out.strip())
    assert rec["p_value"] == 0.0  # constant negative shift


def test_evaluate_command(tmp_path, capsys):
    corpus = tmp_path / "c"
    main(["generate", "--preset", "D1", "--n", "10", "--count", "4",
          "--seed", "5", "--out", str(corpus)])
    capsys.readouterr()
    out = tmp_path / "run"
    assert main([
        "evaluate", "--corpus", str(corpus), "--policies", "mindom,domddeg",
        "--reference", "domddeg", "--out", str(out),
    ]) == 0
    assert (out / "instances.csv").exists()
    assert (out / "summary.csv").exists()
    assert (out / "table.txt").exists()
    text = capsys.readouterr().out
    assert "Heuristic" in text

    with pytest.raises(ValueError, match="reference"):
        main([
            "evaluate", "--corpus", str(corpus), "--policies", "mindom",
            "--reference", "drl",
        ])


def test_train_command_with_config(tmp_path, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text(
        "episodes=2\nt_max=60\np=4\nk_rounds=1\nhidden=8\nbatch_size=8\n"
        "capacity=400\neps_anneal_steps=50\nval_size=2\nval_period=1\n"
        "lr=0.001\nseed=2\n"
    )
    out = tmp_path / "run"
    assert main(["train", "--preset", "D1", "--n", "8", "--config", str(cfg),
                 "--out", str(out)]) == 0
    assert (out / "best.ckpt").exists()
    assert (out / "final.ckpt").exists()
    log = (out / "train_log.csv").read_text().splitlines()
    assert log[0].startswith("episode,")
    assert len(log) >= 2
    params = gnn.load_params(out / "best.ckpt")
    assert params.p == 4

    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense=1\n")
    with pytest.raises(ValueError, match="unknown key"):
        main(["train", "--preset", "D1", "--n", "8", "--config", str(bad),
              "--out", str(tmp_path / "r2")])
