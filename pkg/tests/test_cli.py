import csv
import json

import numpy as np
import pytest

from linswap.cli import CSV_COLUMNS, EXIT_CHECK, EXIT_OK, EXIT_USAGE, main, parse_run_config, UsageError
from linswap.efg import load_game


def run_config(tmp_path, body, name="run.cfg"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def long_run(tmp_path_factory):
    """Trigger against trigger on Kuhn(3,2), long enough to see the regret trend."""
    d = tmp_path_factory.mktemp("long")
    cfg = run_config(d, "game = kuhn:3:2\nkinds = trigger\nschedule = constant\neta = 0.1\n"
                        "iterations = 1000\ncsv_every = 100\noutput = out/trig\n")
    assert main(["run", cfg]) == EXIT_OK
    return d / "out"


def test_run_outputs_and_manifest(long_run):
    rows = read_rows(long_run / "trig.csv")
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert len(rows) == 20
    manifest = json.loads((long_run / "trig.manifest.json").read_text())
    assert manifest["complete"] and manifest["iterations_completed"] == 1000
    assert set(manifest["wall_clock_seconds"]) == {"build", "play", "audit", "write"}


def test_trigger_regret_trend(long_run):
    rows = read_rows(long_run / "trig.csv")
    for p in ("1", "2"):
        curve = {int(r["t"]): float(r["avg_trigger_regret"]) for r in rows if r["player"] == p}
        assert curve[1000] < curve[100]


def test_audit_reports_chain(long_run, capsys, tmp_path):
    code = main(["audit", str(long_run / "trig.npz"), "--game", "kuhn:3:2",
                 "--witness-dir", str(tmp_path / "w")])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert out.count("chain") == 4 and "VIOLATED" not in out
    W = np.loadtxt(tmp_path / "w" / "player1_trigger.csv", delimiter=",")
    assert W.shape == (13, 13)


def test_run_is_deterministic(tmp_path):
    body = "game = signaling\nkinds = linear-swap, external\niterations = 30\nseed = 4\nsample = yes\n"
    outs = []
    for name in ("a", "b"):
        cfg = run_config(tmp_path, body + f"output = {name}\n", f"{name}.cfg")
        assert main(["run", cfg]) == EXIT_OK
        outs.append((tmp_path / f"{name}.csv").read_bytes())
    assert outs[0] == outs[1]
    rows = read_rows(tmp_path / "a.csv")
    assert len(rows) == 60 and {r["player"] for r in rows} == {"1", "2"}


def test_linear_swap_audit_checks_gordon(tmp_path, capsys):
    cfg = run_config(tmp_path, "game = kuhn:3:2\niterations = 20\ncsv_every = 10\n")
    assert main(["run", cfg]) == EXIT_OK
    capsys.readouterr()
    assert main(["audit", str(tmp_path / "run.npz"), "--game", "kuhn:3:2", "--checkpoints", "5,20"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("matrix-level regret") == 2 and "MISMATCH" not in out


@pytest.mark.parametrize("body", [
    "game = kuhn:3:2\nbogus = 1\n",
    "game = kuhn:3:2\ngame = signaling\n",
    "iterations = 10\n",
    "game = kuhn:3:2\niterations = ten\n",
    "game = kuhn:3:2\nkinds = swap\n",
    "game = kuhn:3:2\nschedule = cubic\n",
    "game kuhn\n",
])
def test_malformed_config_exits_2(tmp_path, body):
    assert main(["run", run_config(tmp_path, body)]) == EXIT_USAGE


def test_config_parsing_defaults(tmp_path):
    cfg = parse_run_config("# comment\ngame = tree   # trailing\n", tmp_path)
    assert cfg.iterations == 1000 and cfg.kinds == ("linear-swap",) and cfg.base == tmp_path
    with pytest.raises(UsageError):
        parse_run_config("game = tree\nsample = maybe\n")


def test_audit_errors(tmp_path):
    assert main(["audit", str(tmp_path / "missing.npz"), "--game", "signaling"]) == EXIT_USAGE
    cfg = run_config(tmp_path, "game = signaling\niterations = 5\n")
    assert main(["run", cfg]) == EXIT_OK
    assert main(["audit", str(tmp_path / "run.npz"), "--game", "counterexample"]) == EXIT_USAGE
    assert main(["audit", str(tmp_path / "run.npz"), "--game", "signaling", "--classes", "full"]) == EXIT_USAGE
    assert main(["audit", str(tmp_path / "run.npz"), "--game", "signaling", "--checkpoints", "9"]) == EXIT_USAGE


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_verify_examples(capsys):
    assert main(["verify-examples"]) == EXIT_CHECK
    out = capsys.readouterr().out
    assert "5/6 checks passed" in out
    # the only failing check is the unweighted 50.5 target; the weighted gain is 10.1
    failed = [line for line in out.splitlines() if line.startswith("FAIL")]
    assert len(failed) == 1 and "50.5" in failed[0] and "gain 10.1" in failed[0]


def test_verify_examples_detects_perturbation(capsys):
    assert main(["verify-examples", "--perturb", "0.1"]) == EXIT_CHECK
    out = capsys.readouterr().out
    assert any(line.startswith("FAIL") and "LCE" in line for line in out.splitlines())


@pytest.mark.parametrize("args", [["kuhn", "--ranks", "3"], ["signaling"], ["counterexample"], ["tree"]])
def test_gen_writes_parseable_games(tmp_path, args):
    out = tmp_path / "g.txt"
    assert main(["gen", *args, "-o", str(out)]) == EXIT_OK
    game = load_game(out)
    assert game.num_players == 2 or args[0] == "tree"


def test_gen_sat(tmp_path):
    cnf = tmp_path / "f.cnf"
    cnf.write_text("c tiny\np cnf 2 2\n1 2 0\n-1 0\n")
    out = tmp_path / "sat.txt"
    assert main(["gen", "sat", "--cnf", str(cnf), "-o", str(out)]) == EXIT_OK
    assert main(["inspect", str(out)]) == EXIT_OK


def test_inspect_and_dump(tmp_path, capsys):
    assert main(["inspect", "tree"]) == EXIT_OK
    assert "10" in capsys.readouterr().out
    out = tmp_path / "sys.lp"
    assert main(["dump-system", "tree", "-o", str(out)]) == EXIT_OK
    text = out.read_text()
    assert text.lstrip().lower().startswith("\\") or "subject to" in text.lower()
    assert "end" in text.lower().split()[-1]
    assert main(["inspect", str(tmp_path / "nope.txt")]) == EXIT_USAGE
