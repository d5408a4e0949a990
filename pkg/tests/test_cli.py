import json
import subprocess
import sys

import pytest

from repro_mcts.cli import EXIT_ERROR, EXIT_MISMATCH, EXIT_NOT_REPRODUCED, EXIT_OK, LOG_FILE, MANIFEST_FILE, TRACE_FILE, main, parse_seed_range
from repro_mcts.fixtures import SCENARIOS
from repro_mcts.tree import LevelConfig, map_score

FS = SCENARIOS["fakestandby"]


def run_args(sc, out, *extra):
    return ["run", "--app", str(sc.app), "--report", str(sc.report), "--oracle", f"scripted:{sc.oracle}", "--out", str(out), *extra]


def test_run_fakestandby_seed7(tmp_path, capsys):
    assert main(run_args(FS, tmp_path, "--seed", "7")) == EXIT_OK
    trace = (tmp_path / TRACE_FILE).read_text().splitlines()
    assert [line.split("  #")[0] for line in trace] == ["click escape_methods", "rotate", "rotate"]
    manifest = json.loads((tmp_path / MANIFEST_FILE).read_text())
    assert manifest["outcome"]["outcome"] == "crash_reproduced"
    assert manifest["seed"] == 7 and manifest["oracle"]["mode"] == "scripted"
    records = [json.loads(line) for line in (tmp_path / LOG_FILE).read_text().splitlines()]
    assert len(records) == manifest["outcome"]["iterations_used"]
    assert [r["iteration"] for r in records] == list(range(1, len(records) + 1))


def test_run_no_crash_exit_2(tmp_path):
    assert main(run_args(SCENARIOS["no_crash"], tmp_path, "--iterations", "40")) == EXIT_NOT_REPRODUCED
    manifest = json.loads((tmp_path / MANIFEST_FILE).read_text())
    assert manifest["outcome"]["outcome"] == "budget_exhausted"


def test_run_bad_levels_names_inequality(tmp_path, capsys):
    assert main(run_args(FS, tmp_path, "--levels", "3,2,1", "--k", "3")) == EXIT_ERROR
    assert "high + (k-1)*low > k*mid" in capsys.readouterr().err


@pytest.mark.parametrize(
    "extra",
    [["--ablate", "bogus"], ["--levels", "5,2"], ["--thresholds", "8,3"], ["--k", "0"], ["--tau", "0"]],
)
def test_run_invalid_config(tmp_path, extra):
    assert main(run_args(FS, tmp_path, *extra)) == EXIT_ERROR


def test_run_missing_inputs(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path)]) == EXIT_ERROR
    assert "--app" in capsys.readouterr().err


def test_bad_oracle_spec(tmp_path):
    assert main(run_args(FS, tmp_path, "--oracle", "magic")) == EXIT_ERROR


def test_remote_without_key_is_error(tmp_path, monkeypatch):
    monkeypatch.delenv("REPRO_MCTS_API_KEY", raising=False)
    args = run_args(FS, tmp_path)
    args[args.index("--oracle") + 1] = "remote"
    assert main(args + ["--endpoint", "http://localhost:9/v1"]) == EXIT_ERROR


def test_argparse_errors_exit_1():
    with pytest.raises(SystemExit) as info:
        main(["run", "--bogus-flag"])
    assert info.value.code == EXIT_ERROR


# -- replay --------------------------------------------------------------------------------------


@pytest.fixture
def emitted_trace(tmp_path):
    assert main(run_args(FS, tmp_path / "run", "--seed", "7")) == EXIT_OK
    return tmp_path / "run" / TRACE_FILE


def test_replay_emitted_trace(emitted_trace):
    assert main(["replay", "--app", str(FS.app), "--trace", str(emitted_trace)]) == EXIT_OK


def test_replay_edited_action(emitted_trace, capsys):
    lines = emitted_trace.read_text().splitlines()
    lines[1] = lines[1].replace("rotate", "back", 1)
    emitted_trace.write_text("\n".join(lines) + "\n")
    assert main(["replay", "--app", str(FS.app), "--trace", str(emitted_trace)]) == EXIT_MISMATCH
    assert "step 2" in capsys.readouterr().err


def test_replay_empty_trace(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("# nothing\n")
    assert main(["replay", "--app", str(FS.app), "--trace", str(path)]) == EXIT_ERROR


def test_replay_without_crash(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("click escape_methods\n")
    assert main(["replay", "--app", str(FS.app), "--trace", str(path)]) == EXIT_NOT_REPRODUCED


def test_replay_unparsable_line(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("swipe left\n")
    assert main(["replay", "--app", str(FS.app), "--trace", str(path)]) == EXIT_ERROR


def test_replay_missing_file(tmp_path):
    assert main(["replay", "--app", str(FS.app), "--trace", str(tmp_path / "nope.txt")]) == EXIT_ERROR


# -- validate ------------------------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_validate_shipped(name, capsys):
    sc = SCENARIOS[name]
    assert main(["validate", "--app", str(sc.app), "--scripted-oracle", str(sc.oracle)]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out


def test_validate_dangling_target(tmp_path, capsys):
    data = json.loads(FS.app.read_text())
    data["transitions"][0]["to"] = "Nowhere"
    path = tmp_path / "app.json"
    path.write_text(json.dumps(data))
    assert main(["validate", "--app", str(path)]) == EXIT_ERROR
    assert "transitions[0].to" in capsys.readouterr().out


def test_validate_score_out_of_range(tmp_path, capsys):
    data = json.loads(FS.oracle.read_text())
    data["scores"][0]["score"] = 12
    path = tmp_path / "oracle.json"
    path.write_text(json.dumps(data))
    assert main(["validate", "--scripted-oracle", str(path)]) == EXIT_ERROR
    assert "scores[0].score" in capsys.readouterr().out


def test_validate_needs_a_file():
    assert main(["validate"]) == EXIT_ERROR


def test_validate_syntax_error(tmp_path, capsys):
    path = tmp_path / "app.json"
    path.write_text("{oops")
    assert main(["validate", "--app", str(path)]) == EXIT_ERROR
    assert "app.json:1:" in capsys.readouterr().err


# -- sweep ---------------------------------------------------------------------------------------


def sweep_args(out, seeds="0..4", ks="1,3"):
    return ["sweep", "--app", str(FS.app), "--oracle", f"scripted:{FS.oracle}", "--report", str(FS.report),
            "--seeds", seeds, "--k-list", ks, "--iterations", "50", "--out", str(out)]


def test_sweep_table(tmp_path, capsys):
    out = tmp_path / "sweep.json"
    assert main(sweep_args(out)) == EXIT_OK
    rows = json.loads(out.read_text())["rows"]
    assert [r["k"] for r in rows] == [1, 3] and all(r["runs"] == 5 for r in rows)
    assert "success" in capsys.readouterr().out


def test_sweep_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(sweep_args(a)) == EXIT_OK
    assert main(sweep_args(b) + ["--jobs", "2"]) == EXIT_OK
    assert json.loads(a.read_text()) == json.loads(b.read_text())


@pytest.mark.parametrize("seeds", ["5..4", "x..y"])
def test_sweep_bad_range(tmp_path, seeds):
    assert main(sweep_args(tmp_path / "s.json", seeds=seeds)) == EXIT_ERROR


def test_sweep_rejects_remote(tmp_path):
    args = sweep_args(tmp_path / "s.json")
    args[args.index("--oracle") + 1] = "remote"
    assert main(args) == EXIT_ERROR


def test_parse_seed_range():
    assert parse_seed_range("0..3") == [0, 1, 2, 3]
    assert parse_seed_range("7") == [7]
    assert parse_seed_range("3..2") == []


# -- manifests and logs ----------------------------------------------------------------------------


def test_manifest_rerun_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(run_args(FS, first, "--seed", "3")) == EXIT_OK
    assert main(["run", "--manifest", str(first / MANIFEST_FILE), "--out", str(second)]) == EXIT_OK
    for name in (TRACE_FILE, LOG_FILE):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_log_records_consistent(tmp_path):
    assert main(run_args(FS, tmp_path, "--seed", "11")) == EXIT_OK
    levels = LevelConfig()
    for line in (tmp_path / LOG_FILE).read_text().splitlines():
        rec = json.loads(line)
        for child in rec["children"]:
            assert child["mapped"] == map_score(child["raw"], levels)
        assert {"selected_path", "backprop_mean", "parent_digest", "root_digest_end"} <= rec.keys()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "repro_mcts.cli", "validate", "--app", str(FS.app)], capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
