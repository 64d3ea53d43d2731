import json

import pytest

from csn.cli import main
from csn.load import CORPUS


def test_check_ok(capsys):
    assert main(["check", str(CORPUS / "ping.csn")]) == 0
    assert main(["check", "deploy"]) == 0


def test_check_type_error_json(capsys):
    assert main(["check", "ping-bad-install", "--json"]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report[0]["code"] == "IllegalInstallCombination"


def test_check_parse_and_io_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csn"
    bad.write_text("interface { f: () -> }")
    assert main(["check", str(bad)]) == 2
    assert "1:" in capsys.readouterr().err
    assert main(["check", str(tmp_path / "missing.csn")]) == 3


def test_run_prints_logs(capsys):
    assert main(["run", "ping-micro"]) == 0
    out = capsys.readouterr().out
    assert 'sink\t8\tlog_mac\t"m1"' in out


def test_run_untyped_runtime_error(capsys):
    assert main(["run", "arity"]) == 1
    assert main(["run", "arity", "--untyped"]) == 4


def test_trace_writes_file(tmp_path):
    out = tmp_path / "t.jsonl"
    assert main(["trace", "ping-micro", str(out)]) == 0
    assert out.read_text().count("\n") == 14


def test_trace_bad_output_path(tmp_path):
    assert main(["trace", "ping-micro", str(tmp_path / "no" / "t.jsonl")]) == 3


def test_random_schedule_seed_from_env(tmp_path, monkeypatch):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    monkeypatch.setenv("CSN_SEED", "11")
    main(["trace", "ping", str(a), "--schedule", "random", "--max-steps", "300"])
    main(["trace", "ping", str(b), "--schedule", "random", "--seed", "11",
          "--max-steps", "300"])
    assert a.read_bytes() == b.read_bytes()


def test_explore_exit_codes(capsys):
    assert main(["explore", "ping-micro", "--depth", "5", "--prop", "well-typed"]) == 0
    assert main(["explore", "ping", "--depth", "0"]) == 0
    assert main(["explore", "ping", "--depth", "30", "--max-states", "40"]) == 6


def test_explore_counterexample(monkeypatch, capsys):
    import csn.semantics as sem
    from csn.syntax import Install, Loc
    original = sem._install_top
    monkeypatch.setattr(sem, "_install_top",
                        lambda o, a: (Install(a, Loc()), original(o, a)[1]))
    assert main(["explore", "deploy", "--depth", "8"]) == 5
    assert "install-top" in capsys.readouterr().out


def test_props(tmp_path, capsys):
    assert main(["props", "--instances", "10", "--depth", "2",
                 "--out-dir", str(tmp_path)]) == 0
    assert "counterexamples      0" in capsys.readouterr().out


def test_props_writes_counterexamples(tmp_path, monkeypatch, capsys):
    import csn.semantics as sem
    from csn.syntax import Install, Loc
    original = sem._install_top
    monkeypatch.setattr(sem, "_install_top",
                        lambda o, a: (Install(a, Loc()), original(o, a)[1]))
    assert main(["props", "--instances", "40", "--depth", "3",
                 "--out-dir", str(tmp_path)]) == 5
    files = list(tmp_path.glob("counterexample-*.csn"))
    assert files
    assert main(["check", str(files[0])]) == 0


def test_help_lists_exit_codes(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "state budget exceeded" in capsys.readouterr().out
