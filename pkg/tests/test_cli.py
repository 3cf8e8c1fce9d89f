import io
import sys

import pytest

from bringme.cli import main


def test_run_writes_outputs(tmp_path, capsys):
    spec = tmp_path / "exp.json"
    spec.write_text('{"commands": ["Find an apple.", "Bring a sugar_box."], "repetitions": 2}')
    out = tmp_path / "out"
    assert main(["run", "--spec", str(spec), "--out", str(out), "--format", "csv"]) == 0
    printed = capsys.readouterr().out
    assert printed == (out / "records.csv").read_text()
    assert len(printed.splitlines()) == 1 + 3 * 2 * 2 * 2
    assert (out / "report.md").read_text().startswith("# ")
    assert len(list((out / "logs").iterdir())) == 6


def test_report_from_records(tmp_path, capsys):
    spec = tmp_path / "exp.json"
    spec.write_text('{"commands": ["Find an apple."], "repetitions": 3}')
    main(["run", "--spec", str(spec), "--out", str(tmp_path), "--format", "csv"])
    capsys.readouterr()
    assert main(["report", "--records", str(tmp_path / "records.csv")]) == 0
    assert "Task completion rate" in capsys.readouterr().out
    target = tmp_path / "r.csv"
    main(["report", "--records", str(tmp_path / "records.csv"), "--format", "csv", "--out", str(target)])
    assert target.read_text() == (tmp_path / "records.csv").read_text()


def test_unknown_format_is_usage_error():
    with pytest.raises(SystemExit):
        main(["report", "--records", "x.csv", "--format", "pdf"])


def test_chat_with_simulated_user(monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO("Find an apple.\nBring me a fruit.\nDance!\nquit\n"))
    assert main(["chat", "--simulated-user", "--situation", "without_defaults"]) == 0
    out = capsys.readouterr().out
    assert out.count("found at dining_table") == 2
    assert "failed (CommandParseError" in out
    assert "llm_call" in out


def test_chat_console_user(monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO("Find a colored_wood_blocks.\nbookshelf_bedroom\n"))
    assert main(["chat", "--approach", "OKB"]) == 0
    out = capsys.readouterr().out
    assert "robot> Where can I find the colored_wood_blocks?" in out
    assert "found at bookshelf_bedroom" in out
