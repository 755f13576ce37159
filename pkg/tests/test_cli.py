import json

import pytest

from helpers import loop_ta
from tage.benchmarks import build_train_ta
from tage.cli import DEFAULTS, ConfigError, main, parse_config_text, resolve_config
from tage.ta import TimedAutomaton


@pytest.fixture
def train_file(tmp_path):
    path = tmp_path / "train.ta"
    path.write_text(build_train_ta().to_text())
    return path


def gen(tmp_path, *args, name="gen"):
    out = tmp_path / name
    assert main(["gen", "--out", str(out), *args]) == 0
    return out


def test_config_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nn_pop = 300\nseed = 4  # trailing\n")
    cfg = resolve_config(str(path), "small", {"g_max": 7}, env={"TAGE_SEED": "11"})
    assert cfg["n_pop"] == 300 and cfg["seed"] == 11 and cfg["g_max"] == 7
    assert resolve_config(None, "small", env={})["n_pop"] == 500
    assert resolve_config(None, env={})["n_pop"] == DEFAULTS["n_pop"] == 2000
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("n_pop = 1\nbogus = 2\n", "x.cfg")
    with pytest.raises(ConfigError):
        parse_config_text("n_pop = many\n")


def test_gen_is_byte_identical(tmp_path):
    a = gen(tmp_path, "--seed", "7", "--set", "sut=random:C6/2", "--set", "n_test=200", name="a")
    b = gen(tmp_path, "--seed", "7", "--set", "sut=random:C6/2", "--set", "n_test=200", name="b")
    for f in ("sut.ta", "sut.dot", "train.traces", "test.traces", "manifest.txt"):
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    sut = TimedAutomaton.from_text((a / "sut.ta").read_text())
    assert sut.n_locations == 6 and sut.n_clock == 2
    assert (a / "train.traces").read_text() != (a / "test.traces").read_text()


def test_gen_train_writes_n_test_lines(tmp_path):
    out = gen(tmp_path, "--set", "n_test=2000")
    assert len((out / "train.traces").read_text().splitlines()) == 2000
    assert "seed = 0" in (out / "manifest.txt").read_text()


def test_gen_zero_traces(tmp_path):
    out = gen(tmp_path, "--set", "n_test=0")
    assert (out / "train.traces").read_text() == ""


def test_eval_verdicts(tmp_path, train_file, capsys):
    out = gen(tmp_path, "--set", "n_test=300")
    capsys.readouterr()
    assert main(["eval", str(train_file), str(out / "test.traces")]) == 0
    assert "PASS: 300" in capsys.readouterr().out
    broken = build_train_ta()
    edges = tuple(e for e in broken.edges if str(e.label) != "leave!")
    bad = tmp_path / "bad.ta"
    bad.write_text(broken.replace(edges=edges).to_text())
    assert main(["eval", str(bad), str(out / "test.traces")]) == 1
    text = capsys.readouterr().out
    assert "non-PASS traces:" in text and "PASS: 300" not in text


def test_eval_empty_file(tmp_path, train_file):
    empty = tmp_path / "empty.traces"
    empty.write_text("")
    assert main(["eval", str(train_file), str(empty)]) == 2


def test_export_dot(tmp_path, train_file, capsys):
    target = tmp_path / "x.dot"
    assert main(["export-dot", str(train_file), "--out", str(target)]) == 0
    assert target.read_text() == build_train_ta().to_dot()
    assert main(["export-dot", str(train_file)]) == 0
    assert capsys.readouterr().out == build_train_ta().to_dot()


def test_usage_errors(tmp_path):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
    assert main(["learn", "--set", "nonsense=1", "--out", str(tmp_path)]) == 2
    assert main(["learn", "--set", "sut=random:C99/9", "--out", str(tmp_path)]) == 2
    assert main(["learn", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2


def test_learn_from_bad_trace_file(tmp_path):
    bad = tmp_path / "bad.traces"
    bad.write_text("0 start? 5 appr\n")
    assert main(["learn", "--set", f"traces={bad}", "--out", str(tmp_path / "o")]) == 2


def test_learn_g_max_zero_writes_artifacts(tmp_path):
    out = tmp_path / "o"
    args = ["learn", "--out", str(out), "--set", "n_pop=20", "--set", "g_max=0",
            "--set", "n_test=100", "--set", "verbose=0"]
    assert main(args) == 1
    for f in ("manifest.txt", "progress.jsonl", "learned.ta", "learned.dot", "report.json"):
        assert (out / f).exists(), f
    report = json.loads((out / "report.json").read_text())
    assert report["generations"] == 0 and not report["converged"]
    assert "test_errors" in report
    assert len((out / "progress.jsonl").read_text().splitlines()) == 1


def test_learn_small_sut_converges(tmp_path):
    sut = tmp_path / "loop.ta"
    sut.write_text(loop_ta().to_text())
    out = tmp_path / "o"
    args = ["learn", "--out", str(out), "--seed", "1", "--set", f"sut={sut}",
            "--set", "n_pop=100", "--set", "g_max=300", "--set", "n_test=200", "--set", "verbose=0"]
    assert main(args) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["converged"] and report["test_errors"] == 0
    learned = TimedAutomaton.from_text((out / "learned.ta").read_text())
    # the manifest reproduces the run exactly
    again = tmp_path / "again"
    assert main(["learn", "--config", str(out / "manifest.txt"), "--out", str(again)]) == 0
    assert (again / "learned.ta").read_text() == learned.to_text()
