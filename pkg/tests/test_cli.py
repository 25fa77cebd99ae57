from __future__ import annotations

import json
import subprocess
import sys

import pytest

from cepfuse.cli import main
from cepfuse.lang.corpus import corpus_path

DATA = corpus_path().parent

SPEC = """[scenario]
duration = 20
seed = 3

[noise]
rate = 100
vocabulary = adversarial

[groups]
each = 2
"""


@pytest.fixture()
def scenario(tmp_path):
    spec = tmp_path / "s.ini"
    spec.write_text(SPEC)
    stream, manifest = tmp_path / "s.jsonl", tmp_path / "s.manifest"
    assert main(["gen", str(spec), "-o", str(stream), "-m", str(manifest)]) == 0
    return stream, manifest


def test_check_corpus(capsys):
    assert main(["check", str(corpus_path())]) == 0
    assert "5 rule(s) checked" in capsys.readouterr().out


def test_check_bad_rules(tmp_path, capsys):
    bad = tmp_path / "bad.rules"
    bad.write_text("# type: T\nselect * from pattern\n")
    assert main(["check", str(bad)]) == 2
    assert "expected '['" in capsys.readouterr().err


def test_check_unsatisfiable(tmp_path):
    bad = tmp_path / "u.rules"
    bad.write_text('# type: T\nselect * from pattern [every (a=Event(n>5 and n<1) and b=Event(y("1"))) where timer:within(5 min)]\n')
    assert main(["check", str(bad)]) == 2


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["run"])
    assert ei.value.code == 1
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == 1


def test_missing_file():
    assert main(["oracle", "/nonexistent/stream"]) == 2


def test_run_matches_oracle_bytes(scenario, tmp_path):
    stream, manifest = scenario
    fp, report, oracle = tmp_path / "fp", tmp_path / "report.json", tmp_path / "oracle"
    rc = main([
        "run", str(stream), "--rules", str(corpus_path()), "--trust", str(DATA / "trust.txt"),
        "--priorities", str(DATA / "priorities.txt"), "-o", str(report), "-m", str(manifest),
        "--fingerprints", str(fp), "--secure-out", str(tmp_path / "secure.jsonl"),
    ])
    assert rc == 0
    assert main(["oracle", str(stream), "--rules", str(corpus_path()), "-o", str(oracle)]) == 0
    assert fp.read_bytes() == oracle.read_bytes() == manifest.read_bytes()
    rep = json.loads(report.read_text())
    assert rep["recall"] == rep["precision"] == 1.0
    assert rep["accepted"] == rep["engine_ingested"]
    assert rep["complex_events"] == rep["secure_events"] + rep["rejected_trust"]
    secure = [json.loads(line) for line in (tmp_path / "secure.jsonl").read_text().splitlines()]
    assert len(secure) == rep["secure_events"] > 0


def test_run_is_reproducible(scenario, tmp_path):
    stream, _ = scenario
    outs = []
    for k in range(2):
        fp = tmp_path / f"fp{k}"
        assert main(["run", str(stream), "-o", str(tmp_path / f"r{k}"), "--fingerprints", str(fp)]) == 0
        outs.append(fp.read_bytes())
    assert outs[0] == outs[1]


def test_gen_seed_override(tmp_path, scenario):
    stream, _ = scenario
    spec = tmp_path / "s.ini"
    other = tmp_path / "other.jsonl"
    assert main(["gen", str(spec), "-o", str(other), "--seed", "99"]) == 0
    assert other.read_bytes() != stream.read_bytes()


def test_bench_single_rate(tmp_path):
    out = tmp_path / "b.csv"
    rc = main(["bench", "--rates", "0", "--reps", "1", "--duration", "2", "--groups", "2", "-o", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "noise_rate,mean_delay_ms,p99_delay_ms,recall"
    assert len(lines) == 2 and lines[1].startswith("0,")


def test_bench_bad_rates():
    assert main(["bench", "--rates", "a,b", "--reps", "1"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cepfuse", "check", str(corpus_path())], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
