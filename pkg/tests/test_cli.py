import json

from cmvba.cli import main


def test_run_and_replay(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CMVBA_TRACE_DIR", str(tmp_path))
    assert main(["run", "--n", "4", "--seed", "2", "--adversary", "equivocator",
                 "--trace-out", "t.jsonl"]) == 0
    path = tmp_path / "t.jsonl"
    assert path.exists()
    assert main(["replay", "--trace", str(path)]) == 0
    assert "identical" in capsys.readouterr().out
    path.write_text(path.read_text().replace('"seed":2', '"seed":3', 1))
    assert main(["replay", "--trace", str(path)]) == 1


def test_experiment_and_check(tmp_path, monkeypatch):
    monkeypatch.delenv("CMVBA_TRACE_DIR", raising=False)
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"ns": [4, 7], "strategies": ["honest_random", "worst_order"],
                                "seeds": 3, "save_traces": True}))
    out = tmp_path / "out"
    assert main(["experiment", "--spec", str(spec), "--out", str(out)]) == 0
    assert (out / "runs.csv").exists() and (out / "summary.json").exists()
    assert len(list((out / "traces").glob("*.jsonl"))) == 12
    assert main(["check", "--traces", str(out / "traces")]) == 0


def test_bad_arguments(tmp_path):
    assert main(["run", "--n", "3", "--f", "1"]) == 2
    assert main(["check", "--traces", str(tmp_path)]) == 2
