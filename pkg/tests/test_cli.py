import json

import numpy as np
import pytest

from clickcal.cli import main
from clickcal.codec import read_records
from clickcal.env import load_policy, read_tasks


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def tasks(tmp_path):
    path = tmp_path / "tasks.jsonl"
    assert run("gen-tasks", "--count", 40, "--seed", 3, "--grid", "6x6", "--out", path) == 0
    return path


@pytest.fixture
def policy(tmp_path, tasks):
    path = tmp_path / "pol.txt"
    assert run("train", "--tasks", tasks, "--steps", 30, "--cell-gain", 6, "--out", path) == 0
    return path


def test_gen_tasks_deterministic(tmp_path, tasks):
    again = tmp_path / "again.jsonl"
    run("gen-tasks", "--count", 40, "--seed", 3, "--grid", "6x6", "--out", again)
    assert again.read_bytes() == tasks.read_bytes()
    assert len(read_tasks(tasks)) == 40


def test_gen_tasks_zero_count(tmp_path):
    out = tmp_path / "empty.jsonl"
    assert run("gen-tasks", "--count", 0, "--out", out) == 0
    assert out.read_bytes() == b""


@pytest.mark.parametrize("grid", ["0x4", "12x-1"])
def test_gen_tasks_bad_grid(tmp_path, grid, capsys):
    assert run("gen-tasks", "--grid", grid, "--out", tmp_path / "x.jsonl") != 0
    assert "error" in capsys.readouterr().err


def test_gen_tasks_unparseable_grid(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("gen-tasks", "--grid", "twelve", "--out", tmp_path / "x.jsonl")
    assert exc.value.code != 0


def test_train_outputs(tmp_path, tasks, policy):
    pol = load_policy(policy)
    assert pol.grid_w == 6
    lines = (tmp_path / "pol.txt.metrics.jsonl").read_text().splitlines()
    header = json.loads(lines[0])["header"]
    assert header["config"]["effective_mode"] == "dual"
    assert [json.loads(x)["step"] for x in lines[1:]] == list(range(30))
    again = tmp_path / "pol2.txt"
    run("train", "--tasks", tasks, "--steps", 30, "--cell-gain", 6, "--out", again)
    assert again.read_bytes() == policy.read_bytes()


def test_alpha_zero_resolves_to_binary(tmp_path, tasks):
    out = tmp_path / "bin.txt"
    assert run("train", "--tasks", tasks, "--steps", 2, "--alpha", 0, "--out", out) == 0
    line = (tmp_path / "bin.txt.metrics.jsonl").read_text().splitlines()[0]
    assert json.loads(line)["header"]["config"]["effective_mode"] == "binary_conf"


def test_train_rejects_bad_input(tmp_path, tasks):
    assert run("train", "--tasks", tmp_path / "nope.jsonl", "--out", tmp_path / "p") != 0
    assert run("train", "--tasks", tasks, "--beta", -1, "--out", tmp_path / "p") != 0
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "x"}\n')
    assert run("train", "--tasks", bad, "--out", tmp_path / "p") != 0


def test_eval_outputs_and_rerun(tmp_path, tasks, policy):
    prefix = tmp_path / "ev" / "run"
    assert run("eval", "--policy", policy, "--tasks", tasks, "--out", prefix) == 0
    report = json.loads((tmp_path / "ev" / "run.report.json").read_text())
    records = read_records(tmp_path / "ev" / "run.records.jsonl")
    assert len(records) == 40
    assert report["accuracy"] == np.mean([r.correct for r in records])
    first = (tmp_path / "ev" / "run.report.json").read_bytes()
    run("eval", "--policy", policy, "--tasks", tasks, "--out", prefix)
    assert (tmp_path / "ev" / "run.report.json").read_bytes() == first


def test_eval_missing_policy(tmp_path, tasks, capsys):
    assert run("eval", "--policy", tmp_path / "none.txt", "--tasks", tasks, "--out", tmp_path / "e") != 0
    assert "not found" in capsys.readouterr().err


def test_stability_command(tmp_path, tasks, policy):
    out = tmp_path / "stab.json"
    assert run("stability", "--policy", policy, "--tasks", tasks, "--sample-sizes", "10,40", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["repeats"] == 8 and len(doc["mean_variance"]) == 2
    assert run("stability", "--policy", policy, "--tasks", tasks, "--repeats", 1, "--out", out) != 0


def test_heatmap_command(tmp_path, tasks, policy):
    prefix = tmp_path / "hm"
    assert run("heatmap", "--tasks", tasks, "--index", 2, "--out", prefix) == 0
    pgm = (tmp_path / "hm.pgm").read_bytes()
    assert pgm.startswith(b"P5\n6 6\n255\n") and len(pgm) == len(b"P5\n6 6\n255\n") + 36
    rows = (tmp_path / "hm.csv").read_text().splitlines()
    assert len(rows) == 6 and all(len(r.split(",")) == 6 for r in rows)
    assert run("heatmap", "--tasks", tasks, "--mode", "policy", "--out", prefix) != 0
    assert run("heatmap", "--tasks", tasks, "--mode", "policy", "--policy", policy, "--out", prefix) == 0
    assert run("heatmap", "--tasks", tasks, "--task-id", "missing", "--out", prefix) != 0
