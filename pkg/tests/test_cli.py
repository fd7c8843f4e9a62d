import json
import shutil

import numpy as np
import pytest
from filelock import FileLock

from hpsearch import cli, pipeline
from hpsearch.space import default_space

KEEP = {"b": [1, 3], "c": [1], "r": [2, 6], "s": [3], "l": [-3, -2], "a": [3, 6], "e": [1, 7], "g": ["No", "Yes"]}


def tiny_config(random_iters=4, adaptive_iters=3, k=3):
    space = default_space().to_dict()
    for item in space["dims"]:
        item["values"] = KEEP[item["name"]]
    return {
        "gen": {"volumes_per_class": [4, 4, 4, 4], "slice_range": [2, 3], "side": 8},
        "search": {"random_iters": random_iters, "adaptive_iters": adaptive_iters},
        "gp": {"lml_restarts": 1},
        "k": k,
        "space": space,
    }


@pytest.fixture
def workspace(tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps(tiny_config()))
    ws = tmp_path / "ws"
    assert cli.main(["gen", "--workspace", str(ws), "--config", str(cfg)]) == 0
    return ws, cfg


def ledger_records(path):
    out = []
    for line in path.read_text().splitlines():
        rec = json.loads(line)
        rec.pop("wall_time", None)
        out.append(rec)
    return out


def test_gen_is_idempotent(workspace):
    ws, cfg = workspace
    before = (ws / "dataset" / "manifest.json").read_bytes()
    assert cli.main(["gen", "--workspace", str(ws), "--config", str(cfg)]) == 0
    assert (ws / "dataset" / "manifest.json").read_bytes() == before
    manifest = json.loads(before)
    assert manifest["classes"] == ["A", "B", "C", "D"]
    assert {v["label"] for v in manifest["volumes"]} == {0, 1, 2, 3}


def test_gen_rejects_too_few_volumes(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"gen": {"volumes_per_class": [2, 2, 2, 2]}}))
    assert cli.main(["gen", "--workspace", str(tmp_path / "ws"), "--config", str(cfg)]) != 0
    assert "volumes" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sed": 1}))
    assert cli.main(["gen", "--workspace", str(tmp_path), "--config", str(cfg)]) == 2


def test_search_then_report(workspace):
    ws, cfg = workspace
    assert cli.main(["search", "--workspace", str(ws), "--config", str(cfg)]) == 0
    records = ledger_records(ws / "ledger.jsonl")
    assert len(records) == 7
    assert [r["stage"] for r in records] == ["random"] * 4 + ["adaptive"] * 3
    assert len(list((ws / "members").glob("*.bin"))) <= 3
    # a second search must not clobber the ledger
    assert cli.main(["search", "--workspace", str(ws), "--config", str(cfg)]) == 2

    assert cli.main(["report", "--workspace", str(ws)]) == 0
    report = ws / "report"
    for name in ("running_stats.tsv", "top_trials.tsv", "confusion.tsv", "localization.tsv", "summary.json"):
        assert (report / name).exists()
    rows = [line.split("\t") for line in (report / "running_stats.tsv").read_text().splitlines()[1:]]
    running_min = [float(r[5]) for r in rows]
    assert all(b <= a for a, b in zip(running_min, running_min[1:]))
    assert len((report / "top_trials.tsv").read_text().splitlines()) == 4
    summary = json.loads((report / "summary.json").read_text())
    assert 0 <= summary["ensemble_slice_error"] <= 1
    assert "ensemble\tvolume" in (report / "confusion.tsv").read_text()

    assert cli.main(["report", "--workspace", str(ws), "--k", "1"]) == 0
    table = (report / "confusion.tsv").read_text()
    assert "best\tslice" in table and "ensemble" not in table


def test_report_retrains_missing_members(workspace):
    ws, cfg = workspace
    assert cli.main(["search", "--workspace", str(ws), "--config", str(cfg)]) == 0
    shutil.rmtree(ws / "members")
    assert cli.main(["report", "--workspace", str(ws)]) == 0
    assert len(list((ws / "members").glob("*.bin"))) == 3


@pytest.mark.parametrize("cut", [2, 5])
def test_interrupt_and_resume_matches_uninterrupted(workspace, monkeypatch, cut):
    ws, cfg = workspace
    full = ws.parent / "full"
    shutil.copytree(ws, full)
    assert cli.main(["search", "--workspace", str(full), "--config", str(cfg)]) == 0

    original = pipeline.CnnObjective.__call__
    calls = {"n": 0}

    def flaky(self, point, seed):
        if calls["n"] == cut:
            raise KeyboardInterrupt
        calls["n"] += 1
        return original(self, point, seed)

    monkeypatch.setattr(pipeline.CnnObjective, "__call__", flaky)
    assert cli.main(["search", "--workspace", str(ws), "--config", str(cfg)]) == 130
    assert len(ledger_records(ws / "ledger.jsonl")) == cut
    monkeypatch.setattr(pipeline.CnnObjective, "__call__", original)
    assert cli.main(["resume", "--workspace", str(ws)]) == 0
    assert ledger_records(ws / "ledger.jsonl") == ledger_records(full / "ledger.jsonl")


def test_resume_rejects_changed_settings(workspace):
    ws, cfg = workspace
    assert cli.main(["search", "--workspace", str(ws), "--config", str(cfg)]) == 0
    assert cli.main(["resume", "--workspace", str(ws), "--seed", "5"]) == 2
    assert cli.main(["resume", "--workspace", str(ws), "--config", str(cfg)]) == 2
    assert cli.main(["resume", "--workspace", str(ws), "--seed", "0"]) == 0


def test_resume_without_search(workspace):
    ws, _ = workspace
    assert cli.main(["resume", "--workspace", str(ws)]) == 2


def test_locked_workspace(workspace):
    ws, cfg = workspace
    with FileLock(str(ws / ".lock")):
        assert cli.main(["search", "--workspace", str(ws), "--config", str(cfg)]) == 3
    assert not (ws / "ledger.jsonl").exists()


def test_corrupt_ledger_reports_line(workspace, capsys):
    ws, cfg = workspace
    assert cli.main(["search", "--workspace", str(ws), "--config", str(cfg)]) == 0
    lines = (ws / "ledger.jsonl").read_text().splitlines()
    lines[2] = lines[2][:10]
    (ws / "ledger.jsonl").write_text("\n".join(lines) + "\n")
    assert cli.main(["resume", "--workspace", str(ws)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_missing_dataset(tmp_path):
    assert cli.main(["search", "--workspace", str(tmp_path)]) == 2
