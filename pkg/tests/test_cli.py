import json
import shutil

import pytest

from chatloom.cli import main
from chatloom.seedset import Quality, SeedStore


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def base_ws(tmp_path_factory):
    """One full pipeline run shared by the read-only assertions below."""
    ws = tmp_path_factory.mktemp("cli") / "ws"
    steps = [
        [
            "init", str(ws), "--demo", "60", "--seed", "0",
            "--set", "kmeans_k=4", "--set", "min_cluster_size=8",
            "--set", "deterministic=true",
        ],
        ["ingest", str(ws)],
        ["score", str(ws)],
        ["cluster", str(ws), "--seed", "0"],
        ["sample", str(ws), "--count", "8", "--seed", "0"],
        ["generate", str(ws), "--seed", "0"],
        ["parse", str(ws)],
        ["filter", str(ws)],
        ["stats", str(ws)],
        ["export", str(ws)],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return ws


@pytest.fixture
def ws_copy(base_ws, tmp_path):
    target = tmp_path / "ws"
    shutil.copytree(base_ws, target)
    return target


def _jsonl(path):
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def test_walkthrough_writes_all_artifacts(base_ws):
    for name in (
        "config.toml",
        "manifest.json",
        "source.tsv",
        "corpus.jsonl",
        "retained.json",
        "clusters.json",
        "groups.jsonl",
        "transcripts.jsonl",
        "parse_results.jsonl",
        "verdicts.jsonl",
        "accepted.jsonl",
        "rejected.jsonl",
        "stats.json",
        "dataset.jsonl",
    ):
        assert (base_ws / name).exists(), name
    assert len(_jsonl(base_ws / "groups.jsonl")) == 8
    # annotations.csv only appears once a seed set exists
    assert sorted(p.name for p in (base_ws / "stats_csv").glob("*.csv")) == [
        "corpus_stats.csv",
        "diversity.csv",
        "per_turn_images.csv",
    ]


def test_export_resolves_image_uris(base_ws):
    rows = _jsonl(base_ws / "dataset.jsonl")
    assert rows
    image_segments = [
        segment
        for row in rows
        for turn in row["turns"]
        for side in ("instruction", "response")
        for segment in turn[side]
        if segment["type"] == "image"
    ]
    assert image_segments
    assert all(segment["uri"].startswith("https://") for segment in image_segments)


def test_verify_reports_clean_inventory(base_ws, capsys):
    code, out, _ = run(capsys, "verify", str(base_ws))
    assert code == 0
    assert "status=ok" in out


def test_verify_detects_tampering(ws_copy, capsys):
    with (ws_copy / "corpus.jsonl").open("a", encoding="utf-8") as fh:
        fh.write("\n")
    code, out, _ = run(capsys, "verify", str(ws_copy))
    assert code == 3
    assert "hash mismatch" in out


def test_json_progress_lines_are_json(base_ws, capsys):
    code, out, _ = run(capsys, "--json", "verify", str(base_ws))
    assert code == 0
    lines = [json.loads(line) for line in out.splitlines() if line.strip()]
    assert lines and all("stage" in line for line in lines)


def test_init_refuses_existing_workspace(tmp_path, capsys):
    ws = tmp_path / "ws"
    assert main(["init", str(ws)]) == 0
    code, _, err = run(capsys, "init", str(ws))
    assert code == 1
    assert "already initialized" in err


def test_commands_need_a_workspace(tmp_path, capsys):
    code, _, err = run(capsys, "ingest", str(tmp_path / "nowhere"))
    assert code == 1
    assert "run init first" in err


def test_stage_order_is_enforced(tmp_path, capsys):
    ws = tmp_path / "ws"
    assert main(["init", str(ws)]) == 0
    code, _, err = run(capsys, "score", str(ws))
    assert code == 1
    assert "requires 'ingest'" in err


def test_force_bypasses_the_gate(tmp_path, capsys):
    ws = tmp_path / "ws"
    assert main(["init", str(ws)]) == 0
    code, _, err = run(capsys, "sample", str(ws))
    assert code == 1
    assert "requires 'cluster'" in err
    # forced past the gate, the stage now fails on the missing artifact instead
    code, _, err = run(capsys, "sample", str(ws), "--force")
    assert code == 2
    assert "requires" not in err


def test_missing_source_is_an_environment_error(tmp_path, capsys):
    ws = tmp_path / "ws"
    assert main(["init", str(ws)]) == 0
    code, _, err = run(capsys, "ingest", str(ws))
    assert code == 2
    assert "source not found" in err


def test_stale_config_blocks_stages(ws_copy, capsys):
    config = ws_copy / "config.toml"
    text = config.read_text(encoding="utf-8")
    assert "min_cluster_size = 8" in text
    config.write_text(text.replace("min_cluster_size = 8", "min_cluster_size = 9"), encoding="utf-8")
    code, _, err = run(capsys, "stats", str(ws_copy))
    assert code == 1
    assert "stale workspace" in err


def test_set_override_validation(tmp_path, capsys):
    code, _, err = run(capsys, "init", str(tmp_path / "a"), "--set", "garbage")
    assert code == 1
    assert "key=value" in err
    code, _, err = run(capsys, "init", str(tmp_path / "b"), "--set", "nope=1")
    assert code == 1
    assert "unknown config key" in err


def test_unknown_command_is_an_argparse_error(capsys):
    with pytest.raises(SystemExit):
        main(["bogus"])
    capsys.readouterr()


def test_promote_without_batch(ws_copy, capsys):
    assert main(["iterate", str(ws_copy), "--seed", "3", "--batch", "2"]) == 0
    capsys.readouterr()
    fresh = ws_copy.parent / "fresh"
    shutil.copytree(ws_copy, fresh, ignore=shutil.ignore_patterns("seedset"))
    code, _, err = run(capsys, "promote", str(fresh), "--force")
    assert code == 1
    assert "no batch to promote" in err


def test_refinement_loop_via_cli(ws_copy, tmp_path, capsys):
    code, out, _ = run(capsys, "iterate", str(ws_copy), "--seed", "3", "--batch", "3")
    assert code == 0
    assert "queued=3" in out

    store = SeedStore(ws_copy / "seedset")
    pending = store.pending_ids()
    assert len(pending) == 3

    # a second iterate must wait for annotations
    code, _, err = run(capsys, "iterate", str(ws_copy), "--seed", "4", "--batch", "3")
    assert code == 1
    assert "not fully annotated" in err

    # non-interactive runs must use --script
    code, _, err = run(capsys, "annotate", str(ws_copy))
    assert code == 1
    assert "--script" in err

    script = tmp_path / "script.jsonl"
    rows = [
        {"conversation_id": cid, "quality": "Excellent", "characteristics": ["ImageCreation"]}
        for cid in pending[:2]
    ]
    rows.append({"conversation_id": pending[2], "quality": "Poor", "characteristics": []})
    script.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    code, out, _ = run(capsys, "annotate", str(ws_copy), "--script", str(script))
    assert code == 0
    assert "applied=3" in out

    code, out, _ = run(capsys, "promote", str(ws_copy))
    assert code == 0
    assert "promoted=2" in out
    assert "seedset_size=2" in out

    reloaded = SeedStore(ws_copy / "seedset")
    assert len(reloaded.seed_examples()) == 2
    assert all(e.quality is not Quality.POOR for e in reloaded.seed_examples())

    # the next round runs against the grown seed set
    code, out, _ = run(capsys, "iterate", str(ws_copy), "--seed", "5", "--batch", "2")
    assert code == 0
    assert "queued=2" in out


def test_stats_accepts_external_dataset(ws_copy, capsys):
    dataset = ws_copy / "accepted.jsonl"
    code, out, _ = run(capsys, "stats", str(ws_copy), "--dataset", str(dataset))
    assert code == 0
    assert "conversations=" in out


def test_export_to_external_path(ws_copy, tmp_path, capsys):
    out_path = tmp_path / "elsewhere" / "dataset.jsonl"
    out_path.parent.mkdir()
    code, out, _ = run(capsys, "export", str(ws_copy), "--output", str(out_path))
    assert code == 0
    assert out_path.exists()
