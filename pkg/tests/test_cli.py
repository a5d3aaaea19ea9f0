import csv
import json
import socket

import pytest

from watertrav.cli import main
from watertrav.dataset import agreement_histogram, load_manifest
from watertrav.fixture import build_fixture_dataset
from watertrav.store import load_annotation_records

from test_pipeline import scripted_ratings, write_mock_config


def test_validate_clean_fixture(fixture_root, capsys):
    assert main(["validate", "--dataset", str(fixture_root)]) == 0
    assert "0 violation(s)" in capsys.readouterr().out


def test_validate_missing_dataset(tmp_path, capsys):
    assert main(["validate", "--dataset", str(tmp_path / "nope")]) == 2
    assert "missing file" in capsys.readouterr().err


def test_validate_broken_mask_ref(tmp_path, capsys):
    root = build_fixture_dataset(tmp_path / "ds", n_images=1, with_annotations=False)
    raw = json.loads((root / "manifest.json").read_text())
    raw["instances"][0]["mask_path"] = "masks/gone.png"
    (root / "manifest.json").write_text(json.dumps(raw))
    assert main(["validate", "--dataset", str(root)]) == 1
    out = capsys.readouterr().out
    assert "instance_000" in out


def test_validate_reports_annotation_violations(tmp_path, capsys):
    root = build_fixture_dataset(tmp_path / "ds", n_images=1)
    with open(root / "annotations.jsonl", "a", encoding="utf-8") as fh:
        fh.write('{"annotator_id": "x", "instance_id": "instance_000", "robot_id": "husky_a200", "rating": 9}\n')
    assert main(["validate", "--dataset", str(root)]) == 1
    assert "rating_out_of_range" in capsys.readouterr().out


def test_agreement_outputs(fixture_root, tmp_path, capsys):
    out_dir = tmp_path / "agree"
    assert main(["agreement", "--dataset", str(fixture_root), "--out", str(out_dir)]) == 0
    captured = capsys.readouterr().out
    assert "24 annotated (instance, robot) keys" in captured

    manifest = load_manifest(fixture_root)
    stats = agreement_histogram(load_annotation_records(manifest.annotations_path()), bin_width=0.25)
    with open(out_dir / "agreement.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["count"]) for r in rows] == list(stats.counts)
    assert [float(r["bin_lo"]) for r in rows] == [pytest.approx(e) for e in stats.edges[:-1]]
    png = (out_dir / "agreement.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_agreement_requires_annotations(tmp_path, capsys):
    root = build_fixture_dataset(tmp_path / "ds", n_images=1, with_annotations=False)
    assert main(["agreement", "--dataset", str(root)]) == 1
    assert "no annotations" in capsys.readouterr().err


def test_agreement_single_annotator_single_bin(tmp_path, capsys):
    root = build_fixture_dataset(tmp_path / "ds", n_images=2, with_annotations=False)
    from watertrav.fixture import write_fixture_annotations

    manifest = load_manifest(root)
    write_fixture_annotations(root, [i.id for i in manifest.instances], n_annotators=1)
    out_dir = tmp_path / "agree"
    assert main(["agreement", "--dataset", str(root), "--out", str(out_dir)]) == 0
    with open(out_dir / "agreement.csv", newline="", encoding="utf-8") as fh:
        counts = [int(r["count"]) for r in csv.DictReader(fh)]
    assert counts[0] == sum(counts)  # all std devs are 0


def test_rate_then_eval_roundtrip(fixture_root, tmp_path, capsys):
    manifest = load_manifest(fixture_root)
    ratings, unparseable = scripted_ratings(manifest, n_unparseable=4)
    cfg = write_mock_config(tmp_path / "run.toml", fixture_root, tmp_path / "runs", ratings, unparseable)

    assert main(["rate", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "recorded 24 prediction(s)" in out
    run_dir = tmp_path / "runs" / "t1"
    assert (run_dir / "predictions.jsonl").is_file()

    assert main(["eval", "--run", str(run_dir), "--dataset", str(fixture_root)]) == 0
    out = capsys.readouterr().out
    assert "macro F1" in out and "failure rate 0.1667" in out
    assert (run_dir / "report.md").is_file()

    # rerun is a no-op
    assert main(["rate", "--config", str(cfg)]) == 0
    assert "recorded 0 prediction(s)" in capsys.readouterr().out


def test_rate_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("= broken", encoding="utf-8")
    assert main(["rate", "--config", str(bad)]) == 2
    assert "malformed" in capsys.readouterr().err


def test_eval_empty_run(tmp_path, fixture_root, capsys):
    assert main(["eval", "--run", str(tmp_path / "none"), "--dataset", str(fixture_root)]) == 1
    assert "no predictions" in capsys.readouterr().err


def test_serve_occupied_port(fixture_root, capsys):
    blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    try:
        assert main(["serve", "--dataset", str(fixture_root), "--port", str(port)]) == 2
        assert "cannot bind" in capsys.readouterr().err
    finally:
        blocker.close()
