import json
import math
from pathlib import Path

import pytest

from echoexplain import cli
from echoexplain.contour_io import CardiacCycle, ContourFrame, cycle_to_dict
from echoexplain.narrative import basic_sentences, load_registry
from echoexplain.synthetic import ellipse_frame, ellipse_tracings, tracing_csv
from oracles import random_status_set

DATA = Path(__file__).parent / "data"
GOLDEN_CSV = str(DATA / "golden_tracings.csv")


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    docs = [json.loads(line) for line in out.splitlines() if line.strip()]
    return code, docs, err


def dented_cycle(video_id="0XBULGE", depth=14.0):
    """Ellipse cycle with a septal dent deep enough to read as a prominent bulge."""
    f = ellipse_frame(45, 20, n=201)
    xy = f.xy.copy()
    for i in range(f.apex_index + 1):
        x, y = xy[i]
        xy[i, 0] = x + depth * math.exp(-((y - 60.0) / 8.0) ** 2) * math.copysign(1, 56.0 - x)
    ed = ContourFrame.from_points(xy, f.apex, f.basal_left, f.basal_right)
    es = ellipse_frame(40, 14, center=(56.0, 58.0), frame_index=1)
    return cycle_to_dict(CardiacCycle(video_id, ed, es))


# -- measure / ef ----------------------------------------------------------------

def test_measure_golden(capsys):
    code, docs, _ = run(["measure", GOLDEN_CSV], capsys)
    assert code == 0 and len(docs) == 1
    golden = json.loads((DATA / "golden_vector.json").read_text())
    for key in ("ef", "length", "mid_width", "apex_percent", "basal_vertical", "area_change_percent"):
        assert docs[0][key] == pytest.approx(golden[key], rel=1e-6, abs=1e-9), key
    assert docs[0]["segment_labels"] == golden["segment_labels"]
    assert docs[0]["seed"] == 0


def test_measure_output_file(tmp_path, capsys):
    out = tmp_path / "vec.jsonl"
    code, docs, _ = run(["measure", GOLDEN_CSV, "-o", out], capsys)
    assert code == 0 and docs == []
    assert json.loads(out.read_text())["video_id"] == "0XGOLD"


def test_missing_input_exit_1(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    code, _, err = run(["measure", missing], capsys)
    assert code == 1
    assert str(missing) in err


def test_malformed_csv_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("FileName,X1,Y1,X2,Y2,Frame\na.avi,1,2,3\n")
    code, _, err = run(["measure", bad], capsys)
    assert code == 1 and "2" in err


def test_spacing_scales_volume(capsys):
    _, base, _ = run(["ef", GOLDEN_CSV], capsys)
    _, scaled, _ = run(["ef", GOLDEN_CSV, "--spacing", "0.1"], capsys)
    assert scaled[0]["edv"] == pytest.approx(base[0]["edv"] * 1e-3, rel=1e-9)
    assert scaled[0]["ef"] == pytest.approx(base[0]["ef"], abs=1e-9)


def test_ef_with_file_list(tmp_path, capsys):
    fl = tmp_path / "FileList.csv"
    fl.write_text("FileName,EF,ESV,EDV\n0XGOLD,55.0,30,70\n")
    code, docs, _ = run(["ef", GOLDEN_CSV, "--file-list", fl], capsys)
    assert code == 0
    assert docs[0]["reference_ef"] == 55.0
    assert docs[0]["abs_error"] == pytest.approx(abs(docs[0]["ef"] - 55.0))


def test_jobs_preserve_order(tmp_path, capsys):
    rows = []
    for k in range(6):
        name = f"0XV{k}.avi"
        rows += ellipse_tracings(45, 20, file_name=name, frame=10)
        rows += ellipse_tracings(40, 12 + k, center=(56.0, 58.0), file_name=name, frame=30)
    csv_path = tmp_path / "many.csv"
    csv_path.write_text(tracing_csv(rows))
    _, serial, _ = run(["ef", csv_path], capsys)
    _, parallel, _ = run(["ef", csv_path, "--jobs", "4"], capsys)
    assert [d["video_id"] for d in parallel] == [f"0XV{k}" for k in range(6)]
    assert serial == parallel


def test_soft_failure_skipped(tmp_path, capsys):
    good = cycle_to_dict(CardiacCycle("0XOK", ellipse_frame(45, 20), ellipse_frame(45, 14, frame_index=1)))
    bad = dict(good, video_id="0XBAD")
    bad["es"] = dict(bad["es"], frame_index=0)  # same frame index as ED
    path = tmp_path / "cycles.jsonl"
    path.write_text(json.dumps(bad) + "\n" + json.dumps(good) + "\n")
    code, docs, err = run(["measure", path], capsys)
    assert code == 0
    assert [d["video_id"] for d in docs] == ["0XOK"]
    assert "1 written, 1 skipped" in err


def test_all_failed_uses_first_code(tmp_path, capsys):
    good = cycle_to_dict(CardiacCycle("0XOK", ellipse_frame(45, 20), ellipse_frame(45, 14, frame_index=1)))
    bad = dict(good, es=dict(good["es"], frame_index=0))
    path = tmp_path / "cycles.json"
    path.write_text(json.dumps([bad]))
    code, docs, _ = run(["measure", path], capsys)
    assert code == 2 and docs == []  # invariant violations are computation errors


# -- narrate ---------------------------------------------------------------------

def test_narrate_offline_bulge(tmp_path, capsys, connection_log):
    path = tmp_path / "bulge.json"
    path.write_text(json.dumps(dented_cycle()))
    cfg = tmp_path / "thresholds.json"
    cfg.write_text(json.dumps({"bulge_thresholds": [100, 900, 950]}))
    code, docs, _ = run(["narrate", path, "--config", cfg], capsys)
    assert code == 0
    assert "prominent septal bulge" in docs[0]["basic_text"]
    code, docs, _ = run(["narrate", path], capsys)
    assert "means that there is no bulge" in docs[0]["basic_text"]
    assert "refined_text" not in docs[0]
    assert connection_log.hosts == []


def test_narrate_deterministic(capsys):
    _, a, _ = run(["narrate", GOLDEN_CSV, "--seed", "7"], capsys)
    _, b, _ = run(["narrate", GOLDEN_CSV, "--seed", "7"], capsys)
    assert a == b and a[0]["seed"] == 7


def test_narrate_matches_golden_bundle(capsys):
    _, docs, _ = run(["narrate", GOLDEN_CSV], capsys)
    golden = json.loads((DATA / "golden_bundle.json").read_text())
    assert docs[0]["basic_text"] == golden["basic_text"]
    assert docs[0]["elaborated_text"] == golden["elaborated_text"]


def test_narrate_online(tmp_path, capsys, mock_chat):
    mock_chat.responder = lambda req: "The volume drops by half, so the estimate is 50%."
    cfg = tmp_path / "endpoint.json"
    cfg.write_text(json.dumps({"base_url": mock_chat.url, "model": "mock", "backoff_base": 0.01}))
    code, docs, _ = run(["narrate", GOLDEN_CSV, "--online", "--endpoint", cfg], capsys)
    assert code == 0
    assert docs[0]["refined_text"].startswith("The volume drops by half")
    sent = json.loads(mock_chat.requests[0])
    assert sent["temperature"] == pytest.approx(0.7)


def test_narrate_online_failure_exit_3(tmp_path, capsys, mock_chat):
    mock_chat.script = [(500, "oops")] * 10
    cfg = tmp_path / "endpoint.json"
    cfg.write_text(json.dumps({"base_url": mock_chat.url, "model": "mock", "backoff_base": 0.01,
                               "max_retries": 1}))
    code, docs, _ = run(["narrate", GOLDEN_CSV, "--online", "--endpoint", cfg], capsys)
    assert code == 3
    assert "refinement_error" in docs[0] and docs[0]["basic_text"]


def test_endpoint_without_online_stays_offline(tmp_path, capsys, connection_log):
    cfg = tmp_path / "endpoint.json"
    cfg.write_text(json.dumps({"base_url": "http://192.0.2.1/v1", "model": "mock"}))
    code, docs, _ = run(["narrate", GOLDEN_CSV, "--endpoint", cfg], capsys)
    assert code == 0 and "refined_text" not in docs[0]
    assert connection_log.hosts == []


# -- evaluate --------------------------------------------------------------------

def _pairs_file(tmp_path, rows):
    path = tmp_path / "pairs.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_evaluate_self_consistent(tmp_path, capsys, rng):
    reg = load_registry()
    rows = []
    for i in range(10):
        text = basic_sentences(random_status_set(reg, rng), registry=reg)
        rows.append({"id": i, "gt_text": text, "pred_text": text})
    code, docs, err = run(["evaluate", _pairs_file(tmp_path, rows)], capsys)
    assert code == 0
    assert docs[0]["mistral_accuracy"] == 1.0
    assert docs[0]["extractor"] == "rule_based"
    assert "mistral acc" in err


def test_evaluate_injected_contradiction(tmp_path, capsys):
    base = "A bulge value of 500 means that there is no bulge."
    flip = "A bulge value of 200 means that there is a prominent septal bulge."
    rows = [{"id": i, "gt_text": base, "pred_text": flip if i == 2 else base} for i in range(5)]
    code, docs, _ = run(["evaluate", _pairs_file(tmp_path, rows)], capsys)
    assert code == 0
    assert docs[0]["mean_contradictions"] == pytest.approx(1 / 5)


def test_evaluate_empty_exit_1(tmp_path, capsys):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    code, docs, err = run(["evaluate", path], capsys)
    assert code == 1 and docs == []
    assert "EmptyInput" in err


def test_online_without_endpoint_exit_1(tmp_path, capsys):
    code, _, err = run(["narrate", GOLDEN_CSV, "--online"], capsys)
    assert code == 1 and "--endpoint" in err
