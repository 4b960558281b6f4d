import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clickcal.codec import PredictionRecord
from clickcal.env import TaskConfig, ToyPolicy, cell_center, cell_of, generate_tasks, policy_logits, softmax
from clickcal.geometry import BBox, InvalidParameterError, Point, build_field, center, truncated_confidence
from clickcal.metrics import (
    REPORT_SCHEMA,
    InvalidInputError,
    accuracy,
    ap_at_conf,
    brier,
    calibration_report,
    confidence_gap,
    ece,
    heatmap,
    heatmap_csv,
    heatmap_pgm,
    predict,
    stability,
    write_heatmap,
)

BOX = BBox(0, 0, 10, 10)


def rec(correct, c, i=0):
    p = Point(5, 5) if correct else Point(50, 50)
    return PredictionRecord(f"r{i}", p, c, 0.5, correct, BOX)


def test_accuracy_examples():
    assert accuracy([rec(True, 1)] * 3) == 1.0
    assert accuracy([rec(False, 1)] * 3) == 0.0
    assert accuracy([rec(True, 1), rec(True, 1), rec(True, 1), rec(False, 1)]) == 0.75


def test_ap_examples():
    rs = [rec(True, 0.9), rec(False, 0.6)]
    assert ap_at_conf(rs, 0.75) == 1.0
    assert ap_at_conf(rs, 0.5) == 0.5
    assert ap_at_conf(rs, 0.95) == 0.0
    assert ap_at_conf(rs, 0.0) == accuracy(rs)
    with pytest.raises(InvalidParameterError):
        ap_at_conf(rs, 1.5)


def test_brier_examples():
    assert brier([rec(True, 1.0)] * 4) == 0.0
    assert brier([rec(True, 0.5), rec(False, 0.5), rec(False, 0.5)]) == 0.25
    assert brier([rec(True, 0.8), rec(False, 0.8)]) == pytest.approx(0.34, abs=1e-15)


def test_ece_examples():
    assert ece([rec(False, 1.0)] * 5) == 1.0
    assert ece([rec(True, 1.0)]) == 0.0


def test_ece_construction_oracle():
    # per bin, accuracy equals the bin's mean confidence by construction
    rng = np.random.default_rng(0)
    rs = []
    for b in range(10):
        n = 1000
        conf = np.full(n, (b + 0.5) / 10)
        hits = np.zeros(n, dtype=bool)
        hits[: int(round(conf[0] * n))] = True
        rng.shuffle(hits)
        rs += [rec(bool(h), float(c), i) for i, (h, c) in enumerate(zip(hits, conf))]
    assert ece(rs, 10) < 1 / 20


def test_ece_matches_loop_oracle():
    rng = np.random.default_rng(1)
    rs = [rec(bool(rng.random() < 0.6), float(rng.random()), i) for i in range(2000)]
    c = np.array([r.c_hat for r in rs])
    y = np.array([r.correct for r in rs], dtype=float)
    total = 0.0
    for b in range(10):
        lo, hi = b / 10, (b + 1) / 10
        m = (c >= lo) & ((c < hi) if b < 9 else (c <= hi))
        if m.any():
            total += m.sum() / c.size * abs(y[m].mean() - c[m].mean())
    assert ece(rs, 10) == pytest.approx(total, abs=1e-12)


def test_empty_inputs_rejected():
    for f in (accuracy, brier, ece, confidence_gap, calibration_report):
        with pytest.raises(InvalidInputError):
            f([])
    with pytest.raises(InvalidInputError):
        ap_at_conf([], 0.5)
    with pytest.raises(InvalidParameterError):
        ece([rec(True, 1)], 0)


records = st.lists(st.tuples(st.booleans(), st.floats(0, 1)), min_size=1, max_size=60)


@given(records, st.randoms(use_true_random=False))
def test_metrics_permutation_invariant_and_bounded(rows, rnd):
    rs = [rec(h, c, i) for i, (h, c) in enumerate(rows)]
    shuffled = rs[:]
    rnd.shuffle(shuffled)
    a, b = calibration_report(rs), calibration_report(shuffled)
    for key in ("accuracy", "brier", "ece", "confidence_gap", "mean_verbalized_conf"):
        assert getattr(a, key) == pytest.approx(getattr(b, key), abs=1e-12)
    assert a.ap_at == pytest.approx(b.ap_at, abs=1e-12)
    assert 0 <= a.brier <= 1 and 0 <= a.ece <= 1 and -1 <= a.confidence_gap <= 1
    assert ap_at_conf(rs, 0.0) == a.accuracy


def _check_schema(doc, schema):
    # enough of JSON Schema for the report: types, required keys and bounds
    kind = schema.get("type")
    if kind == "object":
        assert isinstance(doc, dict)
        for k in schema.get("required", []):
            assert k in doc
        for k, v in doc.items():
            sub = schema.get("properties", {}).get(k) or schema.get("additionalProperties")
            if isinstance(sub, dict):
                _check_schema(v, sub)
    elif kind == "integer":
        assert isinstance(doc, int)
    elif kind == "number":
        assert isinstance(doc, (int, float))
    if "minimum" in schema:
        assert doc >= schema["minimum"]
    if "maximum" in schema:
        assert doc <= schema["maximum"]


def test_report_round_trip_and_schema():
    rs = [rec(True, 0.9), rec(False, 0.2, 1), rec(True, 0.6, 2)]
    rep = calibration_report(rs)
    doc = json.loads(rep.to_json())
    _check_schema(doc, REPORT_SCHEMA)
    assert set(doc["ap_at"]) == {"0.5", "0.75", "0.9", "0.95"}
    text = rep.to_text()
    assert "accuracy" in text and "AP@0.95" in text
    assert rep.to_json() == calibration_report(rs).to_json()


def test_predict_records():
    tasks = generate_tasks(30, TaskConfig(), 3)
    pol = ToyPolicy.init(12, 12, cell_gain=8.0)
    for t, r in zip(tasks, predict(pol, tasks)):
        z, y = policy_logits(pol, t)
        cell = int(np.argmax(z))
        assert r.point == cell_center(t, cell)
        assert r.correct == (t.target.x1 < r.point.x < t.target.x2 and t.target.y1 < r.point.y < t.target.y2)
        joint = softmax(z)[cell] * softmax(y[cell])[int(np.argmax(y[cell]))]
        assert r.prob_conf == pytest.approx(joint, rel=1e-12)


# --------------------------------------------------------------------------
# stability

def test_stability_matches_brute_force():
    tasks = generate_tasks(40, TaskConfig(), 4)
    pol = ToyPolicy.init(12, 12, scale=0.5, rng=2, cell_gain=5.0)
    rep = stability(pol, tasks, repeats=8, temperature=1.0, rng=0, sample_sizes=[10, 40])
    for vals, var in zip(rep.samples, rep.per_task_variance):
        v = np.array(vals)
        assert len(vals) == 8
        assert abs(var - np.sum((v - v.sum() / 8) ** 2) / 8) < 1e-12
    assert rep.mean_variance[1] == pytest.approx(np.mean(rep.per_task_variance), abs=1e-12)
    assert rep.mean_variance[0] == pytest.approx(np.mean(rep.per_task_variance[:10]), abs=1e-12)


def test_stability_conditions_on_greedy_cell():
    t = generate_tasks(1, TaskConfig(), 4)[0]
    pol = ToyPolicy.init(12, 12, scale=0.5, rng=2, cell_gain=5.0)
    z, y = policy_logits(pol, t)
    rep = stability(pol, [t], repeats=4000, temperature=1.0, rng=1)
    q = softmax(y[int(np.argmax(z))])
    freq = np.bincount(np.rint(np.array(rep.samples[0]) * 20).astype(int), minlength=21) / 4000
    assert np.all(np.abs(freq - q) < 4 * np.sqrt(q * (1 - q) / 4000) + 1e-3)


def test_stability_deterministic_head():
    t = generate_tasks(3, TaskConfig(), 4)
    pol = ToyPolicy.init(12, 12)
    pol.b_conf[7] = 1e3
    assert stability(pol, t, rng=0).mean_variance == [0.0]


def test_stability_validation():
    t = generate_tasks(3, TaskConfig(), 4)
    pol = ToyPolicy.init(12, 12)
    with pytest.raises(InvalidParameterError):
        stability(pol, t, repeats=1)
    with pytest.raises(InvalidParameterError):
        stability(pol, t, sample_sizes=[4])


# --------------------------------------------------------------------------
# heatmaps

def _task_with_box(cells, cfg=TaskConfig()):
    tasks = generate_tasks(1, cfg, 0)
    x1, y1, x2, y2 = (v * cfg.cell_size for v in cells)
    from dataclasses import replace
    return replace(tasks[0], target=BBox(x1, y1, x2, y2))


def test_truth_heatmap_properties():
    t = _task_with_box((3, 4, 6, 7))  # 3x3 cells, centre cell (4, 5)
    m = heatmap("truth", t)
    assert m.shape == (12, 12)
    assert np.unravel_index(np.argmax(m), m.shape) == (5, 4)
    assert m[5, 4] == 1.0
    inside = np.zeros_like(m, dtype=bool)
    inside[4:7, 3:6] = True
    assert np.all(m[~inside] == 0.0)
    fld = build_field(t.target, 0.25)
    for r in range(12):
        for c in range(12):
            assert abs(m[r, c] - truncated_confidence(fld, cell_center(t, r * 12 + c))) < 1e-12


def test_truth_heatmap_wider_alpha_is_flatter():
    t = _task_with_box((2, 2, 7, 7))
    lo, hi = heatmap("truth", t, alpha=0.25), heatmap("truth", t, alpha=0.5)
    assert hi[4, 5] > lo[4, 5]


def test_truth_heatmap_resolution():
    t = _task_with_box((2, 2, 5, 5))
    m = heatmap("truth", t, resolution=(48, 24))
    assert m.shape == (24, 48)
    assert m.max() <= 1.0 and np.all(m >= 0)


def test_policy_heatmap_forces_each_cell():
    t = generate_tasks(1, TaskConfig(), 5)[0]
    pol = ToyPolicy.init(12, 12, scale=1.0, rng=4)
    m = heatmap(pol, t)
    _, y = policy_logits(pol, t)
    assert np.array_equal(m.ravel(), np.argmax(y, axis=1) / 20)
    with pytest.raises(InvalidParameterError):
        heatmap(42, t)


def test_heatmap_exports(tmp_path):
    m = np.array([[0.0, 0.5], [1.0, 0.25]])
    pgm = heatmap_pgm(m)
    assert pgm == b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64])
    assert heatmap_csv(m) == "0.0,0.5\n1.0,0.25\n"
    t = _task_with_box((3, 4, 6, 7))
    a = write_heatmap(tmp_path / "a", heatmap("truth", t))
    b = write_heatmap(tmp_path / "b", heatmap("truth", t))
    assert open(a[1], "rb").read() == open(b[1], "rb").read()
    assert open(a[0]).read() == open(b[0]).read()
    with pytest.raises(InvalidParameterError):
        heatmap_pgm(np.array([[1.5]]))
