import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from teleop_predictor.errors import ComparisonError, DegenerateRangeError, EmptyError, LengthMismatchError, SplitMismatchError
from teleop_predictor.evaluation import (
    ConstraintSpec,
    EvalReport,
    check_constraints,
    compare_models,
    compute_errors,
    default_constraints,
    emit_overlay,
    evaluate_predictions,
    max_step,
    per_axis_accuracy,
)

# reference comparison rows: model, mse, rmse
REFERENCE = [("Informer", 0.123, 0.351), ("TCN", 0.198, 0.445), ("LSTM", 0.239, 0.489), ("RNN", 0.256, 0.502)]

finite = st.floats(-100, 100, allow_nan=False)


def report(model_id, mse, split="s"):
    return EvalReport(model_id=model_id, mse=mse, mae=mse / 2, rmse=math.sqrt(mse), split_hash=split)


def test_compute_errors_examples():
    t = np.random.default_rng(0).normal(size=(10, 3))
    zero = compute_errors(t, t)
    assert zero["mse"] == zero["mae"] == zero["rmse"] == 0.0
    e = compute_errors(np.zeros((5, 3)), np.tile([1.0, 0.0, 0.0], (5, 1)))
    assert e["mse"] == 1.0 and e["rmse"] == 1.0
    assert e["mae"] == pytest.approx(1 / 3, rel=1e-15)
    assert e["per_axis"]["x"]["mae"] == 1.0 and e["per_axis"]["y"]["rmse"] == 0.0
    with pytest.raises(LengthMismatchError):
        compute_errors(np.zeros((3, 3)), np.zeros((2, 3)))
    with pytest.raises(EmptyError):
        compute_errors(np.zeros((0, 3)), np.zeros((0, 3)))


def test_rmse_fixed_point_on_reference_rows():
    # an error of constant norm sqrt(mse) reproduces each reference mse exactly
    for _, mse, rmse in REFERENCE[:3]:
        pred = np.tile([math.sqrt(mse), 0.0, 0.0], (4, 1))
        e = compute_errors(np.zeros((4, 3)), pred)
        assert abs(e["rmse"] ** 2 - e["mse"]) <= 1e-12
        assert round(e["rmse"], 3) == rmse
    assert round(compute_errors(np.zeros((1, 3)), [[math.sqrt(0.123), 0, 0]])["rmse"], 4) == 0.3507
    # the reference RNN row is not self-consistent: sqrt(0.256) = 0.506, not 0.502
    assert round(math.sqrt(0.256), 3) != REFERENCE[3][2]


@settings(max_examples=50)
@given(arrays(float, (12, 3), elements=finite), arrays(float, (12, 3), elements=finite), st.randoms())
def test_errors_permutation_covariant(truth, pred, rnd):
    perm = list(range(12))
    rnd.shuffle(perm)
    a, b = compute_errors(truth, pred), compute_errors(truth[perm], pred[perm])
    for key in ("mse", "mae", "rmse"):
        assert b[key] == pytest.approx(a[key], rel=1e-12, abs=1e-12)
    assert abs(a["rmse"] ** 2 - a["mse"]) <= 1e-12 * max(1.0, a["mse"])


def test_accuracy_examples():
    t = np.linspace(0, 1, 21)
    truth = np.stack([t, t, t], axis=1)
    assert per_axis_accuracy(truth, truth, "x") == 100.0
    # symmetric sawtooth sampled at cell midpoints: mean 0.5 and mean |x - 0.5| = 0.25 exactly;
    # the endpoints 0, 1 plus two samples at 0.5 pin the range to 1 without moving either
    saw = np.abs(((np.arange(4000) + 0.5) / 1000.0) % 2.0 - 1.0)
    saw = np.concatenate([saw, [0.0, 1.0, 0.5, 0.5]])
    truth = np.stack([saw, saw, saw], axis=1)
    const = np.full_like(truth, truth.mean())
    assert per_axis_accuracy(truth, const, 0) == pytest.approx(75.0, abs=1e-9)
    assert per_axis_accuracy(np.stack([t, t, t], 1), np.stack([t + 1.0, t, t], 1), "x") == 0.0
    assert per_axis_accuracy(np.stack([t, t, t], 1), np.stack([t + 5.0, t, t], 1), "x") == 0.0
    with pytest.raises(DegenerateRangeError):
        per_axis_accuracy(np.ones((4, 3)), np.ones((4, 3)), "y")


@settings(max_examples=50)
@given(arrays(float, (10, 3), elements=finite), arrays(float, (10, 3), elements=finite), st.floats(1e-3, 1e3))
def test_accuracy_scale_invariant(truth, pred, s):
    truth[0] = 0.0
    truth[1] = 1.0  # keep every axis range non-degenerate
    for axis in range(3):
        a = per_axis_accuracy(truth, pred, axis)
        b = per_axis_accuracy(truth * s, pred * s, axis)
        assert 0.0 <= a <= 100.0
        assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


def test_constraints_examples():
    spec = ConstraintSpec(0.1, p_min=[0, 0, 0], p_max=[1, 1, 1])
    assert check_constraints(np.full((5, 3), 0.5), spec) == {"sync_violations": 0, "bounds_violations": 0}
    jump = np.array([[0.5, 0.5, 0.5], [0.7, 0.5, 0.5], [0.7, 0.5, 0.5]])
    assert check_constraints(jump, spec)["sync_violations"] == 1
    graze = np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    assert check_constraints(graze, ConstraintSpec(10.0, [0, 0, 0], [1, 1, 1]))["bounds_violations"] == 0
    assert check_constraints(np.array([[1.0 + 1e-12, 0.5, 0.5]]), spec)["bounds_violations"] == 1
    assert check_constraints(np.array([[0.5, 0.5, 0.5]]), spec)["sync_violations"] == 0
    with pytest.raises(ValueError):
        ConstraintSpec(0.0)
    with pytest.raises(ValueError):
        ConstraintSpec(0.1, [0, 0, 0], [1, 0, 1])


def test_default_constraints_accept_ground_truth():
    rng = np.random.default_rng(1)
    trajs = [np.cumsum(rng.normal(scale=0.01, size=(200, 3)), axis=0) for _ in range(4)]
    spec = default_constraints(trajs)
    assert spec.eps_sync == pytest.approx(1.5 * max_step(trajs))
    for p in trajs:
        assert check_constraints(p, spec) == {"sync_violations": 0, "bounds_violations": 0}
    data = np.concatenate(trajs)
    lo, hi = data.min(0), data.max(0)
    np.testing.assert_allclose(spec.p_min, lo - 0.1 * (hi - lo))


def test_evaluate_predictions_report():
    rng = np.random.default_rng(2)
    truth = rng.normal(size=(50, 3))
    rep = evaluate_predictions("m", truth, truth + 0.1, [truth + 0.1], ConstraintSpec(100.0), split_hash="h")
    assert rep.rmse ** 2 == pytest.approx(rep.mse, abs=1e-12)
    assert set(rep.per_axis) == {"x", "y", "z"}
    assert rep.per_axis["x"]["range"] == truth[:, 0].max() - truth[:, 0].min()
    assert "accuracy_pct" in rep.metadata
    assert EvalReport.from_dict(rep.to_dict()) == rep


def test_compare_reference_order():
    table = compare_models([report(m, mse) for m, mse, _ in reversed(REFERENCE)])
    assert table.order == ["Informer", "TCN", "LSTM", "RNN"]
    lines = table.to_csv().splitlines()
    assert lines[0] == "model,mse,mae,rmse" and lines[1].startswith("Informer,0.123,")
    assert len(table.to_text().splitlines()) == 5


def test_compare_errors_and_ties():
    with pytest.raises(ComparisonError):
        compare_models([report("a", 0.1)])
    with pytest.raises(SplitMismatchError):
        compare_models([report("a", 0.1, "s1"), report("b", 0.2, "s2")])
    assert compare_models([report("zeta", 0.1), report("alpha", 0.1), report("mid", 0.05)]).order == \
        ["mid", "alpha", "zeta"]


def test_overlay():
    rng = np.random.default_rng(3)
    truth = rng.normal(size=(6, 3))
    lost = np.array([0, 1, 1, 0, 0, 1], dtype=bool)
    received = np.where(lost[:, None], 0.0, truth)
    text = emit_overlay(truth, received, truth + 0.01, lost)
    rows = text.split("\n")
    assert rows[0] == "t,axis,truth,received,predicted,lost" and rows[-1] == ""
    body = [r.split(",") for r in rows[1:-1]]
    assert len(body) == 18 and "\r" not in text
    assert [int(r[5]) for r in body[::3]] == lost.astype(int).tolist()
    assert body[4][1] == "y" and body[4][2] == "%.9g" % truth[1, 1]
    clean = emit_overlay(truth, truth, truth, np.zeros(6, bool))
    assert all(r.split(",")[2] == r.split(",")[3] for r in clean.splitlines()[1:])
    with pytest.raises(LengthMismatchError):
        emit_overlay(truth, truth[:5], truth, lost)
