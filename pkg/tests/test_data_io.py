import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from teleop_predictor.data_io import (
    CHANNELS,
    SyntheticParams,
    WindowSpec,
    fit_normalizer,
    gen_synthetic,
    load_trial,
    make_windows,
    parse_kinematics_row,
    read_trial_csv,
    split_trials,
    synthetic_clean,
    window_count,
    write_trial_csv,
    write_windows_csv,
)
from teleop_predictor.errors import (
    EmptyInputError,
    EmptyTrialError,
    FieldCountError,
    ParseError,
    TrialFileError,
    TrialTooShortError,
)


def row(values=None):
    vals = list(np.arange(76, dtype=float) / 100.0) if values is None else list(values)
    return " ".join(repr(float(v)) for v in vals)


def test_parse_slave_left_position():
    vals = [0.0] * 76
    vals[38:41] = [0.1, 0.2, 0.3]  # 1-based columns 39-41
    s = parse_kinematics_row(row(vals), "slave-left")
    np.testing.assert_array_equal(s.p, [0.1, 0.2, 0.3])


def test_parse_field_count_and_bad_token():
    with pytest.raises(FieldCountError):
        parse_kinematics_row(row([0.0] * 75))
    tokens = row().split()
    tokens[39] = "abc"  # 1-based field 40
    with pytest.raises(ParseError):
        parse_kinematics_row(" ".join(tokens))


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=76, max_size=76),
       st.sampled_from(["master-left", "master-right", "slave-left", "slave-right"]))
def test_parse_order_reproduces_block(values, block):
    s = parse_kinematics_row(row(values), block)
    start = ["master-left", "master-right", "slave-left", "slave-right"].index(block) * 19
    np.testing.assert_array_equal(s.as_vector(), values[start : start + 19])


def test_load_trial(tmp_path):
    p = tmp_path / "Knot_Tying_B001.txt"
    p.write_text("\n".join(row() for _ in range(100)) + "\n")
    tr = load_trial(p)
    assert len(tr) == 100
    assert tr.samples[-1].t == pytest.approx(99 / 30)
    assert tr.source == "jigsaws-file" and tr.id == "Knot_Tying_B001"


def test_load_trial_errors(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    with pytest.raises(EmptyTrialError):
        load_trial(empty)
    bad = tmp_path / "bad.txt"
    lines = [row() for _ in range(10)]
    lines[6] = row([0.0] * 70)
    bad.write_text("\n".join(lines))
    with pytest.raises(FieldCountError, match="line 7") as info:
        load_trial(bad)
    assert info.value.line_no == 7
    with pytest.raises(TrialFileError):
        load_trial(tmp_path / "missing.txt")


def _trial_with_x(values):
    params = SyntheticParams(amplitudes=((0, 0),) * 3, offsets=(0, 0, 0))
    base = gen_synthetic(len(values), 0, params)
    from dataclasses import replace

    return type(base)(base.id, [replace(s, p=np.array([v, 0.0, 0.0])) for s, v in zip(base.samples, values)])


def test_fit_normalizer_examples():
    st_const = fit_normalizer([_trial_with_x([5.0] * 4)], ["x"])
    assert st_const.mean[0] == 5.0 and st_const.std[0] == 1e-8
    sym = fit_normalizer([_trial_with_x([-1.0, 1.0])], ["x"])
    assert sym.mean[0] == 0.0 and sym.std[0] == 1.0
    four = fit_normalizer([_trial_with_x([1.0, 2.0, 3.0, 4.0])], ["x"])
    # oracle: population std from the definition
    oracle = math.sqrt(sum((v - 2.5) ** 2 for v in (1, 2, 3, 4)) / 4)
    assert four.mean[0] == 2.5
    assert four.std[0] == pytest.approx(oracle, rel=1e-15)
    assert four.std[0] == pytest.approx(1.1180, abs=1e-4)
    with pytest.raises(EmptyInputError):
        fit_normalizer([])


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30))
def test_normalizer_round_trip(values):
    tr = _trial_with_x(values)
    stats = fit_normalizer([tr])
    x = tr.positions()
    back = stats.inverse(stats.transform(x))
    assert np.all(np.abs(back - x) <= 1e-9 * np.maximum(np.abs(x), 1.0))


def test_make_windows_counts():
    assert len(make_windows(10, WindowSpec(4, 2, 2, 1))) == 5
    assert len(make_windows(6, WindowSpec(4, 2, 2, 1))) == 1
    with pytest.raises(TrialTooShortError):
        make_windows(5, WindowSpec(4, 2, 2, 1))
    enc, tgt = make_windows(6, WindowSpec(4, 2, 2, 1))[0]
    np.testing.assert_array_equal(enc, [0, 1, 2, 3])
    np.testing.assert_array_equal(tgt, [4, 5])


@given(st.integers(1, 40), st.integers(1, 10), st.integers(1, 5), st.integers(0, 4), st.integers(0, 200))
def test_make_windows_bounds(enc, pred, stride, tau, extra):
    spec = WindowSpec(enc, min(enc, 3), pred, stride, tau)
    length = spec.span + extra
    wins = make_windows(length, spec)
    assert len(wins) == (length - enc - tau - pred) // stride + 1 == window_count(length, spec)
    for e, t in wins:
        assert e.min() >= 0 and t.max() < length
        assert t[0] == e[-1] + 1 + tau


def test_gen_synthetic_closed_form():
    tr = gen_synthetic(60, seed=3)  # default: x = 0.1 sin(2 pi 0.2 t), noise 0
    x = tr.positions()[:, 0]
    assert x[0] == 0.0
    # t = 1.25 s is frame 37.5, so evaluate the closed form directly as well
    assert synthetic_clean(np.array([1.25]), SyntheticParams())[0, 0] == pytest.approx(0.1, abs=1e-15)
    np.testing.assert_allclose(x, 0.1 * np.sin(2 * np.pi * 0.2 * tr.times), rtol=0, atol=1e-12)


def test_gen_synthetic_derivative_and_constants():
    params = SyntheticParams(amplitudes=((0.1, 0.02), (0.05, 0.0), (0.0, 0.03)),
                             frequencies=((0.2, 0.9), (0.4, 0.0), (0.0, 0.7)))
    tr = gen_synthetic(300, 0, params)
    v = np.stack([s.v for s in tr.samples])
    h = 1e-6
    t = tr.times
    fd = (synthetic_clean(t + h, params) - synthetic_clean(t - h, params)) / (2 * h)
    np.testing.assert_allclose(v, fd, atol=1e-8)
    np.testing.assert_allclose(tr.positions(), synthetic_clean(t, params), atol=1e-12)
    assert all(np.array_equal(s.R, np.eye(3)) for s in tr.samples)


def test_gen_synthetic_seeding():
    params = SyntheticParams(noise_std=(0.01, 0.01, 0.01))
    a = gen_synthetic(50, 7, params).positions()
    b = gen_synthetic(50, 7, params).positions()
    c = gen_synthetic(50, 8, params).positions()
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_split_is_seeded_and_disjoint():
    trials = [gen_synthetic(5, i, trial_id=f"t{i:02d}") for i in range(20)]
    tr, va, te = split_trials(trials, seed=0)
    assert (len(tr), len(va), len(te)) == (14, 3, 3)
    ids = [t.id for t in tr + va + te]
    assert len(set(ids)) == 20
    again = split_trials(list(reversed(trials)), seed=0)
    assert [t.id for t in again[2]] == [t.id for t in te]


def test_trial_csv_round_trip(tmp_path):
    tr = gen_synthetic(40, 1, SyntheticParams(noise_std=(0.01, 0.0, 0.02)))
    p = write_trial_csv(tr, tmp_path / "trial.csv")
    assert p.read_text().splitlines()[0] == ",".join(("t",) + CHANNELS)
    back = read_trial_csv(p)
    np.testing.assert_array_equal(back.positions(), tr.positions())
    w = write_windows_csv(tr, WindowSpec(10, 5, 4, 10), tmp_path / "win.csv")
    lines = w.read_text().splitlines()
    assert lines[0] == "t,x,y,z,window,role"
    assert len(lines) - 1 == 3 * 14
