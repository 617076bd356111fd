import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snmdd.bursts import (BurstModel, as_gaps, detect_bursts, fit_model, min_cost_states, sequence_cost,
                          summarize_bursts, write_burst_csv)


def brute_force(gaps, model):
    best, best_q = np.inf, None
    for q in itertools.product((0, 1), repeat=len(gaps)):
        c = sequence_cost(gaps, q, model)
        if c < best - 1e-12:
            best, best_q = c, q
    return best, np.array(best_q)


def test_fit_model_examples():
    m = fit_model([2.0, 2.0, 2.0])
    assert m.alpha0 == pytest.approx(0.5) and m.alpha1 == pytest.approx(1.0)
    m = fit_model([1.0, 3.0])
    assert m.alpha0 == pytest.approx(0.5) and m.alpha1 == pytest.approx(1.0)
    m = fit_model([0.3, 7.0, 2.0], s=1.5)
    assert m.alpha1 / m.alpha0 == pytest.approx(1.5, rel=0, abs=1e-15)
    with pytest.raises(ValueError, match="no gaps"):
        fit_model([])


def test_zero_gaps_clamped():
    assert np.array_equal(as_gaps([0, 5]), [1.0, 5.0])


def test_constant_gaps_all_q0():
    gaps = np.full(15, 4.0)
    q, _ = min_cost_states(gaps, fit_model(gaps))
    assert not q.any()


def test_dp_matches_exhaustive(rng):
    for _ in range(200):
        n = int(rng.integers(1, 13))
        gaps = rng.exponential(1.0, n) * rng.choice([0.05, 1.0, 5.0], n)
        model = fit_model(gaps, s=float(rng.uniform(1.5, 4)), gamma=float(rng.uniform(0.1, 2)))
        q, cost = min_cost_states(gaps, model)
        best, _ = brute_force(gaps, model)
        assert cost == pytest.approx(best, rel=1e-9, abs=1e-12)
        assert sequence_cost(gaps, q, model) == pytest.approx(cost, rel=1e-9)


def test_tiny_run_is_one_burst():
    # a run must save more than the two transition costs 2 ln n, so 8 of 12 gaps at n = 12
    # (checked against the exhaustive oracle) and 10 of 20 at n = 20
    for left, tiny, right in ((2, 8, 2), (5, 10, 5)):
        mean = 100.0
        gaps = np.r_[np.full(left, mean), np.full(tiny, 0.01 * mean), np.full(right, mean)]
        q, _ = min_cost_states(gaps, fit_model(gaps, gamma=1.0))
        assert np.array_equal(q, np.r_[np.zeros(left), np.ones(tiny), np.zeros(right)])
        if gaps.size <= 12:
            assert np.array_equal(brute_force(gaps, fit_model(gaps))[1], q)


def test_scale_covariance(rng):
    for _ in range(30):
        gaps = rng.exponential(1.0, 25) * rng.choice([0.05, 1.0], 25)
        k = float(rng.uniform(0.1, 50))
        q1, _ = min_cost_states(gaps, fit_model(gaps))
        q2, _ = min_cost_states(gaps * k, fit_model(gaps * k))
        assert np.array_equal(q1, q2)


def test_gamma_monotone_transitions(rng):
    for _ in range(30):
        gaps = rng.exponential(1.0, 40) * rng.choice([0.05, 1.0], 40)
        counts = []
        for gamma in (0.01, 0.1, 0.5, 1.0, 2.0, 5.0):
            q, _ = min_cost_states(gaps, fit_model(gaps, gamma=gamma))
            counts.append(int(np.count_nonzero(np.diff(q))))
        assert all(b <= a for a, b in zip(counts, counts[1:]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=0.01, max_value=1e4), min_size=1, max_size=10),
       st.floats(min_value=1.1, max_value=5.0), st.floats(min_value=0.05, max_value=3.0))
def test_dp_optimal_property(gaps, s, gamma):
    gaps = np.array(gaps)
    model = fit_model(gaps, s, gamma)
    _, cost = min_cost_states(gaps, model)
    assert cost <= brute_force(gaps, model)[0] + 1e-9 * max(1.0, abs(cost))


def test_dp_tie_breaks_toward_q0():
    # a single gap exactly at the crossing point where both states cost the same
    model = BurstModel(1.0, 2.0, 1.0, 1)
    x = np.log(2.0)  # -ln a0 + a0 x == -ln a1 + a1 x
    q, _ = min_cost_states([x], model)
    assert q.tolist() == [0]


def test_summarize_all_q0():
    r = summarize_bursts([0, 10, 20, 30], [0, 0, 0])
    assert r.bursts == [] and not r.has_bursts
    assert np.all(r.intensity_stats == 0) and np.all(r.length_stats == 0)


def test_summarize_one_run():
    ts = np.arange(8)
    r = summarize_bursts(ts, [0, 0, 0, 1, 1, 1, 0])
    assert len(r.bursts) == 1
    assert r.bursts[0].intensity == 4 and r.bursts[0].length == 3


def test_summarize_two_bursts_hand():
    ts = [0, 100, 101, 102, 200, 300, 301, 303, 304, 305, 400]
    q = [0, 1, 1, 0, 0, 1, 1, 1, 1, 0]
    r = summarize_bursts(ts, q)
    # bursts: events 1..3 (3 events, 2 s) and events 5..9 (5 events, 5 s)
    assert [(b.intensity, b.length) for b in r.bursts] == [(3, 2.0), (5, 5.0)]
    assert r.intensity_stats.tolist() == [4.0, 4.0, 1.0, 5.0, 3.0]
    assert r.length_stats.tolist() == [3.5, 3.5, 1.5, 5.0, 2.0]


def test_detect_short_stream_absent():
    assert detect_bursts([1, 2]) is None
    assert detect_bursts([]) is None


def test_burst_csv(tmp_path):
    rows = {"b": None, "a": detect_bursts([0, 1000, 1001, 1002, 1003, 1004, 1005, 1006, 1007, 1008, 2000, 3000,
                                          4000, 5000])}
    write_burst_csv(rows, tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "user_id,bi_avg,bi_med,bi_sd,bi_max,bi_min,bl_avg,bl_med,bl_sd,bl_max,bl_min,n_bursts"
    assert lines[1].startswith("a,") and lines[2].startswith("b,")
