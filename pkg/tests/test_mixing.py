import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import delta_bar_subsets, rule_sequences_k

from rsmdp.lottery import LotterySpec, build
from rsmdp.mdp_core import Mdp, random_mdp, validate
from rsmdp.mixing import (contraction_factor, find_mixing_steps, mixing_report, multi_step_k,
                          one_step_delta, smooth, span_ratio, verify_span_bounds)

seeds = st.integers(0, 2**32 - 1)


def test_identical_rows_give_zero():
    m = Mdp("xyz", "ab", np.full((2, 3, 3), 1 / 3), np.zeros((3, 2)))
    assert one_step_delta(m) == 0.0


def test_disjoint_deterministic_rows_give_one():
    P = np.array([[[1.0, 0], [0, 1.0]]])
    assert one_step_delta(Mdp("xy", "a", P, np.zeros((2, 1)))) == 1.0


def test_smoothing(lottery, smoothed):
    assert validate(smoothed) == []
    assert smoothed.transition.min() >= 0.01 - 1e-15
    assert one_step_delta(lottery) == 1.0
    assert one_step_delta(smoothed) < 1
    with pytest.raises(ValueError):
        smooth(lottery, 0.4)


@given(seeds)
def test_half_l1_equals_subset_maximum(seed):
    r = np.random.default_rng(seed)
    m = random_mdp(r, int(r.integers(1, 5)), int(r.integers(1, 4)), sparsity=0.4)
    assert one_step_delta(m) == pytest.approx(delta_bar_subsets(m), abs=1e-12)


def test_k_examples(lottery, smoothed):
    one = Mdp("x", "ab", np.ones((2, 1, 1)), np.zeros((1, 2)))
    assert multi_step_k(one, 1) == 1.0
    assert math.isinf(multi_step_k(lottery, 1))
    K = multi_step_k(smoothed, 1)
    assert math.isfinite(K) and K <= 1 / 0.01


@given(seeds, st.integers(1, 2))
def test_k_matches_explicit_loops(seed, N):
    r = np.random.default_rng(seed)
    m = random_mdp(r, int(r.integers(1, 4)), int(r.integers(1, 3)), sparsity=0.3)
    a, b = multi_step_k(m, N), rule_sequences_k(m, N)
    assert (math.isinf(a) and math.isinf(b)) or a == pytest.approx(b, rel=1e-12)


def test_k_guard(lottery):
    with pytest.raises(ValueError):
        multi_step_k(lottery, 3, guard=100)


def test_k_non_increasing_in_smoothing(lottery):
    ks = [multi_step_k(smooth(lottery, e), 2) for e in (0.001, 0.01, 0.05, 0.1, 0.2)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(ks, ks[1:]))


def test_find_mixing_steps(smoothed, lottery):
    assert find_mixing_steps(smoothed)[0] == 1
    n, K = find_mixing_steps(lottery, n_max=2)
    assert math.isinf(K)


def test_span_bounds_on_smoothed_lottery(smoothed):
    rows = verify_span_bounds(smoothed, -1.0, [0.9, 0.95, 0.99])
    K = multi_step_k(smoothed, 1)
    for row in rows:
        assert row["ok_kernel"] and row["span"] <= 8 + math.log(K) + row["width"]


def test_span_bounds_skip_without_mixing(lottery):
    rows = verify_span_bounds(lottery, -1.0, [0.9], n_max=2)
    assert rows[0]["status"].startswith("skipped")


def test_span_bounds_trivial_instances():
    one = Mdp("x", "a", np.ones((1, 1, 1)), np.array([[3.0]]))
    assert verify_span_bounds(one, -1.0, [0.9])[0]["span"] == 0
    const = Mdp("xy", "ab", np.full((2, 2, 2), 0.5), np.full((2, 2), 2.0))
    row = verify_span_bounds(const, -1.0, [0.9])[0]
    assert row["span"] == pytest.approx(0, abs=1e-9) and row["ok_kernel"]


def test_contraction_at_neutral_risk(smoothed):
    d = one_step_delta(smoothed)
    for beta in (0.5, 0.9, 0.99):
        assert contraction_factor(smoothed, 0.0, beta, 1000, seed=1) <= d + 1e-9


def test_contraction_below_one_for_negative_risk(smoothed):
    for beta in (0.5, 0.9, 0.99):
        assert contraction_factor(smoothed, -1.0, beta, 1000, seed=2) < 1 - 1e-6


def test_contraction_is_seeded(smoothed):
    a = contraction_factor(smoothed, -1.0, 0.9, 200, seed=3)
    assert a == contraction_factor(smoothed, -1.0, 0.9, 200, seed=3)


def test_span_ratio_skips_constant_difference(smoothed):
    f = np.array([1.0, 2.0, 3.0])
    assert span_ratio(smoothed, f, f + 5.0, -1.0, 0.9) is None
    r = span_ratio(smoothed, f, np.zeros(3), 0.0, 0.9)
    assert 0 <= r <= one_step_delta(smoothed) * 0.9 + 1e-12


def test_report(smoothed, lottery):
    rep = mixing_report(smoothed, -1.0, 0.95, n_trials=200)
    doc = rep.to_json()
    assert set(doc) == {"delta_bar", "n_steps", "k_ratio", "span_bound_51", "span_bound_64",
                        "empirical_contraction"}
    assert 0 <= rep.delta_bar <= 1 and rep.k_ratio >= 1 and rep.empirical_contraction >= 0
    raw = mixing_report(lottery, -1.0, 0.95, n_max=1, n_trials=50).to_json()
    assert raw["k_ratio"] == "inf" and raw["span_bound_51"] == "unavailable"
