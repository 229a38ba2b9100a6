import numpy as np
import pytest

from rsmdp.bellman import solve
from rsmdp.limits import (averaged_value, blackwell_rule, gamma_threshold, risk_neutral_distance,
                          stationary_mean_reward, vanishing_discount_table)
from rsmdp.lottery import closed_form_values
from rsmdp.lottery import LotterySpec
from rsmdp.mdp_core import DecisionRule, Mdp, all_rules, policy_kernel

ONE = Mdp("x", "a", np.ones((1, 1, 1)), np.array([[2.5]]))


def test_single_state_increments():
    rows = vanishing_discount_table(ONE, -1.0, [0.9, 0.99, 0.999], [0, 3])
    for r in rows:
        assert r.lambda_n == pytest.approx(r.beta**r.n * 2.5, abs=1e-9)
    last = [r.lambda_n for r in rows if r.n == 3]
    assert abs(last[-1] - 2.5) < abs(last[0] - 2.5)


def test_relative_value_vanishes_at_anchor(smoothed):
    for anchor in (0, 2):
        for r in vanishing_discount_table(smoothed, -1.0, [0.9, 0.99], [0, 2], anchor=anchor):
            assert r.wbar_lo[anchor] == 0.0 and r.wbar_hi[anchor] == 0.0
            assert np.all(r.wbar_lo <= r.wbar_hi)


def test_increments_recompute_from_bands(smoothed):
    rows = vanishing_discount_table(smoothed, -1.0, [0.9], [0, 1])
    res = solve(smoothed, -1.0, 0.9)
    lo, hi = res.bands.lower, res.bands.upper
    r0 = rows[0]
    assert r0.lambda_lo == lo[0, 0] - 0.9 * hi[1, 0]
    assert r0.lambda_hi == hi[0, 0] - 0.9 * lo[1, 0]


def test_increments_converge_along_beta(smoothed):
    rows = vanishing_discount_table(smoothed, -1.0, [0.9, 0.99, 0.999], [0, 1])
    for n in (0, 1):
        lam = [r.lambda_n for r in rows if r.n == n]
        steps = np.abs(np.diff(lam))
        assert steps[1] < steps[0]
        assert not any(r.wide for r in rows)


def neutral_blackwell_state1(mdp, beta=0.99999):
    """Action at state 0 of the rule with the best discounted value for beta
    very close to 1, by direct linear solves over all rules."""
    best, act = -np.inf, None
    for u in all_rules(mdp):
        P, c = policy_kernel(mdp, u)
        v = np.linalg.solve(np.eye(mdp.n_states) - beta * P, c)
        if v[0] > best + 1e-9:
            best, act = v[0], u.actions[0]
    return act


def test_neutral_blackwell_rule(smoothed):
    rules = [blackwell_rule(smoothed, 0.0, b) for b in (0.99, 0.995, 0.999)]
    assert all(r.certified for r in rules)
    assert len({r.rule for r in rules}) == 1
    assert rules[0].rule.actions[0] == neutral_blackwell_state1(smoothed)


@pytest.mark.parametrize("gamma", [-2.0, -0.5, 0.5])
@pytest.mark.parametrize("beta", [0.99, 0.995])
def test_blackwell_matches_averaged_optimum(smoothed, gamma, beta):
    br = blackwell_rule(smoothed, gamma, beta)
    assert br.certified
    scores = {u: averaged_value(smoothed, u, gamma).value for u in all_rules(smoothed)}
    best = max(scores.values())
    assert scores[br.rule] == pytest.approx(best, abs=1e-9)


def test_blackwell_equals_tail_in_stationary_region(lottery):
    res = solve(lottery, -0.3, 0.95)
    assert blackwell_rule(lottery, -0.3, 0.95).rule == res.tail_rule


def test_blackwell_stage_one(lottery):
    br = blackwell_rule(lottery, -2.0, 0.995, stage=1)
    assert br.stage == 1 and br.rule == solve(lottery, -2.0, 0.995).schedule[1]


def test_tail_and_blackwell_rule_can_differ(lottery):
    tail = solve(lottery, -2.0, 0.95).tail_rule
    head = blackwell_rule(lottery, -2.0, 0.995)
    assert head.certified and head.rule != tail


def test_averaged_value_closed_form(lottery):
    ua = DecisionRule((0, 0, 0))
    got = averaged_value(lottery, ua, -0.67)
    assert got.converged
    assert got.value == pytest.approx(closed_form_values(LotterySpec(7), -0.67, 0.5).averaged["a"], abs=1e-8)
    assert got.value == pytest.approx(0.674, abs=1e-3)


def test_averaged_value_single_state():
    for g in (-3.0, 0.0, 2.0):
        assert averaged_value(ONE, DecisionRule((0,)), g).value == pytest.approx(2.5)


def test_averaged_value_neutral_limit(smoothed):
    for u in (DecisionRule((0, 0, 0)), DecisionRule((2, 1, 0))):
        mean = stationary_mean_reward(smoothed, u)
        assert averaged_value(smoothed, u, 0.0).value == pytest.approx(mean[0], abs=1e-8)
        assert averaged_value(smoothed, u, -1e-6).value == pytest.approx(mean[0], abs=1e-4)


def test_averaged_value_flags_non_convergence(smoothed):
    assert not averaged_value(smoothed, DecisionRule((0, 0, 0)), -1.0, n=3).converged


def test_risk_neutral_distance(smoothed):
    gammas = [-1.0, -0.1, -0.01, -0.001, 0.0]
    rows = risk_neutral_distance(smoothed, gammas, [0.9, 0.95, 0.99])
    by = {(r.beta, r.gamma): r.span_distance for r in rows}
    for b in (0.9, 0.95, 0.99):
        assert by[(b, 0.0)] == 0.0
        assert by[(b, -0.01)] < by[(b, -1.0)]
        assert by[(b, -0.001)] < 1e-2


def test_gamma_threshold(lottery):
    grid = np.round(np.arange(-0.7, 0.501, 0.05), 6)
    br = gamma_threshold(lottery, 0.95, grid)
    assert br.lo <= -0.5 and br.hi >= 0.4
    assert -0.7 < br.lo and br.hi < 0.45
    assert br.rule.actions == (0, 0, 0)
    only = gamma_threshold(lottery, 0.95, [0.0])
    assert (only.lo, only.hi) == (0.0, 0.0) and not only.empty


def test_gamma_threshold_stable_across_beta(lottery):
    grid = np.round(np.arange(-0.7, 0.501, 0.1), 6)
    brs = [gamma_threshold(lottery, b, grid) for b in (0.9, 0.95, 0.995)]
    for br in brs:
        assert br.lo <= -0.5 and br.hi >= 0.4
    assert max(b.lo for b in brs) - min(b.lo for b in brs) <= 0.1
