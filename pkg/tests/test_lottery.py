import csv
import io

import numpy as np
import pytest

from rsmdp.bellman import turnpike
from rsmdp.lottery import (CHOICES, FIGURES, LotterySpec, a_k, build, closed_form_turnpike,
                           closed_form_values, figure_sweeps, figure_turnpikes, risk_neutral_switch,
                           run_count, table1)
from rsmdp.mdp_core import DecisionRule, MarkovPolicy, validate
from rsmdp.policy_eval import evaluate

# printed two-decimal values for R = 7, beta = 0.95, gamma = -1 (runs 1..10)
TABLE = {
    "a": [0.60, 0.70, 0.78, 0.84, 0.90, 0.94, 0.96, 0.98, 0.98, 0.96],
    "b": [0.69, 0.69, 0.69, 0.69, 0.68, 0.67, 0.67, 0.65, 0.64, 0.62],
    "c": [1.22, 1.13, 1.04, 0.96, 0.88, 0.82, 0.76, 0.70, 0.65, 0.60],
}
SPEC = LotterySpec(7.0)


def test_build_matches_the_example(lottery):
    assert validate(lottery) == []
    assert lottery.transition[0, 0].tolist() == pytest.approx([0, 0.2, 0.8])
    assert lottery.reward[2].tolist() == [7, 7, 7]
    assert lottery.reward[0].tolist() == [-1, 0, 1]
    assert lottery.states == ("1", "2", "3") and lottery.actions == CHOICES


def test_smoothed_build(smoothed):
    assert smoothed.transition.min() >= 0.01 - 1e-15
    np.testing.assert_allclose(smoothed.transition.sum(-1), 1, atol=1e-15)


def test_spec_validation():
    with pytest.raises(ValueError):
        LotterySpec(0.0)
    with pytest.raises(ValueError):
        LotterySpec(7.0, eps=0.5)


def test_first_column():
    got = [round(a_k(SPEC, u, 0, -1.0, 0.95), 2) for u in CHOICES]
    assert got == [0.60, 0.69, 1.22]


def test_a_overtakes_c_at_fifth_run():
    assert round(a_k(SPEC, "a", 4, -1, 0.95), 2) == 0.90
    assert round(a_k(SPEC, "c", 4, -1, 0.95), 2) == 0.88


def test_neutral_branch_is_continuous():
    for u in CHOICES:
        assert a_k(SPEC, u, 3, -1e-8, 0.95) == pytest.approx(a_k(SPEC, u, 3, 0.0, 0.95), abs=1e-6)


def test_table_reproduction():
    t = table1(SPEC, -1.0, 0.95)
    for i, u in enumerate(CHOICES):
        assert np.all(np.abs(np.round(t.values[i], 2) - TABLE[u]) <= 0.01 + 1e-12)
    assert "".join(t.best) == "ccccaaaaaa"
    rows = list(csv.reader(io.StringIO(t.to_csv())))
    assert rows[0] == ["choice"] + [str(k) for k in range(1, 11)]
    assert rows[-1] == ["best"] + list("ccccaaaaaa")


def test_neutral_table_is_stationary():
    assert len(set(table1(SPEC, 0.0, 0.95).best)) == 1


def test_printed_weight_convention_disagrees_with_table():
    printed = LotterySpec(7.0, printed_weights=True)
    assert abs(a_k(printed, "c", 0, -1, 0.95) - TABLE["c"][0]) > 0.5


def test_closed_forms():
    cf = closed_form_values(SPEC, 0.0, 0.9)
    assert cf.averaged == pytest.approx({"a": 2.3, "b": 1.75, "c": 1.2})
    half = LotterySpec(3.5)
    b = 20 / 21
    d = closed_form_values(half, 0.0, b).discounted
    assert d["a"] == pytest.approx(d["c"], rel=1e-12)
    assert closed_form_values(half, 0, b - 1e-3).discounted["c"] > closed_form_values(half, 0, b - 1e-3).discounted["a"]


def test_averaged_argmax_switches_near_band_edges():
    def best(g):
        v = closed_form_values(SPEC, g, 0.5).averaged
        return max(CHOICES, key=v.get)
    assert best(-0.66) == "a" and best(-0.68) == "c"
    assert best(0.42) == "a" and best(0.44) == "b"


def test_generic_solver_matches_decomposition(lottery):
    # evaluate on the chain equals the sum of the per-run contributions
    for rule in ("aaa", "bbb", "ccc"):
        u = DecisionRule.constant(3, CHOICES.index(rule[0]))
        total = sum(a_k(SPEC, rule[0], k, -1.0, 0.95) for k in range(400))
        assert evaluate(lottery, u, 0, -1.0, 0.95).mid == pytest.approx(total, abs=1e-5)
    sched = [DecisionRule((2, 0, 0)) if i < 8 else DecisionRule((0, 0, 0)) for i in range(8)]
    pol = MarkovPolicy(tail=DecisionRule((0, 0, 0)), head=sched)
    total = sum(a_k(SPEC, "c" if k < 4 else "a", k, -1.0, 0.95) for k in range(400))
    assert evaluate(lottery, pol, 0, -1.0, 0.95).mid == pytest.approx(total, abs=1e-5)
    assert total == pytest.approx(22.8, abs=0.1)


def test_states_two_and_three_do_not_matter(lottery):
    a = evaluate(lottery, DecisionRule((2, 0, 0)), 0, -1.0, 0.95, 300)
    b = evaluate(lottery, DecisionRule((2, 2, 1)), 0, -1.0, 0.95, 300)
    assert a == b


@pytest.mark.parametrize("gamma,beta", [(-2.0, 0.9), (-1.0, 0.95), (-0.7, 0.99), (0.5, 0.95),
                                        (1.0, 0.9), (2.5, 0.95), (-0.3, 0.995)])
def test_solver_turnpike_matches_closed_form(lottery, gamma, beta):
    tp = turnpike(lottery, gamma, beta)
    assert tp.certified and tp.n == closed_form_turnpike(SPEC, gamma, beta)


def test_run_count():
    assert list(run_count([0, 1, 2, 7, 8, 9])) == [0, 1, 1, 4, 4, 5]
    assert run_count(closed_form_turnpike(SPEC, -1.0, 0.95)) == 4


def test_risk_neutral_switch():
    br = risk_neutral_switch(LotterySpec(3.5), 0.9, 0.995)
    assert br.certified and 0.952 <= br.lo <= 20 / 21 <= br.hi <= 0.953
    assert {br.rule_lo, br.rule_hi} == {"a", "c"} and br.hi - br.lo <= 1e-4


def test_switch_requires_a_change():
    with pytest.raises(ValueError):
        risk_neutral_switch(SPEC, 0.9, 0.95)


def test_turnpike_figure_csv():
    grid, text = figure_turnpikes(SPEC, [0.95], [-1.0, 0.0], workers=1)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rows[0]["turnpike"] == "8" and rows[0]["run_turnpike"] == "4"
    assert rows[1]["run_turnpike"] == "0"


def test_single_point_figure_equals_solve(lottery):
    text = figure_sweeps(2, [0.95], [-1.0], workers=1)
    row = next(csv.DictReader(io.StringIO(text)))
    tp = turnpike(lottery, -1.0, 0.95)
    assert int(row["turnpike"]) == tp.n
    assert float(row["value_lo"]) == pytest.approx(tp.result.value_band(0)[0], abs=1e-9)


def test_limit_figures():
    text = figure_sweeps(4, [0.95, 0.955], [-1.0, 0.0])
    rows = list(csv.DictReader(io.StringIO(text)))
    assert [r["kind"] for r in rows] == ["averaged", "averaged", "discounted", "discounted"]
    assert rows[2]["best"] == "c" and rows[3]["best"] == "a"
    with pytest.raises(ValueError):
        figure_sweeps(7, [0.9], [0.0])
    assert sorted(FIGURES) == [2, 3, 4, 5]


def test_turnpike_not_monotone_in_beta_near_switch():
    mdp = build(LotterySpec(3.5))
    ns = [turnpike(mdp, -1.0, b).n for b in (0.95, 0.951, 0.952, 0.953, 0.955, 0.96)]
    diffs = np.diff(ns)
    assert (diffs > 0).any() and (diffs < 0).any()
