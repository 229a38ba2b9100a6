"""Print the lottery example numbers: the A_k table, stationary and optimal
values at beta = 0.95, gamma = -1, and the risk-neutral switch for R = 3.5."""
from rsmdp.bellman import solve
from rsmdp.lottery import CHOICES, LotterySpec, build, closed_form_turnpike, risk_neutral_switch, run_count, table1
from rsmdp.mdp_core import DecisionRule
from rsmdp.policy_eval import evaluate


def main():
    spec = LotterySpec(7.0)
    beta, gamma = 0.95, -1.0
    print(table1(spec, gamma, beta).to_csv())

    mdp = build(spec)
    res = solve(mdp, gamma, beta)
    lo, hi = res.value_band(0)
    print(f"optimal schedule: J in [{lo:.4f}, {hi:.4f}], turnpike {res.turnpike} steps "
          f"({run_count(res.turnpike)} runs, closed form {closed_form_turnpike(spec, gamma, beta)})")
    for a, u in enumerate(CHOICES):
        iv = evaluate(mdp, DecisionRule.constant(3, a), 0, gamma, beta)
        print(f"stationary u_{u}: J in [{iv.lo:.4f}, {iv.hi:.4f}]")

    br = risk_neutral_switch(LotterySpec(3.5), 0.9, 0.995)
    print(f"R=3.5 risk-neutral switch: beta in [{br.lo:.6f}, {br.hi:.6f}] "
          f"({br.rule_lo} -> {br.rule_hi}); closed-form crossing {20 / 21:.6f}")


if __name__ == "__main__":
    main()
