"""Vanishing-discount and vanishing-risk diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bellman import default_depth, solve, turnpike
from .entropic import entropic_rows
from .mdp_core import DecisionRule, Mdp, policy_kernel, span

BETA_LADDER = (0.9, 0.99, 0.999, 0.9995)


@dataclass(frozen=True)
class VanishingDiscountRow:
    beta: float
    n: int
    anchor: int
    lambda_lo: float
    lambda_hi: float
    wbar_lo: np.ndarray
    wbar_hi: np.ndarray
    wide: bool

    @property
    def lambda_n(self) -> float:
        return 0.5 * (self.lambda_lo + self.lambda_hi)


def _depth_for(mdp, beta, depth, n_max):
    M = default_depth(mdp, beta) if depth is None else depth
    return max(M, n_max + 2)


def vanishing_discount_table(mdp: Mdp, gamma: float, beta_list=BETA_LADDER, n_list=(0, 1, 2, 5),
                             anchor: int = 0, depth: int | None = None,
                             wide: float = 1e-3) -> list[VanishingDiscountRow]:
    """Entropy increments and relative values from the solver's bands.

    lambda_n = beta^n w(z, g beta^n) - beta^{n+1} w(z, g beta^{n+1})
    wbar_n(x) = beta^n (w(x, g beta^n) - w(z, g beta^n))
    Both are affine in band values, so the intervals follow directly.
    """
    rows = []
    for beta in beta_list:
        res = solve(mdp, gamma, beta, _depth_for(mdp, beta, depth, max(n_list)))
        lo, hi = res.bands.lower, res.bands.upper
        for n in n_list:
            bn, bn1 = beta**n, beta ** (n + 1)
            lam_lo = bn * lo[n, anchor] - bn1 * hi[n + 1, anchor]
            lam_hi = bn * hi[n, anchor] - bn1 * lo[n + 1, anchor]
            w_lo = bn * (lo[n] - hi[n, anchor])
            w_hi = bn * (hi[n] - lo[n, anchor])
            w_lo[anchor] = w_hi[anchor] = 0.0
            rows.append(VanishingDiscountRow(beta, n, anchor, lam_lo, lam_hi, w_lo, w_hi,
                                             bool(lam_hi - lam_lo > wide)))
    return rows


@dataclass(frozen=True)
class BlackwellRule:
    rule: DecisionRule
    certified: bool
    stage: int


def blackwell_rule(mdp: Mdp, gamma: float, beta: float, depth: int | None = None,
                   stage: int = 0) -> BlackwellRule:
    """Constituent ``stage`` of the optimal discounted schedule.

    For beta close to 1 this stationary rule is optimal for the averaged
    risk-sensitive problem.  Stage 0 by default; stage=1 gives the next one.
    """
    res = solve(mdp, gamma, beta, depth)
    return BlackwellRule(res.schedule[stage], res.stage_certified(stage), stage)


@dataclass(frozen=True)
class AveragedValue:
    value: float
    per_state: np.ndarray
    converged: bool
    iterations: int


def averaged_value(mdp: Mdp, rule: DecisionRule, gamma: float, n: int = 100_000,
                   tol: float = 1e-9, x0: int = 0) -> AveragedValue:
    """Long-run risk-sensitive average reward of a stationary rule.

    Iterates v <- c_u + mu^gamma(v(Y)) with Y ~ P^u(x, .), renormalising at
    state 0, and reads the per-step increment averaged over two consecutive
    steps so that period-2 chains settle too.
    """
    P, c = policy_kernel(mdp, rule)
    k = mdp.n_states
    v = np.zeros(k)
    prev_inc = None
    prev_est = None
    for it in range(1, n + 1):
        new = c + entropic_rows(v[None, :], P, gamma)
        inc = new - v
        v = new - new[0]
        if prev_inc is not None:
            est = 0.5 * (inc + prev_inc)
            if prev_est is not None and np.abs(est - prev_est).max() < tol:
                return AveragedValue(float(est[x0]), est, True, it)
            prev_est = est
        prev_inc = inc
    est = prev_est if prev_est is not None else inc
    return AveragedValue(float(est[x0]), est, False, n)


def stationary_mean_reward(mdp: Mdp, rule: DecisionRule) -> np.ndarray:
    """Long-run mean reward per start state from the Cesaro limit of P^u."""
    P, c = policy_kernel(mdp, rule)
    k = mdp.n_states
    # the lazy chain has the same Cesaro limit and is aperiodic; rows are
    # renormalised after each squaring so rounding cannot compound
    A = 0.5 * (np.eye(k) + P)
    for _ in range(48):
        A = A @ A
        A /= A.sum(axis=1, keepdims=True)
    return A @ c


@dataclass(frozen=True)
class DistanceRow:
    beta: float
    gamma: float
    span_distance: float
    slack: float


def risk_neutral_distance(mdp: Mdp, gamma_list, beta_list, depth: int | None = None) -> list[DistanceRow]:
    """span(w(., gamma) - w(., 0)) per (beta, gamma), from band midpoints."""
    rows = []
    for beta in beta_list:
        base = solve(mdp, 0.0, beta, depth)
        mid0, wid0 = base.bands.midpoint()[0], base.bands.width()[0].max()
        for gamma in gamma_list:
            if gamma == 0:
                rows.append(DistanceRow(beta, 0.0, 0.0, 0.0))
                continue
            res = solve(mdp, gamma, beta, depth)
            d = span(res.bands.midpoint()[0] - mid0)
            rows.append(DistanceRow(beta, gamma, d, float(wid0 + res.bands.width()[0].max())))
    return rows


@dataclass(frozen=True)
class GammaBracket:
    lo: float
    hi: float
    rule: DecisionRule | None

    @property
    def empty(self) -> bool:
        return self.rule is None


def gamma_threshold(mdp: Mdp, beta: float, gamma_probe_grid, depth_cap: int = 1 << 15) -> GammaBracket:
    """Widest run of probes around 0 where the turnpike is certified 0 with
    one common stationary rule; endpoints are probe points, so the true
    threshold lies at or beyond them."""
    grid = np.unique(np.append(np.asarray(gamma_probe_grid, dtype=float), 0.0))
    zero = int(np.flatnonzero(grid == 0)[0])

    def stationary_rule(g):
        tp = turnpike(mdp, float(g), beta, depth_cap)
        return tp.result.tail_rule if tp.certified and tp.n == 0 else None

    rule = stationary_rule(0.0)
    if rule is None:
        return GammaBracket(0.0, 0.0, None)
    lo = hi = zero
    while lo > 0 and stationary_rule(grid[lo - 1]) == rule:
        lo -= 1
    while hi < grid.size - 1 and stationary_rule(grid[hi + 1]) == rule:
        hi += 1
    return GammaBracket(float(grid[lo]), float(grid[hi]), rule)
