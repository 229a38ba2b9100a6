"""Evaluation of fixed Markov policies: interval values, Monte Carlo,
discounted-reward moments and the moment (lexicographic) order."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from math import comb

import numpy as np

from .bellman import check_beta, default_depth
from .entropic import NEUTRAL_EPS, entropic_rows
from .mdp_core import DecisionRule, MarkovPolicy, Mdp, reward_norms


@dataclass(frozen=True)
class ValueInterval:
    lo: float
    hi: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, v) -> bool:
        return self.lo <= v <= self.hi

    @property
    def sign(self) -> int:
        """+1 / -1 when the interval excludes zero, 0 otherwise."""
        return 1 if self.lo > 0 else -1 if self.hi < 0 else 0


def _as_policy(policy) -> MarkovPolicy:
    if isinstance(policy, DecisionRule):
        return MarkovPolicy.stationary(policy)
    return policy


def evaluate_bands(mdp: Mdp, policy, gamma: float, beta: float, depth: int):
    """Lower/upper values at every state, from the constant seeds at stage M."""
    check_beta(beta)
    policy = _as_policy(policy)
    cmax, _ = reward_norms(mdp)
    bound = cmax / (1 - beta)
    k = mdp.n_states
    idx = np.arange(k)
    vals = np.stack([np.full(k, -bound), np.full(k, bound)])
    for i in range(depth - 1, -1, -1):
        u = policy.rule_at(i).as_array()
        P = mdp.transition[u, idx, :]
        vals = mdp.reward[idx, u] + entropic_rows(beta * vals[:, None, :], P, gamma * beta**i)
    return vals[0], vals[1]


def evaluate(mdp: Mdp, policy, x0: int, gamma: float, beta: float,
             depth: int | None = None) -> ValueInterval:
    """Interval bracketing J_gamma(x0, policy; beta)."""
    M = default_depth(mdp, beta) if depth is None else int(depth)
    lo, hi = evaluate_bands(mdp, policy, gamma, beta, M)
    return ValueInterval(float(lo[x0]), float(max(hi[x0], lo[x0])))


def value_difference(mdp: Mdp, u1, u2, x: int, gamma: float, beta: float,
                     depth: int | None = None) -> ValueInterval:
    a = evaluate(mdp, u1, x, gamma, beta, depth)
    b = evaluate(mdp, u2, x, gamma, beta, depth)
    return ValueInterval(a.lo - b.hi, a.hi - b.lo)


# ---------------------------------------------------------------- Monte Carlo

BLOCK = 65536


def _block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    # Philox is counter based: (key=seed, counter high word=stream, block)
    # selects a disjoint substream, independent of how blocks are scheduled.
    return np.random.Generator(np.random.Philox(key=seed & (2**64 - 1),
                                                counter=[0, 0, block, stream]))


def _discounted_sums(mdp: Mdp, policy: MarkovPolicy, x0: int, beta: float, T: int,
                     rng: np.random.Generator, n: int) -> np.ndarray:
    k = mdp.n_states
    idx = np.arange(k)
    state = np.full(n, x0)
    total = np.zeros(n)
    disc = 1.0
    for t in range(T):
        u = policy.rule_at(t).as_array()
        total += disc * mdp.reward[state, u[state]]
        cdf = np.cumsum(mdp.transition[u, idx, :], axis=1)
        cdf[:, -1] = 1.0
        draws = rng.random(n)
        state = (draws[:, None] >= cdf[state]).sum(axis=1)
        disc *= beta
    return total


def _entropic_sample(sums: np.ndarray, gamma: float) -> float:
    if abs(gamma) < NEUTRAL_EPS:
        return float(sums.mean())
    return float(entropic_rows(sums, np.full(sums.size, 1.0 / sums.size), gamma))


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    ci_half_width: float
    ess: float
    n_paths: int

    def __iter__(self):
        return iter((self.estimate, self.ci_half_width))


def simulate(mdp: Mdp, policy, x0: int, gamma: float, beta: float, horizon: int,
             n_paths: int, seed: int, n_boot: int = 1000, block: int = BLOCK) -> MonteCarloEstimate:
    """(1/gamma) ln mean exp(gamma * sum_{t<T} beta^t c_t) over simulated paths.

    Paths are drawn in fixed blocks, block b from the Philox substream
    (seed, b); results depend only on (seed, n_paths, horizon, block).
    The 95% interval is a percentile bootstrap of the same estimator.
    """
    check_beta(beta)
    if horizon < 1 or n_paths < 1:
        raise ValueError("horizon and n_paths must be positive")
    policy = _as_policy(policy)
    sums = np.concatenate([
        _discounted_sums(mdp, policy, x0, beta, horizon, _block_generator(seed, 0, b),
                         min(block, n_paths - s))
        for b, s in enumerate(range(0, n_paths, block))
    ])
    est = _entropic_sample(sums, gamma)

    z = gamma * sums
    w = np.exp(z - z.max())
    ess = float(w.sum() ** 2 / (w**2).sum())
    if ess < 30:
        warnings.warn(f"effective sample size {ess:.1f} < 30; estimate unreliable", RuntimeWarning)

    boot = np.empty(n_boot)
    rng = _block_generator(seed, 1, 0)
    chunk = max(1, 2_000_000 // n_paths)
    for s in range(0, n_boot, chunk):
        m = min(chunk, n_boot - s)
        picks = sums[rng.integers(0, n_paths, size=(m, n_paths))]
        if abs(gamma) < NEUTRAL_EPS:
            boot[s:s + m] = picks.mean(axis=1)
        else:
            boot[s:s + m] = entropic_rows(picks, np.full(n_paths, 1.0 / n_paths), gamma)
    q_lo, q_hi = np.quantile(boot, [0.025, 0.975])
    return MonteCarloEstimate(est, float(0.5 * (q_hi - q_lo)), ess, n_paths)


# --------------------------------------------------------------------- moments

@dataclass(frozen=True)
class MomentVector:
    """E_x[Z_T^j] for j = 1..K at every start state, with truncation bounds.

    ``values[j-1, x]``; ``error[j-1]`` bounds |E[Z^j] - E[Z_T^j]|.
    """

    values: np.ndarray
    error: np.ndarray
    horizon: int

    def at(self, x: int) -> np.ndarray:
        return self.values[:, x]


def moment_error_bound(mdp: Mdp, beta: float, K: int, horizon: int) -> np.ndarray:
    cmax, _ = reward_norms(mdp)
    C = cmax / (1 - beta)
    j = np.arange(1, K + 1)
    return j * C ** (j - 1) * beta**horizon * C


def moment_horizon(mdp: Mdp, beta: float, K: int, tol: float) -> int:
    """Smallest T whose order-K truncation bound is below ``tol``."""
    cmax, _ = reward_norms(mdp)
    if cmax == 0:
        return 1
    C = cmax / (1 - beta)
    T = math.log(tol / (K * C**K)) / math.log(beta)
    return max(1, math.ceil(T))


def moments(mdp: Mdp, policy, beta: float, K: int, horizon: int) -> MomentVector:
    """Raw moments of the truncated discounted reward Z_T = sum_{t<T} beta^t c_t.

    Computed exactly by backward recursion on Z_t = c_t + beta Z_{t+1}:
        E_x[Z_t^j] = sum_i C(j, i) c^{j-i} beta^i E[Z_{t+1}^i | x]
    which needs no path enumeration.
    """
    check_beta(beta)
    policy = _as_policy(policy)
    k = mdp.n_states
    idx = np.arange(k)
    m = np.zeros((K + 1, k))
    m[0] = 1.0
    binom = np.array([[comb(j, i) for i in range(K + 1)] for j in range(K + 1)], dtype=float)
    powers = beta ** np.arange(K + 1)
    for t in range(horizon - 1, -1, -1):
        u = policy.rule_at(t).as_array()
        P = mdp.transition[u, idx, :]
        c = mdp.reward[idx, u]
        nxt = (P @ m.T).T * powers[:, None]  # beta^i E[Z_{t+1}^i | x]
        cpow = c[None, :] ** np.arange(K + 1)[:, None]
        new = np.empty_like(m)
        for j in range(K + 1):
            new[j] = (binom[j, : j + 1, None] * cpow[j::-1] * nxt[: j + 1]).sum(axis=0)
        m = new
    return MomentVector(m[1:], moment_error_bound(mdp, beta, K, horizon), horizon)


@dataclass(frozen=True)
class MomentOrder:
    """Outcome of the alternating-sign lexicographic comparison at one state.

    ``order`` is the first k where the moments are told apart (None when
    indistinguishable up to K); ``winner`` is 1 or 2 accordingly, else 0.
    """

    state: int
    order: int | None
    winner: int


def moment_compare(mdp: Mdp, u1, u2, beta: float, K: int, tol: float,
                   horizon: int | None = None) -> list[MomentOrder]:
    """Compare (-1)^{k+1} E_x[Z^k] lexicographically for each start state."""
    T = moment_horizon(mdp, beta, K, tol / 4) if horizon is None else horizon
    m1 = moments(mdp, u1, beta, K, T)
    m2 = moments(mdp, u2, beta, K, T)
    if np.any(2 * m1.error >= tol):
        raise ValueError("tolerance does not exceed the accumulated moment error bound")
    signs = (-1.0) ** (np.arange(1, K + 1) + 1)
    diff = signs[:, None] * (m1.values - m2.values)
    out = []
    for x in range(mdp.n_states):
        hit = np.flatnonzero(np.abs(diff[:, x]) > tol)
        if hit.size == 0:
            out.append(MomentOrder(x, None, 0))
        else:
            j = int(hit[0])
            out.append(MomentOrder(x, j + 1, 1 if diff[j, x] > 0 else 2))
    return out
