"""Mixing constants of the controlled chain and span-contraction checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .bellman import check_beta, default_depth, q_values, solve
from .mdp_core import Mdp, reward_norms, span

GUARD = 2**24


def smooth(mdp: Mdp, eps: float = 0.01) -> Mdp:
    """Uniformly smoothed kernels (1 - eps k) P + eps, so every entry >= eps."""
    k = mdp.n_states
    if not 0 <= eps * k < 1:
        raise ValueError(f"need 0 <= eps * k < 1, got eps={eps}, k={k}")
    P = (1 - eps * k) * mdp.transition + eps
    return Mdp(mdp.states, mdp.actions, P, mdp.reward)


def one_step_delta(mdp: Mdp) -> float:
    """max over (x, a), (x', a') of the total-variation distance of the rows."""
    rows = mdp.transition.reshape(-1, mdp.n_states)
    tv = 0.5 * np.abs(rows[:, None, :] - rows[None, :, :]).sum(axis=-1)
    return float(tv.max())


def _rule_kernels(mdp: Mdp) -> np.ndarray:
    """(l^k, k, k): transition matrix of every deterministic rule."""
    k, l = mdp.n_states, mdp.n_actions
    idx = np.arange(k)
    rules = np.array(list(itertools.product(range(l), repeat=k)))
    return mdp.transition[rules, idx[None, :], :]


def kernel_ratio(Q: np.ndarray) -> np.ndarray:
    """max_{x, x', y} Q[x, y] / Q[x', y] per matrix, with 0/0 = 1 and p/0 = inf."""
    hi = Q.max(axis=-2)
    lo = Q.min(axis=-2)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(hi == 0, 1.0, np.where(lo == 0, np.inf, hi / np.where(lo == 0, 1.0, lo)))
    return r.max(axis=-1)


def multi_step_k(mdp: Mdp, n_steps: int, guard: int = GUARD, chunk: int = 1 << 14) -> float:
    """sup over N-step rule sequences of the N-step kernel ratio.

    Enumerates every sequence of deterministic rules of length N.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    kern = _rule_kernels(mdp)
    n_rules = kern.shape[0]
    if float(n_rules) ** n_steps > guard:
        raise ValueError(f"{n_rules}^{n_steps} rule sequences exceed the guard {guard}")
    prefixes = kern
    for _ in range(n_steps - 2):
        prefixes = np.einsum("pij,rjk->prik", prefixes, kern).reshape(-1, *kern.shape[1:])
    if n_steps == 1:
        return float(kernel_ratio(kern).max())
    best = 1.0
    for s in range(0, prefixes.shape[0], chunk):
        prod = np.einsum("pij,rjk->prik", prefixes[s:s + chunk], kern)
        best = max(best, float(kernel_ratio(prod).max()))
        if math.isinf(best):
            break
    return best


def find_mixing_steps(mdp: Mdp, n_max: int = 4, guard: int = GUARD) -> tuple[int, float]:
    """Smallest N <= n_max with finite K (within the guard); (n_max, inf) if none."""
    K = math.inf
    for n in range(1, n_max + 1):
        try:
            K = multi_step_k(mdp, n, guard)
        except ValueError:
            break
        if math.isfinite(K):
            return n, K
    return n_max, K


def _operator_ladder(mdp, values, gammas, beta):
    """Apply the Bellman operator to ladder functions.

    values: (..., L, k) on levels gammas[..., :L]; level j of the result uses
    risk gammas[..., j] and the input at level j + 1.  Returns (..., L-1, k).
    """
    q = q_values(mdp, values[..., 1:, :], gammas[..., :-1], beta)
    return q.max(axis=-2)


def span_ratio(mdp: Mdp, f1, f2, gamma: float, beta: float):
    """span(T f1 - T f2) / span(f1 - f2) for a single pair of state vectors.

    Both are fed to one backup at risk level ``gamma``.  Returns None when
    f1 - f2 is constant.
    """
    f1, f2 = np.asarray(f1, float), np.asarray(f2, float)
    den = span(f1 - f2)
    if den <= 1e-12 * max(1.0, np.abs(f1).max(), np.abs(f2).max()):
        return None
    t1 = q_values(mdp, f1, gamma, beta).max(axis=0)
    t2 = q_values(mdp, f2, gamma, beta).max(axis=0)
    return span(t1 - t2) / den


def contraction_factor(mdp: Mdp, gamma0: float, beta: float, n_trials: int, seed: int,
                       n_steps: int = 1, n_levels: int = 6) -> float:
    """Largest observed span ratio of the operator on N-fold images.

    For gamma0 < 0 every trial draws a starting risk level in [gamma0, 0) and
    random pairs of functions on ``n_levels`` consecutive ladder levels with
    values in [-||c||/(1-beta), ||c||/(1-beta)], pushes both through N
    applications of the operator, and records
    span(T f1(., g) - T f2(., g)) / span(f1(., beta g) - f2(., beta g)).
    """
    check_beta(beta)
    rng = np.random.default_rng(seed)
    cmax, _ = reward_norms(mdp)
    bound = max(cmax, 1.0) / (1 - beta)
    k = mdp.n_states
    L = n_levels + n_steps + 1
    # starting levels in [gamma0, 0) or (0, gamma0]; all zero when gamma0 = 0
    start = gamma0 * (1 - rng.random(n_trials))
    gammas = start[:, None] * beta ** np.arange(L)[None, :]
    f = rng.uniform(-bound, bound, size=(2, n_trials, L, k))
    for step in range(n_steps):
        f = _operator_ladder(mdp, f, gammas[None, :, step:], beta)
    g_now = gammas[:, n_steps:]
    tf = _operator_ladder(mdp, f, g_now[None], beta)
    num = np.ptp(tf[0] - tf[1], axis=-1)
    den = np.ptp(f[0, :, 1:] - f[1, :, 1:], axis=-1)
    ok = den > 1e-12 * bound
    if not ok.any():
        return 0.0
    return float((num[ok] / den[ok]).max())


# external field names of the JSON report
JSON_KEYS = {"span_bound_kernel": "span_bound_51", "span_bound_uniform": "span_bound_64"}


@dataclass
class MixingReport:
    delta_bar: float
    n_steps: int
    k_ratio: float
    span_bound_kernel: float | str
    span_bound_uniform: float | str
    empirical_contraction: float

    def to_json(self) -> dict:
        doc = {JSON_KEYS.get(key, key): val for key, val in asdict(self).items()}
        for key, val in doc.items():
            if isinstance(val, float) and math.isinf(val):
                doc[key] = "inf"
        return doc


def mixing_report(mdp: Mdp, gamma: float, beta: float, n_max: int = 4, n_trials: int = 1000,
                  seed: int = 0) -> MixingReport:
    _, csp = reward_norms(mdp)
    delta = one_step_delta(mdp)
    n, K = find_mixing_steps(mdp, n_max)
    emp = contraction_factor(mdp, gamma, beta, n_trials, seed, n_steps=n)
    if gamma == 0 or math.isinf(K):
        b_kernel = "unavailable"
    else:
        b_kernel = n * csp + math.log(K) / abs(gamma)
    if gamma >= 0 or math.isinf(K) or emp >= 1:
        b_uniform = "unavailable"
    else:
        b_uniform = (3 * n + 1) * csp / (1 - emp) + math.log(K) / abs(gamma)
    return MixingReport(delta, n, K, b_kernel, b_uniform, emp)


def verify_span_bounds(mdp: Mdp, gamma: float, beta_list, depth: int | None = None,
                       n_max: int = 4, n_trials: int = 200, seed: int = 0) -> list[dict]:
    """Check span(w(., gamma)) against the mixing bounds for each beta.

    The first bound is N ||c||_sp + ln(K)/|gamma|; the second replaces the
    unknown contraction constant by the empirical one (labelled empirical).
    """
    _, csp = reward_norms(mdp)
    n, K = find_mixing_steps(mdp, n_max)
    rows = []
    for beta in beta_list:
        row = {"beta": beta, "gamma": gamma, "n_steps": n, "k_ratio": K}
        if math.isinf(K) or gamma == 0:
            row["status"] = "skipped: K infinite" if math.isinf(K) else "skipped: gamma = 0"
            rows.append(row)
            continue
        res = solve(mdp, gamma, beta, depth if depth is not None else default_depth(mdp, beta))
        mid = res.bands.midpoint()[0]
        width = float(res.bands.width()[0].max())
        s = span(mid)
        b_kernel = n * csp + math.log(K) / abs(gamma)
        row.update(span=s, width=width, bound_kernel=b_kernel, ok_kernel=s <= b_kernel + width)
        emp = contraction_factor(mdp, gamma, beta, n_trials, seed, n_steps=n) if gamma < 0 else 1.0
        if emp < 1:
            b_uniform = (3 * n + 1) * csp / (1 - emp) + math.log(K) / abs(gamma)
            row.update(contraction=emp, bound_uniform=b_uniform, ok_uniform=s <= b_uniform + width,
                       check_uniform="empirical")
        else:
            row.update(bound_uniform="unavailable")
        row["status"] = "checked"
        rows.append(row)
    return rows
