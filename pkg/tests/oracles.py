"""Slow reference computations written independently of the package code."""
from __future__ import annotations

import itertools
import math

import numpy as np


def entropic_direct(values, weights, gamma):
    """(1/gamma) log sum_i w_i e^{gamma v_i} with a max shift, in plain floats."""
    pairs = [(float(v), float(w)) for v, w in zip(values, weights) if w > 0]
    if gamma == 0:
        return sum(v * w for v, w in pairs)
    top = max(gamma * v for v, _ in pairs)
    return (top + math.log(sum(w * math.exp(gamma * v - top) for v, w in pairs))) / gamma


def backup_direct(mdp, nxt, gamma, beta):
    k, l = mdp.n_states, mdp.n_actions
    out, rule = [], []
    for x in range(k):
        qs = [mdp.reward[x, a] + entropic_direct([beta * nxt[y] for y in range(k)],
                                                 mdp.transition[a, x], gamma)
              for a in range(l)]
        out.append(max(qs))
        rule.append(qs.index(max(qs)))
    return np.array(out), tuple(rule)


def classical_vi(mdp, beta, tol=1e-13, max_iter=1_000_000):
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        new = np.array([max(mdp.reward[x, a] + beta * mdp.transition[a, x] @ v
                            for a in range(mdp.n_actions)) for x in range(mdp.n_states)])
        if np.abs(new - v).max() < tol * (1 - beta):
            return new
        v = new
    return v


def path_distribution(mdp, policy_rules, x0, beta, T):
    """All length-T paths: list of (probability, discounted reward sum).

    ``policy_rules(t)`` returns the action tuple used at stage t.
    """
    k = mdp.n_states
    out = []
    for tail in itertools.product(range(k), repeat=T - 1):
        path = (x0,) + tail
        prob, total = 1.0, 0.0
        for t, x in enumerate(path):
            a = policy_rules(t)[x]
            total += beta**t * mdp.reward[x, a]
            if t + 1 < T:
                prob *= mdp.transition[a, x, path[t + 1]]
            if prob == 0:
                break
        if prob > 0:
            out.append((prob, total))
    return out


def delta_bar_subsets(mdp):
    """max over row pairs and subsets A of P(x, A) - P(x', A)."""
    rows = mdp.transition.reshape(-1, mdp.n_states)
    best = 0.0
    for mask in itertools.product((0, 1), repeat=mdp.n_states):
        m = np.array(mask, dtype=float)
        mass = rows @ m
        best = max(best, float(mass.max() - mass.min()))
    return best


def rule_sequences_k(mdp, N):
    """K by explicit loops over rule sequences, start pairs and targets."""
    k, l = mdp.n_states, mdp.n_actions
    rules = list(itertools.product(range(l), repeat=k))
    best = 1.0
    for seq in itertools.product(rules, repeat=N):
        Q = np.eye(k)
        for u in seq:
            Q = Q @ np.array([mdp.transition[u[x], x] for x in range(k)])
        for x, x2, y in itertools.product(range(k), repeat=3):
            num, den = Q[x, y], Q[x2, y]
            if num == 0 and den == 0:
                r = 1.0
            elif den == 0:
                return math.inf
            else:
                r = num / den
            best = max(best, r)
    return best
