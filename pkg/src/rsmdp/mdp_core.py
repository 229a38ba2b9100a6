"""Finite controlled Markov chains, decision rules and the span seminorm."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ROW_TOL = 1e-12


class MdpError(ValueError):
    """Raised when an MDP document cannot be turned into a valid model."""


@dataclass(frozen=True)
class Mdp:
    """Finite state/action MDP with every action available in every state.

    ``transition[a, x, y]`` is P^a(x, y) and ``reward[x, a]`` is c(x, a).
    Labels are kept for I/O only; everything internal works with dense
    indices in declaration order.
    """

    states: tuple
    actions: tuple
    transition: np.ndarray
    reward: np.ndarray

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        actions = tuple(str(a) for a in self.actions)
        P = np.array(self.transition, dtype=float)
        c = np.array(self.reward, dtype=float)
        k, l = len(states), len(actions)
        if P.shape != (l, k, k):
            raise MdpError(f"transition has shape {P.shape}, expected {(l, k, k)}")
        if c.shape != (k, l):
            raise MdpError(f"reward has shape {c.shape}, expected {(k, l)}")
        P.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", c)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def equivalent_actions(self) -> np.ndarray:
        """``eq[x, a, b]`` is True when a and b have the same row and reward at x.

        Such actions produce identical backups under every value function, so
        they are exact ties and never count as rivals of one another.
        """
        P, c = self.transition, self.reward
        same_row = np.all(P[:, None, :, :] == P[None, :, :, :], axis=-1)  # (a, b, x)
        same_reward = c[:, :, None] == c[:, None, :]  # (x, a, b)
        return np.transpose(same_row, (2, 0, 1)) & same_reward

    def to_json(self) -> dict:
        return {
            "states": list(self.states),
            "actions": list(self.actions),
            "transitions": {a: self.transition[i].tolist() for i, a in enumerate(self.actions)},
            "rewards": {a: self.reward[:, i].tolist() for i, a in enumerate(self.actions)},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Mdp":
        """Build from the JSON document layout; rejects invalid models.

        Rows within ROW_TOL of summing to one are renormalised, anything
        further off is an error.
        """
        try:
            states = list(doc["states"])
            actions = list(doc["actions"])
            P = np.array([doc["transitions"][a] for a in actions], dtype=float)
            c = np.array([doc["rewards"][a] for a in actions], dtype=float).T
        except (KeyError, TypeError, ValueError) as exc:
            raise MdpError(f"malformed MDP document: {exc}") from exc
        if not states or not actions:
            raise MdpError("an MDP needs at least one state and one action")
        mdp = cls(states, actions, P, c)
        problems = validate(mdp)
        if problems:
            raise MdpError("; ".join(problems))
        P = P / P.sum(axis=-1, keepdims=True)
        return cls(states, actions, P, c)


@dataclass(frozen=True)
class DecisionRule:
    """Deterministic stationary rule u: state index -> action index."""

    actions: tuple

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    def __call__(self, x: int) -> int:
        return self.actions[x]

    def __len__(self):
        return len(self.actions)

    def as_array(self) -> np.ndarray:
        return np.array(self.actions, dtype=int)

    @classmethod
    def constant(cls, n_states: int, action: int) -> "DecisionRule":
        return cls((action,) * n_states)

    def label(self, mdp: Mdp) -> str:
        return "".join(mdp.actions[a] for a in self.actions) if all(
            len(a) == 1 for a in mdp.actions
        ) else "|".join(mdp.actions[a] for a in self.actions)


@dataclass(frozen=True)
class MarkovPolicy:
    """(u_0, ..., u_{H-1}, u, u, ...); H = 0 is the stationary policy u."""

    tail: DecisionRule
    head: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "head", tuple(self.head))

    @property
    def turnpike(self) -> int:
        return len(self.head)

    def rule_at(self, stage: int) -> DecisionRule:
        return self.head[stage] if stage < len(self.head) else self.tail

    @classmethod
    def stationary(cls, rule: DecisionRule) -> "MarkovPolicy":
        return cls(tail=rule)


def validate(mdp: Mdp) -> list[str]:
    """List every violated model invariant; empty when the MDP is valid."""
    problems = []
    P, c = mdp.transition, mdp.reward
    for a, name in enumerate(mdp.actions):
        for x, sname in enumerate(mdp.states):
            row = P[a, x]
            if not np.all(np.isfinite(row)):
                problems.append(f"P[{name}] row {sname}: non-finite entry")
                continue
            for y, p in enumerate(row):
                if p < 0 or p > 1:
                    problems.append(f"P[{name}][{sname},{mdp.states[y]}] = {p:g} outside [0, 1]")
            total = row.sum()
            if abs(total - 1.0) > ROW_TOL:
                problems.append(f"P[{name}] row {sname}: row sum {total:.12g}")
    for x, sname in enumerate(mdp.states):
        for a, name in enumerate(mdp.actions):
            if not np.isfinite(c[x, a]):
                problems.append(f"reward c({sname},{name}) = {c[x, a]} is not finite")
    return problems


def span(f) -> float:
    f = np.asarray(f, dtype=float)
    if f.size == 0:
        raise ValueError("span of an empty vector")
    return float(f.max() - f.min())


def reward_norms(mdp: Mdp) -> tuple[float, float]:
    """(max |c|, max c - min c) over all state-action pairs."""
    c = mdp.reward
    return float(np.abs(c).max()), float(c.max() - c.min())


def load_mdp(path) -> Mdp:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MdpError(f"cannot read MDP from {path}: {exc}") from exc
    return Mdp.from_json(doc)


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               reward_scale: float = 1.0, sparsity: float = 0.0) -> Mdp:
    """Random instance; ``sparsity`` is the chance that an entry is zeroed."""
    P = rng.random((n_actions, n_states, n_states))
    if sparsity:
        P = P * (rng.random(P.shape) >= sparsity)
        empty = P.sum(axis=-1) == 0
        P[empty, 0] = 1.0
    P /= P.sum(axis=-1, keepdims=True)
    c = reward_scale * rng.uniform(-1, 1, (n_states, n_actions))
    return Mdp([f"s{i}" for i in range(n_states)], [f"a{i}" for i in range(n_actions)], P, c)


def policy_kernel(mdp: Mdp, rule: DecisionRule) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and reward vector of the chain run under ``rule``."""
    idx = np.arange(mdp.n_states)
    u = rule.as_array()
    return mdp.transition[u, idx, :], mdp.reward[idx, u]


def all_rules(mdp: Mdp):
    """Every deterministic stationary rule, in lexicographic order."""
    k, l = mdp.n_states, mdp.n_actions
    for code in range(l**k):
        acts = []
        for _ in range(k):
            code, a = divmod(code, l)
            acts.append(a)
        yield DecisionRule(tuple(acts))
