"""Repeated independent lottery: three choices per run, reward R on a win.

A run takes two chain steps: at state 1 the player picks a lottery (paying
-1, 0 or +1 to enter, winning with probability 0.8, 0.5 or 0.2), then moves
to state 3 on a win (reward R) or to state 2 otherwise, and returns to 1.
Actions at states 2 and 3 are identical and therefore irrelevant.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .bellman import SweepGrid, check_beta, solve, sweep
from .io import fmt
from .mdp_core import Mdp
from .mixing import smooth

CHOICES = ("a", "b", "c")
WIN = (0.8, 0.5, 0.2)
PAY = (-1.0, 0.0, 1.0)
TABLE_COLUMNS = 10


@dataclass(frozen=True)
class LotterySpec:
    R: float = 7.0
    eps: float = 0.0
    # debug switch: put the win probability on the losing outcome instead
    printed_weights: bool = False

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not (self.eps >= 0 and self.eps * 3 < 1):
            raise ValueError("need 0 <= eps < 1/3")

    def win(self, u: int) -> float:
        return 1.0 - WIN[u] if self.printed_weights else WIN[u]


def _choice(u) -> int:
    return CHOICES.index(u) if isinstance(u, str) else int(u)


def build(spec: LotterySpec = LotterySpec()) -> Mdp:
    P = np.zeros((3, 3, 3))
    for u in range(3):
        p = spec.win(u)
        P[u, 0] = (0.0, 1.0 - p, p)
        P[u, 1, 0] = P[u, 2, 0] = 1.0
    c = np.array([PAY, (0.0, 0.0, 0.0), (spec.R,) * 3])
    mdp = Mdp(("1", "2", "3"), CHOICES, P, c)
    return smooth(mdp, spec.eps) if spec.eps > 0 else mdp


def _log_mix(p: float, x: float) -> float:
    """log((1 - p) + p e^x) without overflow or cancellation."""
    if x > 0:
        return x + math.log((1 - p) * math.exp(-x) + p)
    return math.log1p(p * math.expm1(x))


def a_k(spec: LotterySpec, choice, k: float, gamma: float, beta: float) -> float:
    """Discounted contribution of run ``k`` (0-based) when choosing ``choice``.

    Non-integer ``k`` is allowed: k = i/2 gives the comparison made at chain
    stage i, which is what the turnpike of the chain is built from.
    """
    u = _choice(choice)
    p = spec.win(u)
    scale = beta ** (2 * k)
    if gamma == 0:
        return scale * PAY[u] + p * beta ** (2 * k + 1) * spec.R
    return scale * PAY[u] + _log_mix(p, gamma * beta ** (2 * k + 1) * spec.R) / gamma


@dataclass(frozen=True)
class Table1:
    values: np.ndarray  # (3, TABLE_COLUMNS), rows a, b, c
    best: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["choice"] + [str(k + 1) for k in range(self.values.shape[1])])
        for u, row in zip(CHOICES, self.values):
            w.writerow([u] + [fmt(v) for v in row])
        w.writerow(["best"] + list(self.best))
        return buf.getvalue()


def table1(spec: LotterySpec, gamma: float, beta: float, columns: int = TABLE_COLUMNS) -> Table1:
    """A_k for the first ``columns`` runs; column j holds run j (printed as j+1)."""
    check_beta(beta)
    vals = np.array([[a_k(spec, u, k, gamma, beta) for k in range(columns)] for u in range(3)])
    best = tuple(CHOICES[int(np.argmax(vals[:, k]))] for k in range(columns))
    return Table1(vals, best)


@dataclass(frozen=True)
class ClosedForms:
    averaged: dict  # choice -> long-run risk-sensitive average per step
    discounted: dict  # choice -> risk-neutral discounted value from state 1


def closed_form_values(spec: LotterySpec, gamma: float, beta: float) -> ClosedForms:
    check_beta(beta)
    avg, disc = {}, {}
    for u, name in enumerate(CHOICES):
        p = spec.win(u)
        if gamma == 0:
            avg[name] = 0.5 * (PAY[u] + p * spec.R)
        else:
            avg[name] = 0.5 * (PAY[u] + _log_mix(p, gamma * spec.R) / gamma)
        disc[name] = (PAY[u] + p * beta * spec.R) / (1 - beta**2)
    return ClosedForms(avg, disc)


def best_choice(spec: LotterySpec, k: float, gamma: float, beta: float) -> int:
    vals = [a_k(spec, u, k, gamma, beta) for u in range(3)]
    return int(np.argmax(vals))


def closed_form_turnpike(spec: LotterySpec, gamma: float, beta: float, max_stage: int = 1 << 20) -> int:
    """Chain-step turnpike from the A_k comparisons (state 1 only).

    Stage i compares A_{i/2}.  Deep stages follow the risk-neutral rule
    argmax c_u + p_u beta R once |gamma| beta^(i+2) R^2 / 4 drops below its
    margin, so the scan stops there.
    """
    scores = [PAY[u] + spec.win(u) * beta * spec.R for u in range(3)]
    limit = int(np.argmax(scores))
    margin = scores[limit] - max(s for u, s in enumerate(scores) if u != limit)
    if margin <= 0:
        raise ValueError("risk-neutral tie: turnpike undefined")
    last = -1
    for i in range(max_stage):
        if abs(gamma) * beta ** (i + 2) * spec.R**2 / 4 < margin:
            break
        if best_choice(spec, i / 2, gamma, beta) != limit:
            last = i
    else:
        raise RuntimeError("scan did not reach the risk-neutral regime")
    return last + 1


def run_count(chain_steps) -> np.ndarray:
    """Chain-step turnpike to lottery runs (two steps per run, rounded up)."""
    return -(-np.asarray(chain_steps) // 2)


@dataclass(frozen=True)
class SwitchBracket:
    lo: float
    hi: float
    rule_lo: str
    rule_hi: str
    certified: bool


def risk_neutral_switch(spec: LotterySpec, lo: float, hi: float, tol: float = 1e-4,
                        depth: int | None = None) -> SwitchBracket:
    """Bisect beta for a change of the solver's stage-0 rule at state 1, gamma = 0."""
    mdp = build(spec)

    def rule(b):
        res = solve(mdp, 0.0, b, depth)
        return CHOICES[res.schedule[0](0)], bool(res.certified[0, 0])

    r_lo, c_lo = rule(lo)
    r_hi, c_hi = rule(hi)
    if r_lo == r_hi:
        raise ValueError(f"no switch in [{lo}, {hi}]: rule {r_lo} at both ends")
    ok = c_lo and c_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        r, c = rule(mid)
        ok &= c
        if r == r_lo:
            lo = mid
        else:
            hi, r_hi = mid, r
    return SwitchBracket(lo, hi, r_lo, r_hi, ok)


FIGURES = {2: ("turnpike", 7.0), 3: ("limits", 7.0), 4: ("limits", 3.5), 5: ("turnpike", 3.5)}


def figure_turnpikes(spec: LotterySpec, betas, gammas, depth_cap: int = 1 << 15,
                     workers: int | None = None) -> tuple[SweepGrid, str]:
    grid = sweep(build(spec), betas, gammas, depth_cap=depth_cap, workers=workers)
    return grid, grid.to_csv({"run_turnpike": run_count(grid.turnpike)})


def figure_limits(spec: LotterySpec, betas, gammas) -> str:
    """Long CSV of the stationary-rule limit values: averaged vs gamma,
    risk-neutral discounted vs beta."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "param", *CHOICES, "best"])
    for g in np.atleast_1d(gammas):
        v = closed_form_values(spec, float(g), 0.5).averaged
        w.writerow(["averaged", fmt(g), *(fmt(v[u]) for u in CHOICES), max(CHOICES, key=v.get)])
    for b in np.atleast_1d(betas):
        v = closed_form_values(spec, 0.0, float(b)).discounted
        w.writerow(["discounted", fmt(b), *(fmt(v[u]) for u in CHOICES), max(CHOICES, key=v.get)])
    return buf.getvalue()


def figure_sweeps(figure: int, betas, gammas, eps: float = 0.0, depth_cap: int = 1 << 15,
                  workers: int | None = None) -> str:
    """CSV behind one of the four lottery figures (2, 5: turnpike grids at
    R = 7 and 3.5; 3, 4: limit-value curves at R = 7 and 3.5)."""
    if figure not in FIGURES:
        raise ValueError(f"figure must be one of {sorted(FIGURES)}")
    kind, R = FIGURES[figure]
    spec = LotterySpec(R, eps)
    if kind == "turnpike":
        return figure_turnpikes(spec, betas, gammas, depth_cap, workers)[1]
    return figure_limits(spec, betas, gammas)
