"""Certified value iteration on the geometric risk ladder.

Level i of the ladder carries w(., gamma * beta**i).  The infinite ladder is
cut at depth M; the truncated recursion is run from a lower and an upper
seed, so every level is bracketed by an interval that provably contains the
true value.  Greedy actions are certified when the lower backup of the
chosen action beats the upper backup of every genuine rival.
"""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .entropic import NEUTRAL_EPS, entropic_rows
from .mdp_core import DecisionRule, MarkovPolicy, Mdp, reward_norms

DEFAULT_BAND = 1e-6
MAX_DEPTH = 100_000


def check_beta(beta: float) -> None:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"discount factor must lie in (0, 1), got {beta!r}")


def default_depth(mdp: Mdp, beta: float, band: float = DEFAULT_BAND) -> int:
    """Smallest M with 2 beta^M ||c|| / (1 - beta) <= band, capped at MAX_DEPTH."""
    check_beta(beta)
    cmax, _ = reward_norms(mdp)
    if cmax == 0:
        return 1
    m = math.log(band * (1 - beta) / (2 * cmax)) / math.log(beta)
    return int(min(MAX_DEPTH, max(1, math.ceil(m))))


@dataclass(frozen=True)
class GammaLadder:
    gamma0: float
    beta: float
    depth: int

    def __post_init__(self):
        check_beta(self.beta)
        if self.depth < 1:
            raise ValueError("ladder depth must be at least 1")

    def level(self, i: int) -> float:
        return self.gamma0 * self.beta**i

    def levels(self) -> np.ndarray:
        return self.gamma0 * self.beta ** np.arange(self.depth + 1)


@dataclass(frozen=True)
class ValueBands:
    """lower[i, x] <= w(x, gamma beta^i) <= upper[i, x] for i = 0..M."""

    lower: np.ndarray
    upper: np.ndarray
    beta: float
    cmax: float

    @property
    def depth(self) -> int:
        return self.lower.shape[0] - 1

    def gap_bound(self, i) -> np.ndarray:
        i = np.asarray(i)
        return 2 * self.beta ** (self.depth - i) * self.cmax / (1 - self.beta)

    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class RiskNeutral:
    """Exact gamma = 0 solution: values, Q table (l, k) and smallest-index rule."""

    values: np.ndarray
    q: np.ndarray
    rule: DecisionRule


def risk_neutral_solve(mdp: Mdp, beta: float) -> RiskNeutral:
    """Howard policy iteration for the risk-neutral discounted problem."""
    check_beta(beta)
    P, c = mdp.transition, mdp.reward
    k = mdp.n_states
    idx = np.arange(k)
    u = np.argmax(c, axis=1)
    for _ in range(10 * mdp.n_actions * k + 100):
        v = np.linalg.solve(np.eye(k) - beta * P[u, idx, :], c[idx, u])
        q = c.T + beta * P @ v
        best = q.max(axis=0)
        tol = 1e-12 * max(1.0, np.abs(best).max())
        improved = q[u, idx] < best - tol
        if not improved.any():
            break
        u = np.where(improved, np.argmax(q, axis=0), u)
    # canonical smallest-index maximiser among numerical ties
    best = q.max(axis=0)
    tol = 1e-12 * max(1.0, np.abs(best).max())
    u = np.argmax(q >= best - tol, axis=0)
    return RiskNeutral(v, q, DecisionRule(u))


def q_values(mdp: Mdp, next_values, gamma_level, beta) -> np.ndarray:
    """Q[..., a, x] = c(x, a) + mu^{gamma'}(beta * next(Y)), Y ~ P^a(x, .).

    ``next_values`` has shape (..., k); ``gamma_level`` broadcasts against the
    leading shape.
    """
    nxt = np.asarray(next_values, dtype=float)
    g = np.asarray(gamma_level, dtype=float)
    lead = nxt.shape[:-1]
    ent = entropic_rows(
        beta * nxt[..., None, None, :],
        mdp.transition,
        np.reshape(g, g.shape + (1, 1)) if g.ndim else g,
    )
    return mdp.reward.T + ent.reshape(lead + mdp.transition.shape[:2])


class _Kernel:
    """q_values specialised to a (B, k) batch of next values and (B,) levels,
    with the transition structure precomputed.  Used in the ladder loop where
    per-call overhead dominates; agrees with q_values to rounding."""

    def __init__(self, mdp: Mdp, beta: float):
        l, k, _ = mdp.transition.shape
        self.shape = (l, k)
        self.beta = beta
        self.w = mdp.transition
        self.support = mdp.transition > 0
        self.pt = mdp.transition.reshape(l * k, k).T.copy()
        self.r = mdp.reward.T

    def __call__(self, nxt, g):
        B = nxt.shape[0]
        l, k = self.shape
        v = self.beta * nxt
        mean = (v @ self.pt).reshape(B, l, k)
        a = np.abs(g)
        if np.all(a < NEUTRAL_EPS):
            return self.r + mean
        V = v[:, None, None, :]
        big = np.where(self.support, V, -np.inf).max(axis=-1)
        small = np.where(self.support, V, np.inf).min(axis=-1)
        gg = g[:, None, None]
        safe = np.where(a < NEUTRAL_EPS, 1.0, g)[:, None, None]
        centred = a[:, None, None] * (big - small) <= 1.0
        gd = gg[..., None] * (V - mean[..., None])
        out = np.empty((B, l, k))
        if centred.any():
            e = np.expm1(np.where(self.support & centred[..., None], gd, 0.0))
            out = np.log1p(np.einsum("blkj,lkj->blk", e, self.w)) / safe
        if not centred.all():
            shift = np.where(gg > 0, gg * (big - mean), gg * (small - mean))
            with np.errstate(under="ignore"):
                t = np.exp(np.where(self.support, gd - shift[..., None], -np.inf))
            far = (shift + np.log(np.einsum("blkj,lkj->blk", t, self.w))) / safe
            out = np.where(centred, out, far)
        return self.r + mean + np.where(a[:, None, None] < NEUTRAL_EPS, 0.0, out)


def backup(mdp: Mdp, next_values, gamma_level: float, beta: float) -> tuple[np.ndarray, DecisionRule]:
    """One application of the Bellman operator at risk level ``gamma_level``."""
    check_beta(beta)
    nxt = np.asarray(next_values, dtype=float)
    if nxt.shape != (mdp.n_states,) or not np.all(np.isfinite(nxt)):
        raise ValueError("next_values must be a finite vector over the states")
    q = q_values(mdp, nxt, gamma_level, beta)
    return q.max(axis=0), DecisionRule(np.argmax(q, axis=0))


def _rival_mask(mdp: Mdp) -> np.ndarray:
    # rivals[x, a, b]: b is a genuine competitor of a at x
    return ~mdp.equivalent_actions()


def _certify(q_lo, q_hi, rivals):
    """Greedy rule from the lower backups plus strict certification flags.

    q_lo, q_hi: (..., l, k).  Returns greedy (..., k), certified (..., k),
    lower and upper maxima (..., k).
    """
    greedy = np.argmax(q_lo, axis=-2)
    best_lo = np.take_along_axis(q_lo, greedy[..., None, :], axis=-2)[..., 0, :]
    k = q_lo.shape[-1]
    mask = rivals[np.arange(k), greedy]  # (..., k, l)
    hi_t = np.swapaxes(q_hi, -1, -2)
    rival_hi = np.where(mask, hi_t, -np.inf).max(axis=-1)
    return greedy, best_lo > rival_hi, q_lo.max(axis=-2), q_hi.max(axis=-2)


def _hoeffding_band(w0, gamma_level, spread):
    """Bracket of w(., gamma') around the risk-neutral optimum w0.

    mu^g(Z) <= E[Z] for g < 0 and Hoeffding's lemma gives
    mu^g(Z) >= E[Z] - |g| span(Z)^2 / 8; span(Z) <= ||c||_sp / (1 - beta).
    """
    g = np.asarray(gamma_level, dtype=float)[..., None]
    delta = np.abs(g) * spread**2 / 8
    lo = np.where(g < 0, w0 - delta, w0)
    hi = np.where(g > 0, w0 + delta, w0)
    return lo, hi


def tail_certificate(rn: RiskNeutral, mdp: Mdp, gamma_deep, beta: float):
    """True where the risk-neutral rule is provably optimal at every level
    at or beyond ``gamma_deep`` (|gamma| non-increasing along the ladder).

    At such levels every backup lies within |gamma'| beta^2 S^2 / 4 of its
    risk-neutral value, so a risk-neutral margin larger than that decides
    the argmax for the rest of the ladder.
    """
    _, csp = reward_norms(mdp)
    spread = csp / (1 - beta)
    q = rn.q
    k = mdp.n_states
    rivals = _rival_mask(mdp)[np.arange(k), rn.rule.as_array()]  # (k, l)
    own = q[rn.rule.as_array(), np.arange(k)]
    rival_best = np.where(rivals, q.T, -np.inf).max(axis=-1)
    margin = np.min(own - rival_best)
    eps = np.abs(np.asarray(gamma_deep, dtype=float)) * beta**2 * spread**2 / 4
    return margin > eps * (1 + 1e-9) + 1e-12 * max(1.0, np.abs(own).max())


@dataclass
class _LadderRun:
    lower0: np.ndarray
    upper0: np.ndarray
    head: np.ndarray  # stage-0 greedy (G, k)
    head_certified: np.ndarray
    tail: np.ndarray  # greedy at stage M-1 (G, k)
    turnpike: np.ndarray
    certified: np.ndarray
    tail_certified: np.ndarray
    history: dict | None = None


def _run_ladder(mdp: Mdp, gammas, beta: float, depth: int, keep_history: bool = False,
                rn: RiskNeutral | None = None, seeds: str = "hoeffding") -> _LadderRun:
    """Backward recursion for a batch of nonzero initial risk levels."""
    gammas = np.asarray(gammas, dtype=float)
    G, k, M = gammas.size, mdp.n_states, depth
    cmax, csp = reward_norms(mdp)
    bound = cmax / (1 - beta)
    spread = csp / (1 - beta)
    rivals = _rival_mask(mdp)
    if rn is None:
        rn = risk_neutral_solve(mdp, beta)
    use_h = seeds == "hoeffding"
    kern = _Kernel(mdp, beta)

    def clip(lo, hi, g):
        lo = np.maximum(lo, -bound)
        hi = np.minimum(hi, bound)
        if use_h:
            h_lo, h_hi = _hoeffding_band(rn.values, g, spread)
            lo = np.maximum(lo, h_lo)
            hi = np.minimum(hi, h_hi)
        return np.minimum(lo, hi), hi

    g_m = gammas * beta**M
    lo, hi = clip(np.full((G, k), -bound), np.full((G, k), bound), g_m)
    if keep_history:
        hist_lo = np.empty((M + 1, G, k))
        hist_hi = np.empty((M + 1, G, k))
        hist_greedy = np.empty((M, G, k), dtype=int)
        hist_cert = np.empty((M, G, k), dtype=bool)
        hist_lo[M], hist_hi[M] = lo, hi

    tail = None
    broken = np.zeros(G, dtype=bool)
    suffix_cert = np.ones(G, dtype=bool)
    turnpike = np.zeros(G, dtype=int)
    certified = np.zeros(G, dtype=bool)
    for i in range(M - 1, -1, -1):
        g_i = gammas * beta**i
        q = kern(np.concatenate([lo, hi]), np.concatenate([g_i, g_i]))  # (2G, l, k)
        greedy, cert, lo, hi = _certify(q[:G], q[G:], rivals)
        lo, hi = clip(lo, hi, g_i)
        if tail is None:
            tail = greedy.copy()
        differs = np.any(greedy != tail, axis=1)
        newly = differs & ~broken
        turnpike[newly] = i + 1
        certified[newly] = suffix_cert[newly] & np.any(cert & (greedy != tail), axis=1)[newly]
        broken |= differs
        suffix_cert &= np.where(broken, suffix_cert, cert.all(axis=1))
        if keep_history:
            hist_lo[i], hist_hi[i] = lo, hi
            hist_greedy[i], hist_cert[i] = greedy, cert
        if i == 0:
            head, head_cert = greedy, cert

    certified = np.where(broken, certified, suffix_cert)
    tail_ok = tail_certificate(rn, mdp, g_m, beta) & np.all(tail == rn.rule.as_array(), axis=1)
    run = _LadderRun(lo, hi, head, head_cert, tail, turnpike, certified & tail_ok, tail_ok)
    if keep_history:
        run.history = dict(lower=hist_lo, upper=hist_hi, greedy=hist_greedy, certified=hist_cert)
    return run


def _run_neutral(mdp: Mdp, beta: float, depth: int):
    """gamma = 0: the ladder collapses to one level; plain sandwiched VI."""
    cmax, _ = reward_norms(mdp)
    bound = cmax / (1 - beta)
    k = mdp.n_states
    rivals = _rival_mask(mdp)
    lo, hi = np.full(k, -bound), np.full(k, bound)
    for _ in range(depth):
        q = q_values(mdp, np.stack([lo, hi]), 0.0, beta)
        lo, hi = q[0].max(axis=0), q[1].max(axis=0)
    q = q_values(mdp, np.stack([lo, hi]), 0.0, beta)
    greedy, cert, _, _ = _certify(q[0], q[1], rivals)
    return lo, hi, greedy, cert


@dataclass(frozen=True)
class SolveResult:
    mdp: Mdp
    ladder: GammaLadder
    bands: ValueBands
    schedule: tuple  # DecisionRule per stage 0..M-1
    certified: np.ndarray  # (M, k)
    tail_rule: DecisionRule
    tail_certified: bool
    turnpike: int
    turnpike_certified: bool

    @property
    def turnpike_estimate(self):
        return self.turnpike if self.turnpike_certified else "not certified"

    def value_band(self, x: int = 0, level: int = 0) -> tuple[float, float]:
        return float(self.bands.lower[level, x]), float(self.bands.upper[level, x])

    def policy(self) -> MarkovPolicy:
        """The greedy schedule as an ultimately stationary policy."""
        return MarkovPolicy(tail=self.tail_rule, head=self.schedule[: self.turnpike])

    def stage_certified(self, i: int) -> bool:
        return bool(self.certified[i].all())

    def to_json(self) -> dict:
        acts = self.mdp.actions
        return {
            "beta": self.ladder.beta,
            "gamma": self.ladder.gamma0,
            "depth": self.ladder.depth,
            "states": list(self.mdp.states),
            "value_lo": self.bands.lower[0].tolist(),
            "value_hi": self.bands.upper[0].tolist(),
            "turnpike": self.turnpike,
            "certified": self.turnpike_certified,
            "tail_rule": [acts[a] for a in self.tail_rule.actions],
            "tail_certified": self.tail_certified,
            "schedule": [
                {"stage": i, "rule": [acts[a] for a in r.actions],
                 "certified": self.certified[i].tolist()}
                for i, r in enumerate(self.schedule[: max(self.turnpike, 1)])
            ],
        }


def solve(mdp: Mdp, gamma: float, beta: float, depth: int | None = None,
          seeds: str = "hoeffding") -> SolveResult:
    """Bracket w(., gamma beta^i) for i = 0..M and extract the greedy schedule.

    ``seeds="constant"`` starts the level-M recursion from -/+ ||c||/(1-beta)
    only; the default additionally intersects every level with the
    Hoeffding bracket around the risk-neutral optimum, which is what lets the
    deep stages (and hence the turnpike) be certified.
    """
    check_beta(beta)
    if seeds not in ("hoeffding", "constant"):
        raise ValueError(f"unknown seeds {seeds!r}")
    M = default_depth(mdp, beta) if depth is None else int(depth)
    ladder = GammaLadder(gamma, beta, M)
    cmax, _ = reward_norms(mdp)
    k = mdp.n_states
    if gamma == 0:
        lo, hi, greedy, cert = _run_neutral(mdp, beta, M)
        bands = ValueBands(np.tile(lo, (M + 1, 1)), np.tile(hi, (M + 1, 1)), beta, cmax)
        rule = DecisionRule(greedy)
        ok = bool(cert.all())
        return SolveResult(mdp, ladder, bands, (rule,) * M, np.tile(cert, (M, 1)),
                           rule, ok, 0, ok)
    run = _run_ladder(mdp, [gamma], beta, M, keep_history=True, seeds=seeds)
    h = run.history
    bands = ValueBands(h["lower"][:, 0], h["upper"][:, 0], beta, cmax)
    schedule = tuple(DecisionRule(h["greedy"][i, 0]) for i in range(M))
    tail = DecisionRule(run.tail[0])
    return SolveResult(mdp, ladder, bands, schedule, h["certified"][:, 0], tail,
                       bool(run.tail_certified[0]), int(run.turnpike[0]),
                       bool(run.certified[0]))


@dataclass(frozen=True)
class Turnpike:
    n: int
    certified: bool
    depth: int
    result: SolveResult

    def __iter__(self):
        return iter((self.n, self.certified))


def turnpike(mdp: Mdp, gamma: float, beta: float, depth_cap: int = 1 << 15,
             start_depth: int = 64) -> Turnpike:
    """Double the depth until the greedy schedule's turnpike is certified."""
    check_beta(beta)
    if depth_cap < 1:
        raise ValueError("depth_cap must be at least 1")
    M = min(start_depth, depth_cap)
    while True:
        res = solve(mdp, gamma, beta, M)
        if res.turnpike_certified or M >= depth_cap:
            return Turnpike(res.turnpike, res.turnpike_certified, M, res)
        M = min(2 * M, depth_cap)


SWEEP_HEADER = ["beta", "gamma", "turnpike", "certified", "head_rule", "tail_rule",
                "value_lo", "value_hi"]


@dataclass
class SweepGrid:
    """Row-major (beta, gamma) grid of turnpike records."""

    betas: np.ndarray
    gammas: np.ndarray
    turnpike: np.ndarray
    certified: np.ndarray
    head_rule: np.ndarray  # object array of labels
    tail_rule: np.ndarray
    value_lo: np.ndarray
    value_hi: np.ndarray
    depth: np.ndarray = field(default=None)

    def records(self):
        for i, b in enumerate(self.betas):
            for j, g in enumerate(self.gammas):
                yield {
                    "beta": float(b), "gamma": float(g),
                    "turnpike": int(self.turnpike[i, j]),
                    "certified": bool(self.certified[i, j]),
                    "head_rule": self.head_rule[i, j], "tail_rule": self.tail_rule[i, j],
                    "value_lo": float(self.value_lo[i, j]),
                    "value_hi": float(self.value_hi[i, j]),
                }

    def to_csv(self, extra=None) -> str:
        """CSV text; ``extra`` maps column name -> (nbeta, ngamma) array."""
        from .io import fmt

        extra = extra or {}
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_HEADER + list(extra))
        for n, rec in enumerate(self.records()):
            i, j = divmod(n, len(self.gammas))
            row = [fmt(rec["beta"]), fmt(rec["gamma"]), rec["turnpike"],
                   int(rec["certified"]), rec["head_rule"], rec["tail_rule"],
                   fmt(rec["value_lo"]), fmt(rec["value_hi"])]
            row += [v[i, j] if np.issubdtype(np.asarray(v).dtype, np.integer) else fmt(v[i, j])
                    for v in extra.values()]
            w.writerow(row)
        return buf.getvalue()


def _sweep_row(args):
    """Turnpike records for one beta and a block of gammas (worker entry point)."""
    mdp, beta, gammas, depth_cap, start_depth, x0 = args
    gammas = np.asarray(gammas, dtype=float)
    G, k = gammas.size, mdp.n_states
    out = dict(
        turnpike=np.zeros(G, dtype=int), certified=np.zeros(G, dtype=bool),
        head=np.zeros((G, k), dtype=int), tail=np.zeros((G, k), dtype=int),
        lo=np.zeros(G), hi=np.zeros(G), depth=np.zeros(G, dtype=int),
    )
    rn = risk_neutral_solve(mdp, beta)
    for j in np.flatnonzero(gammas == 0):
        # one level only, so the full default depth is cheap here
        res = turnpike(mdp, 0.0, beta, depth_cap, min(depth_cap, default_depth(mdp, beta))).result
        out["turnpike"][j] = res.turnpike
        out["certified"][j] = res.turnpike_certified
        out["head"][j] = res.schedule[0].as_array()
        out["tail"][j] = res.tail_rule.as_array()
        out["lo"][j], out["hi"][j] = res.value_band(x0)
        out["depth"][j] = res.ladder.depth
    todo = np.flatnonzero(gammas != 0)
    M = min(start_depth, depth_cap)
    while todo.size:
        run = _run_ladder(mdp, gammas[todo], beta, M, rn=rn)
        out["turnpike"][todo] = run.turnpike
        out["certified"][todo] = run.certified
        out["head"][todo] = run.head
        out["tail"][todo] = run.tail
        out["lo"][todo] = run.lower0[:, x0]
        out["hi"][todo] = run.upper0[:, x0]
        out["depth"][todo] = M
        if M >= depth_cap:
            break
        todo = todo[~run.certified]
        M = min(2 * M, depth_cap)
    return out


def resolve_workers(workers: int | None = None) -> int:
    env = os.environ.get("RSMDP_WORKERS")
    if env:
        workers = int(env)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError("worker count must be at least 1")
    return workers


def sweep(mdp: Mdp, betas, gammas, depth_cap: int = 1 << 15, workers: int | None = None,
          start_depth: int = 64, x0: int = 0, block: int = 512) -> SweepGrid:
    """Turnpike, head/tail rules and value band over a (beta, gamma) grid.

    Points are independent; work is split into (beta, gamma-block) tasks and
    merged by grid index, so the output does not depend on ``workers``.
    """
    betas = np.atleast_1d(np.asarray(betas, dtype=float))
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    for b in betas:
        check_beta(b)
    workers = resolve_workers(workers)
    tasks, where = [], []
    for i, b in enumerate(betas):
        for s in range(0, gammas.size, block):
            tasks.append((mdp, float(b), gammas[s:s + block], depth_cap, start_depth, x0))
            where.append((i, s))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_row, tasks))
    else:
        results = [_sweep_row(t) for t in tasks]

    shape = (betas.size, gammas.size)
    tp = np.zeros(shape, dtype=int)
    cert = np.zeros(shape, dtype=bool)
    depth = np.zeros(shape, dtype=int)
    lo, hi = np.zeros(shape), np.zeros(shape)
    head = np.empty(shape, dtype=object)
    tail = np.empty(shape, dtype=object)
    for (i, s), r in zip(where, results):
        sl = slice(s, s + len(r["lo"]))
        tp[i, sl], cert[i, sl], depth[i, sl] = r["turnpike"], r["certified"], r["depth"]
        lo[i, sl], hi[i, sl] = r["lo"], r["hi"]
        head[i, sl] = [DecisionRule(h).label(mdp) for h in r["head"]]
        tail[i, sl] = [DecisionRule(t).label(mdp) for t in r["tail"]]
    return SweepGrid(betas, gammas, tp, cert, head, tail, lo, hi, depth)
