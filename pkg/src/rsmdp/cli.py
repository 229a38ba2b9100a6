"""Command-line interface: ``rsmdp <command> [flags]``.

Exit codes: 0 success, 1 bad input, 2 certification failure under
``--require-certified``.  Every output file is written atomically.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import re
import sys
from dataclasses import dataclass

import numpy as np

from . import bellman, limits, lottery, mixing, policy_eval
from .io import dumps_json, fmt, write_atomic
from .mdp_core import DecisionRule, MarkovPolicy, Mdp, MdpError, load_mdp

EXIT_OK, EXIT_INPUT, EXIT_UNCERTIFIED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_range(text: str) -> np.ndarray:
    """``lo:hi:step`` (inclusive), a comma list, or a single number."""
    try:
        if ":" in text:
            lo, hi, step = (float(p) for p in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            # round away accumulated float noise so grid labels print cleanly
            return np.round(lo + step * np.arange(n), 12)
        return np.array([float(p) for p in text.split(",")])
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected lo:hi:step, a,b,c or a number") from None


def parse_ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",")]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def parse_rule(mdp: Mdp, text: str) -> DecisionRule:
    """Action per state: one label per character when labels are single
    characters, otherwise comma separated labels or indices."""
    parts = text.split(",") if "," in text else list(text)
    if len(parts) != mdp.n_states:
        raise UsageError(f"rule {text!r} has {len(parts)} entries, need {mdp.n_states}")
    acts = []
    for p in parts:
        if p in mdp.actions:
            acts.append(mdp.actions.index(p))
        elif p.isdigit() and int(p) < mdp.n_actions:
            acts.append(int(p))
        else:
            raise UsageError(f"unknown action {p!r}")
    return DecisionRule(acts)


def parse_policy(mdp: Mdp, text: str) -> MarkovPolicy:
    """``u0;u1;...;u``: head rules by stage, the last one repeats forever."""
    rules = [parse_rule(mdp, part) for part in text.split(";")]
    return MarkovPolicy(tail=rules[-1], head=rules[:-1])


@dataclass(frozen=True)
class RunConfig:
    command: str
    args: argparse.Namespace

    @property
    def workers(self) -> int:
        return bellman.resolve_workers(getattr(self.args, "workers", None))


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# -- commands -----------------------------------------------------------------

def cmd_solve(args) -> bool:
    mdp = load_mdp(args.mdp)
    res = bellman.solve(mdp, args.gamma, args.beta, args.depth, seeds=args.seeds)
    _emit(args, dumps_json(res.to_json()))
    return res.stage_certified(0) and res.turnpike_certified


def cmd_evaluate(args) -> bool:
    mdp = load_mdp(args.mdp)
    pol = parse_policy(mdp, args.policy)
    iv = policy_eval.evaluate(mdp, pol, args.x0, args.gamma, args.beta, args.depth)
    _emit(args, dumps_json({"x0": mdp.states[args.x0], "beta": args.beta, "gamma": args.gamma,
                            "value_lo": iv.lo, "value_hi": iv.hi}))
    return True


def cmd_simulate(args) -> bool:
    mdp = load_mdp(args.mdp)
    pol = parse_policy(mdp, args.policy)
    est = policy_eval.simulate(mdp, pol, args.x0, args.gamma, args.beta, args.horizon,
                               args.paths, args.seed)
    _emit(args, dumps_json({
        "x0": mdp.states[args.x0], "beta": args.beta, "gamma": args.gamma,
        "horizon": args.horizon, "paths": args.paths, "seed": args.seed,
        "estimate": est.estimate, "ci_lo": est.estimate - est.ci_half_width,
        "ci_hi": est.estimate + est.ci_half_width, "ess": est.ess,
    }))
    return True


def cmd_turnpike(args) -> bool:
    mdp = load_mdp(args.mdp)
    tp = bellman.turnpike(mdp, args.gamma, args.beta, args.depth_cap)
    res = tp.result
    _emit(args, dumps_json({
        "beta": args.beta, "gamma": args.gamma, "turnpike": tp.n, "certified": tp.certified,
        "depth": tp.depth, "tail_rule": res.tail_rule.label(mdp),
        "head_rules": [r.label(mdp) for r in res.schedule[: tp.n]],
    }))
    return tp.certified


def cmd_sweep(args, cfg: RunConfig) -> bool:
    mdp = load_mdp(args.mdp)
    grid = bellman.sweep(mdp, parse_range(args.beta), parse_range(args.gamma),
                         depth_cap=args.depth_cap, workers=cfg.workers, x0=args.x0)
    _emit(args, grid.to_csv())
    return bool(grid.certified.all())


def cmd_mixing(args) -> bool:
    mdp = load_mdp(args.mdp)
    if args.eps:
        mdp = mixing.smooth(mdp, args.eps)
    rep = mixing.mixing_report(mdp, args.gamma, args.beta, args.n_max, args.trials, args.seed)
    _emit(args, dumps_json(rep.to_json()))
    return True


def cmd_limits(args) -> bool:
    mdp = load_mdp(args.mdp)
    if args.eps:
        mdp = mixing.smooth(mdp, args.eps)
    betas = parse_range(args.beta)
    if args.table == "vanishing":
        rows = limits.vanishing_discount_table(mdp, args.gamma, betas, parse_ints(args.n),
                                               args.anchor, args.depth)
        out = [(fmt(r.beta), r.n, fmt(r.lambda_n), mdp.states[x], fmt(r.wbar_lo[x]), fmt(r.wbar_hi[x]))
               for r in rows for x in range(mdp.n_states)]
        _emit(args, _csv(["beta", "n", "lambda_n", "state", "wbar_lo", "wbar_hi"], out))
        return not any(r.wide for r in rows)
    if args.table == "distance":
        rows = limits.risk_neutral_distance(mdp, parse_range(args.gammas), betas, args.depth)
        _emit(args, _csv(["beta", "gamma", "span_distance"],
                         [(fmt(r.beta), fmt(r.gamma), fmt(r.span_distance)) for r in rows]))
        return True
    # blackwell
    out, ok = [], True
    for b in betas:
        br = limits.blackwell_rule(mdp, args.gamma, float(b), args.depth, args.stage)
        out.append((fmt(b), fmt(args.gamma), br.stage, br.rule.label(mdp), int(br.certified)))
        ok &= br.certified
    _emit(args, _csv(["beta", "gamma", "stage", "rule", "certified"], out))
    return ok


def cmd_moments(args) -> bool:
    mdp = load_mdp(args.mdp)
    u1 = parse_rule(mdp, args.policy)
    if args.compare:
        u2 = parse_rule(mdp, args.compare)
        res = policy_eval.moment_compare(mdp, u1, u2, args.beta, args.K, args.tol)
        _emit(args, _csv(["state", "order", "winner"],
                         [(mdp.states[r.state], "" if r.order is None else r.order, r.winner) for r in res]))
        return True
    T = policy_eval.moment_horizon(mdp, args.beta, args.K, args.tol)
    mv = policy_eval.moments(mdp, u1, args.beta, args.K, T)
    rows = [(j + 1, mdp.states[x], fmt(mv.values[j, x]), fmt(mv.error[j]))
            for j in range(args.K) for x in range(mdp.n_states)]
    _emit(args, _csv(["order", "state", "moment", "error_bound"], rows))
    return True


# caption grids of the lottery figures
FIGURE_BETAS = (0.9, 0.995)
FIGURE_GAMMAS = (-2.5, 2.5)


def cmd_lottery(args, cfg: RunConfig) -> bool:
    if args.action == "table":
        spec = lottery.LotterySpec(args.R, args.eps)
        _emit(args, lottery.table1(spec, args.gamma, args.beta).to_csv())
        return True
    if args.action == "values":
        cf = lottery.closed_form_values(lottery.LotterySpec(args.R, args.eps), args.gamma, args.beta)
        rows = [(u, fmt(cf.averaged[u]), fmt(cf.discounted[u])) for u in lottery.CHOICES]
        _emit(args, _csv(["choice", "averaged", "discounted"], rows))
        return True
    step = args.step
    betas = parse_range(args.betas) if args.betas else parse_range(f"{FIGURE_BETAS[0]}:{FIGURE_BETAS[1]}:{step}")
    gammas = parse_range(args.gammas) if args.gammas else parse_range(f"{FIGURE_GAMMAS[0]}:{FIGURE_GAMMAS[1]}:{step}")
    kind, R = lottery.FIGURES[args.figure]
    spec = lottery.LotterySpec(R if args.R is None else args.R, args.eps)
    if kind == "turnpike":
        grid, text = lottery.figure_turnpikes(spec, betas, gammas, args.depth_cap, cfg.workers)
        _emit(args, text)
        return bool(grid.certified.all())
    _emit(args, lottery.figure_limits(spec, betas, gammas))
    return True


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rsmdp", description="Discounted risk-sensitive MDP toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, gamma=True, beta=True):
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--require-certified", action="store_true",
                        help="exit 2 if any reported rule or turnpike is uncertified")
        if gamma:
            sp.add_argument("--gamma", type=float, required=True)
        if beta:
            sp.add_argument("--beta", type=float, required=True)

    def mdp_arg(sp):
        sp.add_argument("--mdp", required=True, help="MDP JSON file")

    sp = sub.add_parser("solve", help="value bands, schedule and turnpike")
    mdp_arg(sp); common(sp)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--seeds", choices=("hoeffding", "constant"), default="hoeffding")

    sp = sub.add_parser("evaluate", help="value interval of a policy")
    mdp_arg(sp); common(sp)
    sp.add_argument("--policy", required=True, help="rule per stage, ';' separated; last repeats")
    sp.add_argument("--x0", type=int, default=0)
    sp.add_argument("--depth", type=int)

    sp = sub.add_parser("simulate", help="Monte Carlo estimate of a policy value")
    mdp_arg(sp); common(sp)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--x0", type=int, default=0)
    sp.add_argument("--horizon", type=int, default=300)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("turnpike", help="certified turnpike with depth doubling")
    mdp_arg(sp); common(sp)
    sp.add_argument("--depth-cap", type=int, default=1 << 15)

    sp = sub.add_parser("sweep", help="turnpike grid over beta x gamma")
    mdp_arg(sp); common(sp, gamma=False, beta=False)
    sp.add_argument("--beta", required=True, help="lo:hi:step")
    sp.add_argument("--gamma", required=True, help="lo:hi:step")
    sp.add_argument("--depth-cap", type=int, default=1 << 15)
    sp.add_argument("--x0", type=int, default=0)
    sp.add_argument("--workers", type=int)

    sp = sub.add_parser("mixing", help="mixing constants and span bounds")
    mdp_arg(sp); common(sp)
    sp.add_argument("--eps", type=float, default=0.0, help="smooth the kernels first")
    sp.add_argument("--n-max", type=int, default=4)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("limits", help="vanishing-discount and vanishing-risk tables")
    mdp_arg(sp); common(sp, beta=False)
    sp.add_argument("--table", choices=("vanishing", "distance", "blackwell"), default="vanishing")
    sp.add_argument("--beta", default="0.9,0.99,0.999,0.9995", help="beta list or range")
    sp.add_argument("--gammas", default="-1,-0.1,-0.01,-0.001,0", help="gamma list (distance table)")
    sp.add_argument("--n", default="0,1,2,5", help="level list (vanishing table)")
    sp.add_argument("--anchor", type=int, default=0)
    sp.add_argument("--stage", type=int, default=0, help="schedule stage (blackwell table)")
    sp.add_argument("--eps", type=float, default=0.0)
    sp.add_argument("--depth", type=int)

    sp = sub.add_parser("moments", help="discounted-reward moments or their comparison")
    mdp_arg(sp); common(sp, gamma=False)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--compare", help="second rule: lexicographic comparison")
    sp.add_argument("--K", type=int, default=3)
    sp.add_argument("--tol", type=float, default=1e-8)

    sp = sub.add_parser("lottery", help="repeated-lottery example")
    lsub = sp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    t = lsub.add_parser("table", help="A_k table for the first ten runs")
    common(t)
    t.add_argument("--R", type=float, default=7.0)
    t.add_argument("--eps", type=float, default=0.0)
    v = lsub.add_parser("values", help="closed-form limit values of the stationary rules")
    common(v)
    v.add_argument("--R", type=float, default=7.0)
    v.add_argument("--eps", type=float, default=0.0)
    s = lsub.add_parser("sweep", help="data behind one of the lottery plots")
    common(s, gamma=False, beta=False)
    s.add_argument("--figure", type=int, choices=sorted(lottery.FIGURES), required=True)
    s.add_argument("--R", type=float, help="override the plot's reward")
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--step", type=float, default=0.001)
    s.add_argument("--betas", help="override the beta grid (lo:hi:step)")
    s.add_argument("--gammas", help="override the gamma grid (lo:hi:step)")
    s.add_argument("--depth-cap", type=int, default=1 << 15)
    s.add_argument("--workers", type=int)
    return p


COMMANDS = {
    "solve": cmd_solve, "evaluate": cmd_evaluate, "simulate": cmd_simulate,
    "turnpike": cmd_turnpike, "mixing": cmd_mixing, "limits": cmd_limits,
    "moments": cmd_moments,
}


_NEGATIVE = re.compile(r"^-[\d.]")


def _attach_negative_values(argv):
    # argparse reads "-1:1:0.5" as an option; glue such values to their flag
    out = []
    for tok in argv:
        if out and _NEGATIVE.match(tok) and out[-1].startswith("--") and "=" not in out[-1]:
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(_attach_negative_values(argv))
        cfg = RunConfig(args.command, args)
        if getattr(args, "workers", None) is not None and args.workers < 1:
            raise UsageError("--workers must be >= 1")
        if args.command in ("sweep", "lottery"):
            ok = (cmd_sweep if args.command == "sweep" else cmd_lottery)(args, cfg)
        else:
            ok = COMMANDS[args.command](args)
    except (UsageError, MdpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.require_certified and not ok:
        print("error: certification failed", file=sys.stderr)
        return EXIT_UNCERTIFIED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
