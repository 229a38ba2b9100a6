"""Discounted risk-sensitive MDPs with entropic utility.

Certified value bands and decision schedules along the risk ladder
gamma, gamma*beta, gamma*beta^2, ..., plus policy evaluation, mixing
diagnostics, vanishing-discount limits and the repeated-lottery example.
"""
from .bellman import SolveResult, SweepGrid, backup, solve, sweep, turnpike
from .entropic import FiniteDistribution, entropic_value, hoeffding_gap
from .mdp_core import DecisionRule, MarkovPolicy, Mdp, MdpError, load_mdp, validate
from .policy_eval import evaluate, moment_compare, moments, simulate

__all__ = [
    "DecisionRule", "FiniteDistribution", "MarkovPolicy", "Mdp", "MdpError", "SolveResult",
    "SweepGrid", "backup", "entropic_value", "evaluate", "hoeffding_gap", "load_mdp",
    "moment_compare", "moments", "simulate", "solve", "sweep", "turnpike", "validate",
]
