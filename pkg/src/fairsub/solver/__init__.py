"""Optimizers over assignment space: exhaustive oracle, branch-and-bound, ILS."""
from .bnb import root_bound, solve_exact
from .brute import GUARD, Optima, enumerate_optima, search_space, solve_brute_force
from .core import (
    FEASIBLE,
    INFEASIBLE,
    LIMIT_REACHED,
    OPTIMAL,
    SearchSpaceError,
    Solution,
    SolveLimits,
)
from .ils import ILSParams, solve_ils

BACKENDS = ("exact", "brute", "ils")


def solve(spec, backend: str = "exact", limits: SolveLimits | None = None, seed: int = 0,
          ils_params: ILSParams | None = None, probs=None) -> Solution:
    if backend == "exact":
        return solve_exact(spec, limits, probs=probs)
    if backend == "brute":
        return solve_brute_force(spec)
    if backend == "ils":
        if limits is not None and limits.time_limit is not None:
            base = ils_params or ILSParams()
            ils_params = ILSParams(base.iters, base.perturb, base.max_rounds, limits.time_limit)
        return solve_ils(spec, seed, ils_params)
    raise ValueError(f"unknown backend {backend!r}")


__all__ = [
    "BACKENDS",
    "FEASIBLE",
    "GUARD",
    "ILSParams",
    "INFEASIBLE",
    "LIMIT_REACHED",
    "OPTIMAL",
    "Optima",
    "SearchSpaceError",
    "Solution",
    "SolveLimits",
    "enumerate_optima",
    "root_bound",
    "search_space",
    "solve",
    "solve_brute_force",
    "solve_exact",
    "solve_ils",
]
