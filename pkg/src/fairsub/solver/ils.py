"""Iterated local search from the initial assignment."""
from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction

from ..models import STAGE1, ModelSpec
from .bnb import root_bound
from .core import FEASIBLE, LIMIT_REACHED, OPTIMAL, Solution, finish


@dataclass(frozen=True)
class ILSParams:
    iters: int = 60  # perturbation rounds without improvement before stopping
    perturb: int | None = None  # arcs reassigned per kick; default max(2, ceil(2% of |A|))
    max_rounds: int = 20000
    time_limit: float | None = None


class _State:
    def __init__(self, comp, x):
        self.c = comp
        self.x = list(x)
        self.net = [[0] * comp.n_res for _ in range(comp.n_nodes)]
        for i, r in enumerate(self.x):
            self.net[comp.origin[i]][r] -= 1
            self.net[comp.dest[i]][r] += 1
        self.imb = sum(abs(v) for row in self.net for v in row)
        self.b = comp.burdens_of(self.x)

    def key(self, imb=None, b=None):
        c = self.c
        imb = self.imb if imb is None else imb
        b = self.b if b is None else b
        if c.kind == STAGE1:
            return (0, imb, sum(b))
        return (max(0, imb - c.istar), c.scaled(imb, b), sum(b))

    def move_delta(self, i, r):
        c = self.c
        o, d, q = c.origin[i], c.dest[i], self.x[i]
        if o == d:
            return 0
        no, nd = self.net[o], self.net[d]
        before = abs(no[q]) + abs(no[r]) + abs(nd[q]) + abs(nd[r])
        after = abs(no[q] + 1) + abs(no[r] - 1) + abs(nd[q] - 1) + abs(nd[r] + 1)
        return after - before

    def burden_after(self, i, r):
        c = self.c
        q, r0, s = self.x[i], c.init[i], c.sched[i]
        if (q == r0) == (r == r0):
            return self.b
        b = list(self.b)
        b[s] += 1 if q == r0 else -1
        return b

    def apply(self, i, r):
        c = self.c
        self.imb += self.move_delta(i, r)
        self.b = self.burden_after(i, r)
        q = self.x[i]
        o, d = c.origin[i], c.dest[i]
        self.net[o][q] += 1
        self.net[o][r] -= 1
        self.net[d][q] -= 1
        self.net[d][r] += 1
        self.x[i] = r


def _descend(st: _State, free) -> int:
    steps = 0
    cur = st.key()
    while True:
        best, move = cur, None
        for i in free:
            q = st.x[i]
            for r in st.c.cands[i]:
                if r == q:
                    continue
                k = st.key(st.imb + st.move_delta(i, r), st.burden_after(i, r))
                if k < best:
                    best, move = k, (i, r)
        if move is None:
            return steps
        st.apply(*move)
        cur = best
        steps += 1


def solve_ils(spec: ModelSpec, seed: int = 0, params: ILSParams | None = None) -> Solution:
    """Best-improvement single-arc moves plus random kicks, starting from Phi_0.

    For Stage 2 kinds the search key is (excess over I*, objective, changes),
    so the first descent doubles as the repair phase.
    """
    params = params or ILSParams()
    t0 = time.perf_counter()
    comp = spec.compile()
    rng = random.Random(seed)
    free = [i for i in range(comp.n_arcs) if len(comp.cands[i]) > 1]
    p = params.perturb or max(2, math.ceil(0.02 * comp.n_arcs))
    p = min(p, len(free))

    st = _State(comp, comp.init)
    _descend(st, free)
    best_key, best_x = st.key(), list(st.x)
    cur_x, cur_key = list(st.x), best_key
    lb = root_bound(spec)
    rounds = stale = 0
    deadline = None if params.time_limit is None else t0 + params.time_limit
    while free and stale < params.iters and rounds < params.max_rounds:
        if lb is not None and best_key[0] == 0 and Fraction(best_key[1], comp.den) <= lb:
            break
        if deadline is not None and time.perf_counter() > deadline:
            break
        rounds += 1
        trial = _State(comp, cur_x)
        for i in rng.sample(free, p):
            others = [r for r in comp.cands[i] if r != trial.x[i]]
            trial.apply(i, rng.choice(others))
        _descend(trial, free)
        k = trial.key()
        if k <= cur_key:
            cur_x, cur_key = list(trial.x), k
        if k < best_key:
            best_key, best_x = k, list(trial.x)
            stale = 0
        else:
            stale += 1
    wall = (time.perf_counter() - t0) * 1000
    if best_key[0] > 0:
        return Solution(LIMIT_REACHED, None, None, lb, "ils", iterations=rounds, wall_ms=wall, seed=seed)
    value = Fraction(best_key[1], comp.den)
    status = OPTIMAL if lb is not None and value <= lb else FEASIBLE
    return finish(spec, status, comp.decode(best_x), value if status == OPTIMAL else lb, "ils",
                  iterations=rounds, wall_ms=wall, seed=seed)
