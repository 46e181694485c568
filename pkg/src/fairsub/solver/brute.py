"""Exhaustive enumeration: the reference oracle for every other solver.

Assignments are enumerated in lexicographic order (arcs by id, each arc's
candidates by resource id) in numpy blocks, so the first optimum met is the
lexicographically smallest one.
"""
from __future__ import annotations

import math
import time
from fractions import Fraction
from itertools import combinations

import numpy as np

from ..models import STAGE1, Compiled, ModelSpec
from .core import INFEASIBLE, OPTIMAL, SearchSpaceError, Solution, finish

GUARD = 10 ** 7
CHUNK = 1 << 15


class Optima(list):
    """List of optimal assignments; ``truncated`` is set when the cap cut it short."""

    truncated: bool = False
    value: Fraction | None = None


def search_space(spec: ModelSpec) -> int:
    return math.prod(len(spec.candidates[a.id]) for a in spec.instance.arcs)


def _blocks(comp: Compiled):
    sizes = [len(c) for c in comp.cands]
    total = math.prod(sizes)
    cand_arr = [np.asarray(c, dtype=np.int64) for c in comp.cands]
    for start in range(0, total, CHUNK):
        k = np.arange(start, min(total, start + CHUNK), dtype=np.int64)
        x = np.empty((len(k), comp.n_arcs), dtype=np.int64)
        for i in reversed(range(comp.n_arcs)):
            x[:, i] = cand_arr[i][k % sizes[i]]
            k //= sizes[i]
        yield x


def _score(comp: Compiled, x: np.ndarray):
    """(feasible mask, den*objective) for a block of assignments."""
    p, r = x.shape[0], comp.n_res
    rows = np.arange(p)
    net = np.zeros((p, comp.n_nodes * r), dtype=np.int64)
    for i in range(comp.n_arcs):
        net[rows, comp.dest[i] * r + x[:, i]] += 1
        net[rows, comp.origin[i] * r + x[:, i]] -= 1
    imb = np.abs(net).sum(axis=1)
    if comp.kind == STAGE1:
        return np.ones(p, dtype=bool), imb
    changed = (x != np.asarray(comp.init, dtype=np.int64)).astype(np.int64)
    owner = np.zeros((comp.n_arcs, comp.n_sched), dtype=np.int64)
    owner[np.arange(comp.n_arcs), comp.sched] = 1
    b = changed @ owner
    obj = np.zeros(p, dtype=np.int64)
    if comp.w_changes:
        obj += comp.w_changes * b.sum(axis=1)
    if comp.w_max:
        obj += comp.w_max * b.max(axis=1)
    if comp.w_pairs:
        pairs = np.zeros(p, dtype=np.int64)
        for s, t in combinations(range(comp.n_sched), 2):
            pairs += np.abs(b[:, s] - b[:, t])
        obj += comp.w_pairs * pairs
    return imb <= comp.istar, obj


def _guard(spec: ModelSpec, guard: int) -> Compiled:
    size = search_space(spec)
    if size > guard:
        raise SearchSpaceError(f"{size} assignments exceed the brute-force guard of {guard}")
    return spec.compile()


def solve_brute_force(spec: ModelSpec, guard: int = GUARD) -> Solution:
    t0 = time.perf_counter()
    comp = _guard(spec, guard)
    best, best_x, count = None, None, 0
    for x in _blocks(comp):
        feas, obj = _score(comp, x)
        count += len(x)
        if not feas.any():
            continue
        masked = np.where(feas, obj, np.iinfo(np.int64).max)
        j = int(np.argmin(masked))
        if best is None or masked[j] < best:
            best, best_x = int(masked[j]), x[j].tolist()
    wall = (time.perf_counter() - t0) * 1000
    if best_x is None:
        return Solution(INFEASIBLE, None, None, None, "brute", nodes=count, wall_ms=wall)
    sol = finish(spec, OPTIMAL, comp.decode(best_x), Fraction(best, comp.den), "brute", nodes=count, wall_ms=wall)
    return sol


def enumerate_optima(spec: ModelSpec, cap: int = 1000, guard: int = GUARD) -> Optima:
    """All optimal assignments in lexicographic order, at most ``cap`` of them."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    comp = _guard(spec, guard)
    best = None
    for x in _blocks(comp):
        feas, obj = _score(comp, x)
        if feas.any():
            m = int(obj[feas].min())
            best = m if best is None else min(best, m)
    out = Optima()
    if best is None:
        out.value = None
        return out
    out.value = Fraction(best, comp.den)
    for x in _blocks(comp):
        feas, obj = _score(comp, x)
        for j in np.flatnonzero(feas & (obj == best)):
            if len(out) == cap:
                out.truncated = True
                return out
            out.append(comp.decode(x[j].tolist()))
    return out


def all_outcomes(spec: ModelSpec, guard: int = GUARD):
    """Yield (assignment vector, imbalance, burdens) for every assignment; test helper."""
    comp = _guard(spec, guard)
    for x in _blocks(comp):
        for row in x.tolist():
            yield row, comp.imbalance_of(row), comp.burdens_of(row)
