"""Depth-first branch-and-bound over assignment space.

Bounds
------
Imbalance is bounded node by node: each node is completed in its own best
case, ignoring that an arc must take the same resource at both ends. A
node's best case is its degree minus twice a maximum matching of in-arcs to
out-arcs with intersecting allowed resources, so the bound is exact at
leaves.

The same matchings, costed by how many arcs leave their initial resource,
give Stage 2 a bound on the changes still needed to reach the cap I*. The
objectives combine that count with committed changes, a water-filling bound
on ``Z`` and an interval-gap bound on the pairwise burden term.
"""
from __future__ import annotations

import time
from fractions import Fraction
from typing import Callable, Mapping

from ..models import STAGE1, Compiled, ModelSpec
from .core import INFEASIBLE, LIMIT_REACHED, OPTIMAL, FEASIBLE, SolveLimits, Solution, finish


class _Abort(Exception):
    pass


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _bump(counter: dict[int, int], key: int, by: int) -> None:
    v = counter.get(key, 0) + by
    if v:
        counter[key] = v
    else:
        del counter[key]


def _pair_cost(g_in, g_out) -> int | None:
    """Fewest arcs moved off their resource to pair an in-arc group with an out-arc group."""
    (mi, ri), (mo, ro) = g_in, g_out
    if not mi & mo:
        return None
    if ri == ro:
        return 0
    if (mo >> ri) & 1 or (mi >> ro) & 1:
        return 1
    return 2


def _node_profile(ins, outs) -> tuple[int, ...]:
    """Marginal change costs of successive in/out pairings at one node.

    ``ins``/``outs`` are ((allowed mask, resource kept when unchanged), count)
    groups. The result lists, for a maximum matching built by successive
    shortest paths, the extra cost of each added pair; it is nondecreasing
    and its length is the maximum matching size.
    """
    if not ins or not outs:
        return ()
    ni, no = len(ins), len(outs)
    cost = [[_pair_cost(gi, go) for go, _ in outs] for gi, _ in ins]
    cap_in = [c for _, c in ins]
    cap_out = [c for _, c in outs]
    flow = [[0] * no for _ in range(ni)]
    profile: list[int] = []
    while True:
        # Bellman-Ford from the source over in-groups (index i) and out-groups (ni + j)
        INF = 1 << 30
        dist = [INF] * (ni + no)
        prev = [-1] * (ni + no)
        for i in range(ni):
            if cap_in[i]:
                dist[i] = 0
        for _ in range(ni + no):
            changed = False
            for i in range(ni):
                di = dist[i]
                if di == INF:
                    continue
                row = cost[i]
                for j in range(no):
                    cij = row[j]
                    if cij is not None and di + cij < dist[ni + j]:
                        dist[ni + j] = di + cij
                        prev[ni + j] = i
                        changed = True
            for j in range(no):
                dj = dist[ni + j]
                if dj == INF:
                    continue
                for i in range(ni):
                    if flow[i][j] and dj - cost[i][j] < dist[i]:
                        dist[i] = dj - cost[i][j]
                        prev[i] = ni + j
                        changed = True
            if not changed:
                break
        best, end = INF, -1
        for j in range(no):
            if cap_out[j] and dist[ni + j] < best:
                best, end = dist[ni + j], j
        if end < 0:
            return tuple(profile)
        # bottleneck along the path
        units = cap_out[end]
        v = ni + end
        while True:
            i = prev[v]
            if prev[i] < 0:
                units = min(units, cap_in[i])
                break
            units = min(units, flow[i][prev[i] - ni])
            v = prev[i]
        v = ni + end
        cap_out[end] -= units
        while True:
            i = prev[v]
            flow[i][v - ni] += units
            if prev[i] < 0:
                cap_in[i] -= units
                break
            flow[i][prev[i] - ni] -= units
            v = prev[i]
        profile.extend([best] * units)


def _closing_order(c: Compiled) -> list[int]:
    """Branching order that completes nodes early, so their bounds turn exact.

    Repeatedly pick the node with the fewest open branching arcs (ties by node
    index) and queue those arcs, widest candidate set first.
    """
    open_arcs: list[set[int]] = [set() for _ in range(c.n_nodes)]
    for i in range(c.n_arcs):
        if len(c.cands[i]) > 1:
            open_arcs[c.origin[i]].add(i)
            open_arcs[c.dest[i]].add(i)
    order: list[int] = []
    while True:
        live = [k for k in range(c.n_nodes) if open_arcs[k]]
        if not live:
            return order
        k = min(live, key=lambda n: (len(open_arcs[n]), n))
        batch = sorted(open_arcs[k], key=lambda i: (-len(c.cands[i]), i))
        order.extend(batch)
        for i in batch:
            open_arcs[c.origin[i]].discard(i)
            open_arcs[c.dest[i]].discard(i)


class _Search:
    def __init__(self, comp: Compiled, probs: Mapping[str, Mapping[str, float]] | None):
        self.comp = comp
        c = comp
        n, R = c.n_nodes, c.n_res
        self.stage2 = c.kind != STAGE1
        # per node: multiset of (allowed mask, unchanged resource) over incident non-loop arcs;
        # a fixed arc has a one-bit mask and counts as unchanged at its fixed resource
        self.ins: list[dict[tuple, int]] = [{} for _ in range(n)]
        self.outs: list[dict[tuple, int]] = [{} for _ in range(n)]
        self.deg = [0] * n
        self.full_mask = [sum(1 << r for r in cs) for cs in c.cands]
        for i in range(c.n_arcs):
            o, d = c.origin[i], c.dest[i]
            if o == d:
                continue
            g = (self.full_mask[i], c.init[i])
            self.deg[o] += 1
            self.deg[d] += 1
            _bump(self.outs[o], g, 1)
            _bump(self.ins[d], g, 1)
        self.deg_sum = sum(self.deg)
        self._cache: dict[tuple, tuple[int, ...]] = {}
        self.profile = [self._profile(k) for k in range(n)]
        self.node_lb = [self.deg[k] - 2 * len(self.profile[k]) for k in range(n)]
        self.lb_sum = sum(self.node_lb)
        self.hist: dict[int, int] = {}  # marginal pairing cost -> count over all nodes
        for prof in self.profile:
            for v in prof:
                self.hist[v] = self.hist.get(v, 0) + 1
        # Stage 2 bookkeeping; "keep" = every free arc left on its initial resource
        self.keep = [[0] * R for _ in range(n)]
        for i in range(c.n_arcs):
            o, d, r = c.origin[i], c.dest[i], c.init[i]
            self.keep[o][r] -= 1
            self.keep[d][r] += 1
        self.i_keep = sum(abs(v) for row in self.keep for v in row)
        self.burden = [0] * c.n_sched
        self.flex = [0] * c.n_sched
        for i in range(c.n_arcs):
            if len(c.cands[i]) > 1:
                self.flex[c.sched[i]] += 1
        self.changes = 0
        self.x = [-1] * c.n_arcs

        # child order per arc: initial resource first, then scorer or resource order
        self.children = []
        for i, aid in enumerate(c.arc_ids):
            cs = list(c.cands[i])
            if probs is not None and aid in probs:
                p = probs[aid]
                cs.sort(key=lambda r: (-p.get(c.resources[r], 0.0), r))
            cs.sort(key=lambda r: r != c.init[i])
            self.children.append(tuple(cs))

        branching = _closing_order(c)
        self.forced = [i for i in range(c.n_arcs) if len(c.cands[i]) == 1]
        self.order = branching
        # interchangeable arcs: same endpoints, candidates and initial resource
        last: dict[tuple, int] = {}
        self.sym_prev = []
        for i in branching:
            key = (c.origin[i], c.dest[i], c.cands[i], c.init[i])
            self.sym_prev.append(last.get(key, -1))
            last[key] = i

    # -- bounds -----------------------------------------------------------
    def _profile(self, k: int) -> tuple[int, ...]:
        key = (tuple(sorted(self.ins[k].items())), tuple(sorted(self.outs[k].items())))
        prof = self._cache.get(key)
        if prof is None:
            prof = _node_profile(key[0], key[1])
            if len(self._cache) > 200_000:
                self._cache.clear()
            self._cache[key] = prof
        return prof

    def _refresh(self, k: int) -> None:
        old = self.profile[k]
        new = self._profile(k)
        if new is old:
            return
        hist = self.hist
        for v in old:
            hist[v] -= 1
        for v in new:
            hist[v] = hist.get(v, 0) + 1
        self.profile[k] = new
        lb = self.deg[k] - 2 * len(new)
        self.lb_sum += lb - self.node_lb[k]
        self.node_lb[k] = lb

    def extra_changes(self) -> int:
        """Free-arc changes any completion needs to get the imbalance down to I*.

        Node k ends with imbalance deg_k - 2 * (pairs formed at k), so at least
        ceil((sum deg - I*) / 2) pairs are needed overall. Taking the cheapest
        marginal pair costs across nodes bounds the changed-arc endpoints; each
        changed arc has two endpoints.
        """
        need = _ceil_div(self.deg_sum - self.comp.istar, 2)
        spent = 0
        if need > 0:
            for v in sorted(self.hist):
                cnt = self.hist[v]
                if not cnt:
                    continue
                take = min(cnt, need)
                spent += take * v
                need -= take
                if not need:
                    break
        return max(_ceil_div(spent, 2), _ceil_div(self.i_keep - self.comp.istar, 4), 0)

    def objective_lb(self) -> int | None:
        """Lower bound on den*objective of any completion, or None if none is feasible."""
        c = self.comp
        if not self.stage2:
            return self.lb_sum
        if self.lb_sum > c.istar:
            return None
        extra = self.extra_changes()
        total = self.changes + extra
        b, flex = self.burden, self.flex
        cap = sum(b) + sum(flex)
        if total > cap:
            return None
        val = c.w_changes * total
        if c.w_max:
            z = max(b)
            if total > sum(b):
                # smallest level L with sum_s min(b_s + flex_s, max(b_s, L)) >= total
                z = max(z, _ceil_div(total, c.n_sched))
                while sum(min(bs + fs, max(bs, z)) for bs, fs in zip(b, flex)) < total:
                    z += 1
            val += c.w_max * z
        if c.w_pairs:
            gap = 0
            s = len(b)
            for u in range(s):
                lo_u, hi_u = b[u], b[u] + flex[u]
                for v in range(u + 1, s):
                    lo_v, hi_v = b[v], b[v] + flex[v]
                    if lo_u > hi_v:
                        gap += lo_u - hi_v
                    elif lo_v > hi_u:
                        gap += lo_v - hi_u
            val += c.w_pairs * gap
        return val

    # -- moves ------------------------------------------------------------
    def fix(self, i: int, r: int) -> None:
        c = self.comp
        o, d = c.origin[i], c.dest[i]
        self.x[i] = r
        if o != d:
            g_free, g_fixed = (self.full_mask[i], c.init[i]), (1 << r, r)
            if g_free != g_fixed:
                _bump(self.outs[o], g_free, -1)
                _bump(self.outs[o], g_fixed, 1)
                _bump(self.ins[d], g_free, -1)
                _bump(self.ins[d], g_fixed, 1)
                self._refresh(o)
                self._refresh(d)
        if len(c.cands[i]) > 1:
            self.flex[c.sched[i]] -= 1
        r0 = c.init[i]
        if r != r0:
            self.burden[c.sched[i]] += 1
            self.changes += 1
            if o != d:
                self._shift_keep(o, d, r0, r)

    def unfix(self, i: int) -> None:
        c = self.comp
        o, d = c.origin[i], c.dest[i]
        r = self.x[i]
        self.x[i] = -1
        if o != d:
            g_free, g_fixed = (self.full_mask[i], c.init[i]), (1 << r, r)
            if g_free != g_fixed:
                _bump(self.outs[o], g_fixed, -1)
                _bump(self.outs[o], g_free, 1)
                _bump(self.ins[d], g_fixed, -1)
                _bump(self.ins[d], g_free, 1)
                self._refresh(o)
                self._refresh(d)
        if len(c.cands[i]) > 1:
            self.flex[c.sched[i]] += 1
        r0 = c.init[i]
        if r != r0:
            self.burden[c.sched[i]] -= 1
            self.changes -= 1
            if o != d:
                self._shift_keep(o, d, r, r0)

    def _shift_keep(self, o: int, d: int, src: int, dst: int) -> None:
        k = self.keep
        before = abs(k[o][src]) + abs(k[o][dst]) + abs(k[d][src]) + abs(k[d][dst])
        k[o][src] += 1
        k[o][dst] -= 1
        k[d][src] -= 1
        k[d][dst] += 1
        after = abs(k[o][src]) + abs(k[o][dst]) + abs(k[d][src]) + abs(k[d][dst])
        self.i_keep += after - before

    def leaf_value(self) -> int | None:
        c = self.comp
        imb = self.lb_sum  # exact once every arc is fixed
        if not self.stage2:
            return imb
        if imb > c.istar:
            return None
        return c.scaled(imb, self.burden)


def solve_exact(spec: ModelSpec, limits: SolveLimits | None = None,
                probs: Mapping[str, Mapping[str, float]] | None = None,
                warm_start: Mapping[str, str] | None = None,
                observer: Callable[[list[int], int | None], None] | None = None,
                heuristic: bool = True) -> Solution:
    """Branch-and-bound to proven optimality or until a limit is hit.

    ``probs`` (arc -> resource -> probability) reorders children by predicted
    probability; ``warm_start`` seeds the incumbent (by default a short
    iterated local search supplies one); ``observer`` is called with the
    partial assignment vector and its bound at every search node.
    """
    limits = limits or SolveLimits()
    t0 = time.perf_counter()
    comp = spec.compile()
    st = _Search(comp, probs)
    gap_scaled = int(limits.gap * comp.den)

    inc_val, inc_x = None, None
    trace = []

    def offer(x, val):
        nonlocal inc_val, inc_x
        if val is not None and (inc_val is None or val < inc_val):
            inc_val, inc_x = val, list(x)
            trace.append((nodes, inc_val))

    nodes = 0
    x0 = list(comp.init)
    imb0 = comp.imbalance_of(x0)
    if not st.stage2:
        offer(x0, imb0)
    elif imb0 <= comp.istar:
        offer(x0, comp.scaled(imb0, [0] * comp.n_sched))
    if warm_start is None and heuristic and any(len(cs) > 1 for cs in comp.cands):
        from .ils import ILSParams, solve_ils
        quick = solve_ils(spec, seed=0, params=ILSParams(iters=8, max_rounds=200))
        warm_start = quick.assignment
    if warm_start is not None:
        xw = comp.encode(warm_start)
        if all(r in cs for r, cs in zip(xw, comp.cands)):
            imb = comp.imbalance_of(xw)
            if not st.stage2:
                offer(xw, imb)
            elif imb <= comp.istar:
                offer(xw, comp.scaled(imb, comp.burdens_of(xw)))

    for i in st.forced:
        st.fix(i, comp.cands[i][0])
    root_lb = st.objective_lb()
    order, sym_prev, children = st.order, st.sym_prev, st.children
    depth_max = len(order)
    deadline = None if limits.time_limit is None else t0 + limits.time_limit
    node_limit = limits.node_limit
    x = st.x

    def dfs(depth: int) -> None:
        nonlocal nodes
        nodes += 1
        if node_limit is not None and nodes > node_limit:
            raise _Abort
        if deadline is not None and (nodes & 255) == 0 and time.perf_counter() > deadline:
            raise _Abort
        if depth == depth_max:
            val = st.leaf_value()
            if observer is not None:
                observer(list(x), val)
            offer(x, val)
            return
        lb = st.objective_lb()
        if observer is not None:
            observer(list(x), lb)
        if lb is None or (inc_val is not None and lb + gap_scaled >= inc_val):
            return
        i = order[depth]
        prev = sym_prev[depth]
        floor = x[prev] if prev >= 0 else -1
        for r in children[i]:
            if r < floor:
                continue
            st.fix(i, r)
            dfs(depth + 1)
            st.unfix(i)

    status = OPTIMAL
    if deadline is not None and limits.time_limit == 0:
        status = LIMIT_REACHED
    elif root_lb is not None:
        try:
            dfs(0)
        except _Abort:
            status = LIMIT_REACHED
    wall = (time.perf_counter() - t0) * 1000

    if status == OPTIMAL:
        if inc_x is None:
            return Solution(INFEASIBLE, None, None, None, "exact", nodes=nodes, wall_ms=wall, trace=trace)
        bound = Fraction(inc_val, comp.den)
        if gap_scaled:
            bound = Fraction(max(root_lb, inc_val - gap_scaled), comp.den)
            if bound < Fraction(inc_val, comp.den):
                status = FEASIBLE
        return finish(spec, status, comp.decode(inc_x), bound, "exact", nodes=nodes, wall_ms=wall, trace=trace)
    bound = None if root_lb is None else Fraction(root_lb, comp.den)
    phi = None if inc_x is None else comp.decode(inc_x)
    if bound is not None and inc_val is not None:
        bound = min(bound, Fraction(inc_val, comp.den))
    return finish(spec, LIMIT_REACHED, phi, bound, "exact", nodes=nodes, wall_ms=wall, trace=trace)


def root_bound(spec: ModelSpec) -> Fraction | None:
    """The bound at the root of the search tree (None when trivially infeasible)."""
    comp = spec.compile()
    st = _Search(comp, None)
    for i in st.forced:
        st.fix(i, comp.cands[i][0])
    lb = st.objective_lb()
    return None if lb is None else Fraction(lb, comp.den)
