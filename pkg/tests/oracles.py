"""Independent reference computations used only by the tests."""
from collections import deque
from itertools import combinations

from fairsub.network import Arc, Instance


def path_count_betweenness(inst: Instance) -> dict[str, float]:
    """All-pairs shortest-path enumeration: BFS distances, then explicit path lists."""
    out = {n: [] for n in inst.nodes}
    for a in inst.arcs:
        out[a.origin].append(a)
    values = {a.id: 0.0 for a in inst.arcs}
    for s in inst.nodes:
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for a in out[u]:
                if a.dest not in dist:
                    dist[a.dest] = dist[u] + 1
                    q.append(a.dest)
        # every shortest path from s, as a list of arc ids, grouped by endpoint
        paths = {s: [[]]}
        for u in sorted(dist, key=dist.get):
            for a in out[u]:
                if a.dest != u and dist.get(a.dest) == dist[u] + 1:
                    paths.setdefault(a.dest, []).extend(p + [a.id] for p in paths[u])
        for t, plist in paths.items():
            if t == s:
                continue
            for p in plist:
                for aid in p:
                    values[aid] += 1.0 / len(plist)
    return values


def digraph(nodes: int, edges) -> Instance:
    names = tuple(f"n{i + 1}" for i in range(nodes))
    arcs = tuple(Arc(f"a{k + 1}", names[u], names[v], ("r1",), "r1") for k, (u, v) in enumerate(edges))
    return Instance(names, ("r1",), {"s1": names}, arcs)


def gini_direct(vals) -> float:
    """Ordered-pair mean absolute difference over twice the mean, in floating point."""
    n = len(vals)
    total = sum(vals)
    if total == 0:
        return 0.0
    return sum(abs(u - v) for u in vals for v in vals) / (2 * n * total)


def pairwise(vals) -> int:
    return sum(abs(u - v) for u, v in combinations(vals, 2))
