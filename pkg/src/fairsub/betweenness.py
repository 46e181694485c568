"""Directed edge betweenness, betweenness classes and per-arc kappa."""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .network import Instance

LOW, MEDIUM, HIGH = "Low", "Medium", "High"

DEFAULT_QUANTILES = (0.6, 0.9)
DEFAULT_CLASS_KAPPAS = (1, 3, 5)


@dataclass(frozen=True)
class BetweennessReport:
    values: Mapping[str, float]
    method: str = "exact"
    samples: int | None = None
    seed: int | None = None
    pivots: tuple[str, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class KappaAssignment:
    kappa: Mapping[str, int]
    classes: Mapping[str, str]
    thresholds: tuple[float, float]
    class_kappas: tuple[int, int, int]

    def mean_kappa(self) -> float:
        return float(np.mean(list(self.kappa.values()))) if self.kappa else 0.0


def _adjacency(inst: Instance, weight: str | None):
    index = {n: i for i, n in enumerate(inst.nodes)}
    out: list[list[tuple[int, int, float]]] = [[] for _ in inst.nodes]
    for k, a in enumerate(inst.arcs):
        if a.is_loop:
            continue  # never on a shortest path
        w = 1.0 if weight is None else float(getattr(a, weight))
        out[index[a.origin]].append((index[a.dest], k, w))
    return out


def _accumulate_unweighted(src: int, out, n_nodes: int, acc: np.ndarray) -> None:
    dist = [-1] * n_nodes
    sigma = [0] * n_nodes
    preds: list[list[tuple[int, int]]] = [[] for _ in range(n_nodes)]
    dist[src], sigma[src] = 0, 1
    order = []
    queue = deque([src])
    while queue:
        v = queue.popleft()
        order.append(v)
        for w, k, _ in out[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
            if dist[w] == dist[v] + 1:
                sigma[w] += sigma[v]
                preds[w].append((v, k))
    delta = [0.0] * n_nodes
    for w in reversed(order):
        coeff = (1.0 + delta[w]) / sigma[w]
        for v, k in preds[w]:
            c = sigma[v] * coeff
            acc[k] += c
            delta[v] += c


def _accumulate_weighted(src: int, out, n_nodes: int, acc: np.ndarray) -> None:
    import heapq

    dist = [math.inf] * n_nodes
    sigma = [0] * n_nodes
    preds: list[list[tuple[int, int]]] = [[] for _ in range(n_nodes)]
    dist[src], sigma[src] = 0.0, 1
    order = []
    done = [False] * n_nodes
    heap = [(0.0, src)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v] or d > dist[v]:
            continue
        done[v] = True
        order.append(v)
        for w, k, wt in out[v]:
            nd = d + wt
            if nd < dist[w] - 1e-12:
                dist[w] = nd
                sigma[w] = sigma[v]
                preds[w] = [(v, k)]
                heapq.heappush(heap, (nd, w))
            elif abs(nd - dist[w]) <= 1e-12:
                sigma[w] += sigma[v]
                preds[w].append((v, k))
    delta = [0.0] * n_nodes
    for w in reversed(order):
        if w == src:
            continue
        coeff = (1.0 + delta[w]) / sigma[w]
        for v, k in preds[w]:
            c = sigma[v] * coeff
            acc[k] += c
            delta[v] += c


def _run(inst: Instance, sources, weight: str | None) -> np.ndarray:
    out = _adjacency(inst, weight)
    acc = np.zeros(len(inst.arcs))
    step = _accumulate_unweighted if weight is None else _accumulate_weighted
    for s in sources:
        step(s, out, len(inst.nodes), acc)
    return acc


def edge_betweenness_exact(inst: Instance, weight: str | None = None) -> BetweennessReport:
    """B(a) = sum over ordered pairs i != j of sigma_ij(a) / sigma_ij.

    Shortest paths count hops unless ``weight`` names an arc attribute
    (e.g. ``"miles"``). Parallel arcs are distinct paths and split the
    credit between them.
    """
    acc = _run(inst, range(len(inst.nodes)), weight)
    values = {a.id: float(v) for a, v in zip(inst.arcs, acc)}
    return BetweennessReport(values, "exact" if weight is None else f"exact:{weight}")


def edge_betweenness_sampled(inst: Instance, samples: int, seed: int, weight: str | None = None) -> BetweennessReport:
    """Pivot-sampled estimate, rescaled by |N| / samples."""
    n = len(inst.nodes)
    if not 1 <= samples <= n:
        raise ValueError(f"samples must be in [1, {n}], got {samples}")
    rng = np.random.default_rng(seed)
    pivots = sorted(int(i) for i in rng.choice(n, size=samples, replace=False))
    acc = _run(inst, pivots, weight) * (n / samples)
    values = {a.id: float(v) for a, v in zip(inst.arcs, acc)}
    return BetweennessReport(values, "sampled", samples, seed, tuple(inst.nodes[i] for i in pivots))


def quantile_thresholds(report: BetweennessReport, q1: float = DEFAULT_QUANTILES[0],
                        q2: float = DEFAULT_QUANTILES[1]) -> tuple[float, float]:
    """Nearest-rank q1/q2 quantiles of the betweenness values."""
    if not 0 < q1 <= q2 < 1:
        raise ValueError(f"need 0 < q1 <= q2 < 1, got {q1}, {q2}")
    vals = sorted(report.values.values())
    if not vals:
        raise ValueError("empty betweenness report")

    def rank(q):
        r = math.ceil(Fraction(str(q)) * len(vals))
        return vals[max(r, 1) - 1]

    return rank(q1), rank(q2)


def classify(value: float, thresholds: tuple[float, float]) -> str:
    t1, t2 = thresholds
    if value >= t2:
        return HIGH
    if value >= t1:
        return MEDIUM
    return LOW


def assign_kappa(report: BetweennessReport, thresholds: tuple[float, float],
                 class_kappas: tuple[int, int, int] = DEFAULT_CLASS_KAPPAS) -> KappaAssignment:
    lo, med, hi = class_kappas
    if not 1 <= lo <= med <= hi:
        raise ValueError(f"class kappas must be nondecreasing and >= 1, got {class_kappas}")
    if thresholds[0] > thresholds[1]:
        raise ValueError("tau1 must not exceed tau2")
    by_class = {LOW: lo, MEDIUM: med, HIGH: hi}
    classes = {a: classify(b, thresholds) for a, b in report.values.items()}
    kappa = {a: by_class[c] for a, c in classes.items()}
    return KappaAssignment(kappa, classes, tuple(thresholds), (lo, med, hi))


def static_kappa(inst: Instance, k: int) -> KappaAssignment:
    if k < 1:
        raise ValueError("kappa must be >= 1")
    return KappaAssignment({a.id: k for a in inst.arcs}, {a.id: MEDIUM for a in inst.arcs}, (0.0, 0.0), (k, k, k))


def dynamic_kappa(inst: Instance, quantiles=DEFAULT_QUANTILES, class_kappas=DEFAULT_CLASS_KAPPAS,
                  samples: int | None = None, seed: int = 0) -> tuple[BetweennessReport, KappaAssignment]:
    if samples is None or samples >= len(inst.nodes):
        report = edge_betweenness_exact(inst)
    else:
        report = edge_betweenness_sampled(inst, samples, seed)
    return report, assign_kappa(report, quantile_thresholds(report, *quantiles), class_kappas)


def report_csv(report: BetweennessReport, kappas: KappaAssignment | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["arc_id", "betweenness", "class", "kappa"])
    for a, b in report.values.items():
        cls = kappas.classes[a] if kappas else ""
        k = kappas.kappa[a] if kappas else ""
        w.writerow([a, repr(round(b, 12)), cls, k])
    return buf.getvalue()
