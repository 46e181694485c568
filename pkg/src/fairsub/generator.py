"""Seeded synthetic instances and reference-solution pools.

An instance class fixes a lane network (recurring origin-destination pairs
with their own distance, typical volume, departure time and habitual
equipment per size class). Each generated instance is one "week" of arcs
drawn on those lanes, so a pool of weekly instances shows the scorer the
same lanes again and again, the way a historical record would.

Attribute ranges: volume in [1, 100], miles log-uniform in [10, 2000],
time of day in [0, 24), time of week in [0, 168). Size class comes from the
volume terciles of the uniform [1, 100] range.
"""
from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import compat
from .models import build_stage1, build_stage2_efficient
from .network import Arc, Instance, initial_imbalance

SIZE_CLASSES = ("S", "M", "L")
VOLUME_TERCILES = (1 + 99 / 3, 1 + 2 * 99 / 3)


@dataclass(frozen=True)
class ClassParams:
    schedulers: int = 3
    nodes: int = 30
    arcs: int = 300
    resources: int = 5
    imbalance_band: tuple[int, int] | None = None
    collaboration: float = 0.1
    seed: int = 0
    habit: float = 0.7  # chance an arc carries its lane's habitual equipment
    lanes: int | None = None  # default max(nodes, arcs // 3)
    matrix_path: str | None = None  # CSV; None = built-in 14-type matrix
    max_retries: int = 50
    name: str = ""

    def __post_init__(self):
        for f in ("schedulers", "nodes", "arcs", "resources"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if not 0 <= self.collaboration <= 1:
            raise ValueError("collaboration ratio must lie in [0, 1]")
        if self.schedulers > self.nodes:
            raise ValueError("need at least one node per scheduler")
        if self.imbalance_band is not None:
            lo, hi = self.imbalance_band
            if lo > hi:
                raise ValueError("imbalance band is empty")
            object.__setattr__(self, "imbalance_band", (int(lo), int(hi)))

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["imbalance_band"] is not None:
            d["imbalance_band"] = list(d["imbalance_band"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ClassParams":
        d = dict(d)
        if d.get("imbalance_band") is not None:
            d["imbalance_band"] = tuple(d["imbalance_band"])
        return cls(**d)


# Desk-scale growth ladder: arcs / 50, nodes / 5, equipment capped at the 14-type matrix.
_TABLE1 = [(2, 167, 138992, 13), (5, 356, 509557, 16), (8, 536, 893028, 17), (11, 612, 1278907, 18),
           (15, 709, 1816934, 19), (20, 974, 3004375, 20), (30, 1296, 5259231, 22), (40, 1588, 8341357, 23)]
DESK_LADDER = {
    k + 1: ClassParams(schedulers=s, nodes=round(n / 5), arcs=round(a / 50), resources=min(e, 14),
                       seed=k + 1, name=f"desk-{k + 1}")
    for k, (s, n, a, e) in enumerate(_TABLE1)
}


class BandError(RuntimeError):
    """The requested initial-imbalance band was not reached within the retry budget."""


def _matrix(params: ClassParams) -> compat.CompatMatrix:
    m = compat.builtin_matrix() if params.matrix_path is None else \
        compat.load_matrix_csv(Path(params.matrix_path).read_text())
    if params.resources > len(m.resources):
        raise ValueError(f"{params.resources} resources requested but the matrix has {len(m.resources)}")
    return m.restrict(m.resources[: params.resources])


def size_class(volume: float) -> str:
    if volume <= VOLUME_TERCILES[0]:
        return "S"
    if volume <= VOLUME_TERCILES[1]:
        return "M"
    return "L"


def _size_groups(resources) -> dict[str, list[str]]:
    parts = np.array_split(np.arange(len(resources)), 3)
    groups = {}
    for c, idx in zip(SIZE_CLASSES, parts):
        groups[c] = [resources[i] for i in idx] or list(resources)
    return groups


def _blocks(params: ClassParams) -> list[list[str]]:
    nodes = [f"n{i + 1}" for i in range(params.nodes)]
    return [list(map(str, b)) for b in np.array_split(nodes, params.schedulers)]


@dataclass
class _Lane:
    origin: str
    dest: str
    cross: bool
    miles: float
    volume: float
    tod: float
    habit: dict = field(default_factory=dict)


def _lanes(params: ClassParams, groups) -> list[_Lane]:
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, 0x1A4E]))
    blocks = _blocks(params)
    n_lanes = params.lanes or max(params.nodes, params.arcs // 3)
    n_cross = round(params.collaboration * n_lanes) if params.schedulers > 1 else 0
    if params.collaboration > 0 and params.schedulers > 1:
        n_cross = max(n_cross, 1)
    if params.collaboration < 1:
        n_cross = min(n_cross, n_lanes - 1)
    owner = {n: b for b, block in enumerate(blocks) for n in block}
    all_nodes = [n for b in blocks for n in b]
    multi = [b for b in blocks if len(b) > 1]
    lanes = []
    for k in range(n_lanes):
        cross = k >= n_lanes - n_cross
        if k < len(all_nodes):
            origin = all_nodes[k]  # every node gets an outgoing lane
        else:
            origin = all_nodes[int(rng.integers(len(all_nodes)))]
        home = blocks[owner[origin]]
        if cross:
            pool = [n for n in all_nodes if owner[n] != owner[origin]]
        else:
            pool = [n for n in home if n != origin]
            if not pool:
                if multi and k >= len(all_nodes):
                    block = multi[int(rng.integers(len(multi)))]
                    origin = block[int(rng.integers(len(block)))]
                    pool = [n for n in block if n != origin]
                else:
                    pool = [origin]
        dest = pool[int(rng.integers(len(pool)))]
        miles = float(math.exp(rng.uniform(math.log(10), math.log(2000))))
        lane = _Lane(origin, dest, cross, round(miles, 3), float(rng.uniform(1, 100)), float(rng.uniform(0, 24)))
        for c in SIZE_CLASSES:
            lane.habit[c] = groups[c][int(rng.integers(len(groups[c])))]
        lanes.append(lane)
    return lanes


def _draw(params: ClassParams, lanes, groups, matrix, rng) -> list[Arc]:
    cross_lanes = [ln for ln in lanes if ln.cross]
    home_lanes = [ln for ln in lanes if not ln.cross] or cross_lanes
    n_cross = round(params.collaboration * params.arcs) if cross_lanes else 0
    kinds = [True] * n_cross + [False] * (params.arcs - n_cross)
    arcs = []
    used = {True: 0, False: 0}
    for k, cross in enumerate(kinds):
        pool = cross_lanes if cross else home_lanes
        j = used[cross]
        used[cross] += 1
        lane = pool[j] if j < len(pool) else pool[int(rng.integers(len(pool)))]
        volume = float(np.clip(lane.volume + rng.normal(0, 12), 1, 100))
        sc = size_class(volume)
        tod = float((lane.tod + rng.normal(0, 1)) % 24)
        tow = float(int(rng.integers(7)) * 24 + tod)
        if rng.random() < params.habit:
            initial = lane.habit[sc]
        else:
            g = groups[sc]
            initial = g[int(rng.integers(len(g)))]
        arcs.append(Arc(
            id=f"a{k + 1}", origin=lane.origin, dest=lane.dest,
            candidates=compat.sorted_candidates(matrix, initial), initial=initial,
            volume=round(volume, 3), tod=round(tod, 4) % 24, tow=round(tow, 4) % 168,
            miles=lane.miles, size_class=sc,
        ))
    return arcs


def generate_instance(params: ClassParams, index: int = 0, salt: int = 0) -> Instance:
    """One seeded instance of the class; ``index`` picks the week, ``salt`` the pool."""
    matrix = _matrix(params)
    groups = _size_groups(matrix.resources)
    lanes = _lanes(params, groups)
    blocks = _blocks(params)
    schedulers = {f"s{b + 1}": tuple(block) for b, block in enumerate(blocks)}
    nodes = tuple(n for b in blocks for n in b)
    seen = []
    for attempt in range(params.max_retries):
        rng = np.random.default_rng(np.random.SeedSequence([params.seed, salt, index, attempt]))
        arcs = _draw(params, lanes, groups, matrix, rng)
        meta = {"class": params.name, "seed": params.seed, "index": index, "salt": salt, "attempt": attempt}
        inst = Instance(nodes, matrix.resources, schedulers, tuple(arcs), meta)
        i0 = initial_imbalance(inst)
        seen.append(i0)
        band = params.imbalance_band
        if band is None or band[0] <= i0 <= band[1]:
            return Instance(nodes, matrix.resources, schedulers, tuple(arcs), {**meta, "I0": i0})
    raise BandError(f"I0 band {params.imbalance_band} unreachable in {params.max_retries} tries; "
                    f"achieved range [{min(seen)}, {max(seen)}]")


def collaboration_share(inst: Instance) -> float:
    if not inst.arcs:
        return 0.0
    cross = sum(1 for a in inst.arcs if inst.owner(a.origin) != inst.owner(a.dest))
    return cross / len(inst.arcs)


# ---------------------------------------------------------------------------
# reference pools

def reference_solutions(inst: Instance, alternates: int = 1, limits=None) -> list[dict[str, str]]:
    """Stage 1 + efficient Stage 2 optima of ``inst`` (up to ``alternates`` of them).

    Alternates come from exhaustive enumeration, so instances whose search
    space exceeds the brute-force guard contribute their single exact optimum.
    """
    from .solver import GUARD, OPTIMAL, enumerate_optima, search_space, solve_exact

    s1 = solve_exact(build_stage1(inst), limits)
    if s1.status != OPTIMAL:
        raise RuntimeError(f"stage 1 not solved to optimality ({s1.status})")
    spec = build_stage2_efficient(inst, None, int(s1.value))
    if alternates > 1 and search_space(spec) <= GUARD:
        return list(enumerate_optima(spec, cap=alternates))
    s2 = solve_exact(spec, limits)
    if s2.status != OPTIMAL:
        raise RuntimeError(f"stage 2 not solved to optimality ({s2.status})")
    return [s2.assignment]


def generate_reference_pool(params_list, pool_size: int, seed: int = 0, alternates: int = 1,
                            limits=None) -> list[tuple[Instance, dict[str, str]]]:
    """``pool_size`` weekly instances per class, each with its exact reference optimum(s)."""
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    if isinstance(params_list, ClassParams):
        params_list = [params_list]
    pool = []
    for params in params_list:
        for week in range(pool_size):
            inst = generate_instance(params, index=week, salt=seed)
            for phi in reference_solutions(inst, alternates, limits):
                pool.append((inst, phi))
    return pool


def manifest_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance_file", "seed", "I0", "class"])
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# small random instances for oracle suites

def random_small_instance(seed: int, max_arcs: int = 10, max_resources: int = 4, max_schedulers: int = 3,
                          max_nodes: int = 6) -> Instance:
    """Unstructured tiny instance: random arcs, random candidate subsets."""
    rng = random.Random(seed)
    nn = rng.randint(2, max_nodes)
    ns = rng.randint(1, min(max_schedulers, nn))
    nr = rng.randint(1, max_resources)
    na = rng.randint(1, max_arcs)
    nodes = [f"n{i + 1}" for i in range(nn)]
    res = [f"r{i + 1}" for i in range(nr)]
    owner = list(range(ns)) + [rng.randrange(ns) for _ in range(nn - ns)]
    rng.shuffle(owner)
    scheds = {f"s{j + 1}": tuple(n for n, o in zip(nodes, owner) if o == j) for j in range(ns)}
    arcs = []
    for k in range(na):
        o, d = rng.choice(nodes), rng.choice(nodes)
        cands = rng.sample(res, rng.randint(1, nr))
        arcs.append(Arc(f"a{k + 1}", o, d, tuple(cands), rng.choice(cands)))
    return Instance(tuple(nodes), tuple(res), scheds, tuple(arcs), {"seed": seed})


def desk_params(seed: int, resources: int = 5, schedulers: int = 3, nodes: int = 9, arcs: int = 18,
                collaboration: float = 0.3) -> ClassParams:
    return ClassParams(schedulers=schedulers, nodes=nodes, arcs=arcs, resources=resources,
                       collaboration=collaboration, seed=seed, lanes=max(nodes, arcs // 2), name="desk-mini")


def example1_instance() -> Instance:
    """Three schedulers with three nodes each where the efficient plan loads one scheduler.

    Four independent triangles carry an imbalance of 4 each. Every triangle
    is repaired either by one change on an arc owned by s2 or by two changes
    on arcs owned by s1 (first two triangles) or s3 (last two). The
    change-minimal repair is therefore 4 changes, all on s2; any repair with
    worst burden 2 must split them 2/2/2.
    """
    triangles = [
        # (s2-owned arc, neighbour-owned arcs, wrong resource, right resource)
        (("n4", "n1"), (("n1", "n2"), ("n2", "n4")), "r1", "r2"),
        (("n6", "n3"), (("n3", "n1"), ("n1", "n6")), "r3", "r4"),
        (("n4", "n7"), (("n7", "n8"), ("n8", "n4")), "r5", "r6"),
        (("n5", "n9"), (("n9", "n7"), ("n7", "n5")), "r3", "r4"),
    ]
    arcs = []
    for (o, d), rest, wrong, right in triangles:
        pair = (wrong, right)
        arcs.append(Arc(f"a{len(arcs) + 1}", o, d, pair, wrong))
        for o2, d2 in rest:
            arcs.append(Arc(f"a{len(arcs) + 1}", o2, d2, pair, right))
    scheds = {"s1": ("n1", "n2", "n3"), "s2": ("n4", "n5", "n6"), "s3": ("n7", "n8", "n9")}
    nodes = tuple(f"n{i}" for i in range(1, 10))
    res = tuple(f"r{i}" for i in range(1, 7))
    return Instance(nodes, res, scheds, tuple(arcs), {"name": "E1"})
