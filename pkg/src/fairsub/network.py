"""Task network, resource assignments and imbalance/burden accounting.

Every optimization model and analytic in the package reads its numbers from
the functions here, so they are the single source of truth for ``I``,
``Delta``, ``B_s`` and ``Z``.
"""
from __future__ import annotations

import json
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import IO, Union

Assignment = Mapping[str, str]

_TOKEN = re.compile(r"\d+|\D+")


def natural_key(ident: str) -> tuple:
    """Sort key that orders ``r2`` before ``r10``."""
    return tuple((0, int(t), "") if t.isdigit() else (1, 0, t) for t in _TOKEN.findall(ident))


class InstanceError(ValueError):
    """Raised when an instance violates one of its structural invariants."""


class InstanceParseError(InstanceError):
    """Raised when an instance file cannot be decoded into the expected shape."""


@dataclass(frozen=True)
class Arc:
    id: str
    origin: str
    dest: str
    candidates: tuple[str, ...]
    initial: str
    volume: float = 0.0
    tod: float = 0.0
    tow: float = 0.0
    miles: float = 0.0
    size_class: str = "M"

    @property
    def is_loop(self) -> bool:
        return self.origin == self.dest


@dataclass(frozen=True)
class Instance:
    """A directed task network with an initial resource assignment.

    ``arcs`` is kept sorted by natural arc id, ``resources`` and every arc's
    ``candidates`` by natural resource id, so iteration order is stable.
    """

    nodes: tuple[str, ...]
    resources: tuple[str, ...]
    schedulers: Mapping[str, tuple[str, ...]]
    arcs: tuple[Arc, ...]
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=natural_key)))
        object.__setattr__(self, "resources", tuple(sorted(self.resources, key=natural_key)))
        scheds = {s: tuple(sorted(ns, key=natural_key)) for s, ns in self.schedulers.items()}
        scheds = dict(sorted(scheds.items(), key=lambda kv: natural_key(kv[0])))
        object.__setattr__(self, "schedulers", MappingProxyType(scheds))
        arcs = []
        for a in self.arcs:
            cands = tuple(sorted(set(a.candidates), key=natural_key))
            if cands != a.candidates:
                a = Arc(**{**a.__dict__, "candidates": cands})
            arcs.append(a)
        object.__setattr__(self, "arcs", tuple(sorted(arcs, key=lambda a: natural_key(a.id))))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))
        self._validate()
        node_owner = {n: s for s, ns in scheds.items() for n in ns}
        object.__setattr__(self, "_owner", MappingProxyType(node_owner))
        object.__setattr__(self, "_by_id", MappingProxyType({a.id: a for a in self.arcs}))

    def _validate(self) -> None:
        nodes = set(self.nodes)
        if len(nodes) != len(self.nodes):
            raise InstanceError("duplicate node id")
        resources = set(self.resources)
        if len(resources) != len(self.resources):
            raise InstanceError("duplicate resource id")
        if not self.schedulers:
            raise InstanceError("scheduler partition: no schedulers")
        seen: dict[str, str] = {}
        for s, ns in self.schedulers.items():
            for n in ns:
                if n not in nodes:
                    raise InstanceError(f"scheduler partition: {s} lists unknown node {n!r}")
                if n in seen:
                    raise InstanceError(f"scheduler partition: node {n!r} in both {seen[n]} and {s}")
                seen[n] = s
        missing = nodes - set(seen)
        if missing:
            first = sorted(missing, key=natural_key)[0]
            raise InstanceError(f"scheduler partition: node {first!r} has no scheduler")
        ids = set()
        for a in self.arcs:
            if a.id in ids:
                raise InstanceError(f"duplicate arc id {a.id!r}")
            ids.add(a.id)
            if a.origin not in nodes or a.dest not in nodes:
                raise InstanceError(f"arc {a.id}: endpoint not in node set")
            if not a.candidates:
                raise InstanceError(f"arc {a.id}: empty candidate set")
            bad = [r for r in a.candidates if r not in resources]
            if bad:
                raise InstanceError(f"arc {a.id}: candidate {bad[0]!r} not a resource")
            if a.initial not in a.candidates:
                raise InstanceError(f"arc {a.id}: initial assignment incompatible ({a.initial!r} not in candidates)")

    # lookups -------------------------------------------------------------
    def arc(self, arc_id: str) -> Arc:
        return self._by_id[arc_id]

    @property
    def arc_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.arcs)

    def owner(self, node: str) -> str:
        """Scheduler owning ``node``."""
        return self._owner[node]

    @property
    def initial(self) -> dict[str, str]:
        """The initial assignment Phi_0 as a fresh dict."""
        return {a.id: a.initial for a in self.arcs}

    def full_candidates(self) -> dict[str, tuple[str, ...]]:
        return {a.id: a.candidates for a in self.arcs}

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "schedulers": {s: list(ns) for s, ns in self.schedulers.items()},
            "resources": list(self.resources),
            "arcs": [
                {
                    "id": a.id,
                    "from": a.origin,
                    "to": a.dest,
                    "volume": a.volume,
                    "tod": a.tod,
                    "tow": a.tow,
                    "miles": a.miles,
                    "size_class": a.size_class,
                    "candidates": list(a.candidates),
                    "initial": a.initial,
                }
                for a in self.arcs
            ],
            "meta": dict(self.meta),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False) + "\n"

    def with_initial(self, phi: Assignment) -> "Instance":
        """Copy of the instance whose Phi_0 is ``phi``."""
        arcs = [Arc(**{**a.__dict__, "initial": phi[a.id]}) for a in self.arcs]
        return Instance(self.nodes, self.resources, dict(self.schedulers), tuple(arcs), dict(self.meta))


@dataclass(frozen=True)
class ImbalanceReport:
    per_node: Mapping[tuple[str, str], int]  # (node, resource) -> I_nr, only nonzero cells
    inflow: Mapping[tuple[str, str], int]
    outflow: Mapping[tuple[str, str], int]
    total: int

    def imbalance(self, node: str, resource: str) -> int:
        return self.per_node.get((node, resource), 0)


@dataclass(frozen=True)
class BurdenVector:
    per_scheduler: Mapping[str, int]
    changes: int
    max_burden: int

    def as_list(self) -> list[int]:
        return list(self.per_scheduler.values())


# ---------------------------------------------------------------------------
# loading

_ARC_FIELDS = ("id", "from", "to", "candidates", "initial")


def _arc_from_json(i: int, obj) -> Arc:
    if not isinstance(obj, dict):
        raise InstanceParseError(f"arcs[{i}]: expected object, got {type(obj).__name__}")
    for k in _ARC_FIELDS:
        if k not in obj:
            raise InstanceParseError(f"arcs[{i}]: missing field {k!r}")
    try:
        return Arc(
            id=str(obj["id"]),
            origin=str(obj["from"]),
            dest=str(obj["to"]),
            candidates=tuple(str(r) for r in obj["candidates"]),
            initial=str(obj["initial"]),
            volume=float(obj.get("volume", 0.0)),
            tod=float(obj.get("tod", 0.0)),
            tow=float(obj.get("tow", 0.0)),
            miles=float(obj.get("miles", 0.0)),
            size_class=str(obj.get("size_class", "M")),
        )
    except (TypeError, ValueError) as exc:
        raise InstanceParseError(f"arcs[{i}] (id={obj.get('id')!r}): {exc}") from None


def instance_from_dict(data) -> Instance:
    if not isinstance(data, dict):
        raise InstanceParseError("top level: expected a JSON object")
    for k in ("nodes", "schedulers", "resources", "arcs"):
        if k not in data:
            raise InstanceParseError(f"top level: missing key {k!r}")
    if not isinstance(data["schedulers"], dict):
        raise InstanceParseError("schedulers: expected an object mapping id -> node list")
    arcs = tuple(_arc_from_json(i, a) for i, a in enumerate(data["arcs"]))
    for a in arcs:
        for field_name, lo, hi in (("volume", 0, None), ("tod", 0, 24), ("tow", 0, 168), ("miles", 0, None)):
            v = getattr(a, field_name)
            if v < lo or (hi is not None and v >= hi):
                raise InstanceParseError(f"arc {a.id}: {field_name}={v} outside its domain")
    return Instance(
        nodes=tuple(str(n) for n in data["nodes"]),
        resources=tuple(str(r) for r in data["resources"]),
        schedulers={str(s): tuple(str(n) for n in ns) for s, ns in data["schedulers"].items()},
        arcs=arcs,
        meta=data.get("meta", {}) or {},
    )


def load_instance(source: Union[bytes, str, IO, Path]) -> Instance:
    """Parse and validate an instance from bytes, a binary/text stream or a path."""
    if isinstance(source, Path):
        raw = source.read_bytes()
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    elif isinstance(source, str):
        raw = source.encode("utf-8")
    else:
        raw = source.read()
        if isinstance(raw, str):
            raw = raw.encode("utf-8")
    try:
        data = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise InstanceParseError(f"not UTF-8: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return instance_from_dict(data)


def read_instance(path) -> Instance:
    return load_instance(Path(path))


def load_assignment(source) -> dict[str, str]:
    if isinstance(source, (str, Path)) and Path(source).exists():
        source = Path(source).read_text(encoding="utf-8")
    elif hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    data = json.loads(source)
    if "assignment" in data and isinstance(data["assignment"], dict):
        data = data["assignment"]
    return {str(k): str(v) for k, v in data.items()}


def dump_assignment(phi: Assignment) -> str:
    return json.dumps({k: phi[k] for k in sorted(phi, key=natural_key)}, indent=1) + "\n"


def check_assignment(inst: Instance, phi: Assignment, candidates: Mapping[str, Iterable[str]] | None = None) -> None:
    """Raise ``KeyError``/``ValueError`` unless ``phi`` is total and within candidates."""
    for a in inst.arcs:
        if a.id not in phi:
            raise KeyError(f"assignment missing arc {a.id!r}")
        allowed = a.candidates if candidates is None else candidates[a.id]
        if phi[a.id] not in allowed:
            raise ValueError(f"arc {a.id}: resource {phi[a.id]!r} outside its candidate set")


# ---------------------------------------------------------------------------
# accounting

def total_imbalance(inst: Instance, phi: Assignment) -> ImbalanceReport:
    inflow: dict[tuple[str, str], int] = {}
    outflow: dict[tuple[str, str], int] = {}
    for a in inst.arcs:
        try:
            r = phi[a.id]
        except KeyError:
            raise KeyError(f"assignment missing arc {a.id!r}") from None
        inflow[(a.dest, r)] = inflow.get((a.dest, r), 0) + 1
        outflow[(a.origin, r)] = outflow.get((a.origin, r), 0) + 1
    cells = sorted(set(inflow) | set(outflow), key=lambda k: (natural_key(k[0]), natural_key(k[1])))
    per_node = {}
    for c in cells:
        v = abs(inflow.get(c, 0) - outflow.get(c, 0))
        if v:
            per_node[c] = v
    return ImbalanceReport(
        per_node=MappingProxyType(per_node),
        inflow=MappingProxyType(inflow),
        outflow=MappingProxyType(outflow),
        total=sum(per_node.values()),
    )


def initial_imbalance(inst: Instance) -> int:
    return total_imbalance(inst, inst.initial).total


def scheduler_arcs(inst: Instance, scheduler: str) -> frozenset[str]:
    """A_s: arcs whose origin node belongs to ``scheduler``."""
    if scheduler not in inst.schedulers:
        raise KeyError(f"unknown scheduler {scheduler!r}")
    return frozenset(a.id for a in inst.arcs if inst.owner(a.origin) == scheduler)


def changed_arcs(inst: Instance, phi: Assignment) -> list[str]:
    return [a.id for a in inst.arcs if phi[a.id] != a.initial]


def burdens(inst: Instance, phi: Assignment) -> BurdenVector:
    per = {s: 0 for s in inst.schedulers}
    for a in inst.arcs:
        if phi[a.id] != a.initial:
            per[inst.owner(a.origin)] += 1
    changes = sum(per.values())
    return BurdenVector(MappingProxyType(per), changes, max(per.values()))


def structural_lower_bound(inst: Instance) -> int:
    """sum_n |indeg(n) - outdeg(n)|, a lower bound on I(Phi) for every Phi."""
    gap = {n: 0 for n in inst.nodes}
    for a in inst.arcs:
        gap[a.dest] += 1
        gap[a.origin] -= 1
    return sum(abs(v) for v in gap.values())


def relabel_resources(inst: Instance, mapping: Mapping[str, str]) -> Instance:
    """Apply a resource bijection to R, R_a and Phi_0."""
    arcs = tuple(
        Arc(**{**a.__dict__, "candidates": tuple(mapping[r] for r in a.candidates), "initial": mapping[a.initial]})
        for a in inst.arcs
    )
    return Instance(inst.nodes, tuple(mapping[r] for r in inst.resources), dict(inst.schedulers), arcs, dict(inst.meta))


def fixture(name: str) -> Instance:
    """Small hand-checkable instances: ``T1``, ``D1``, ``P3``."""
    name = name.upper()
    if name == "T1":
        arcs = (Arc("a1", "n1", "n2", ("r1", "r2"), "r1"), Arc("a2", "n2", "n1", ("r1", "r2"), "r2"))
        return Instance(("n1", "n2"), ("r1", "r2"), {"s1": ("n1", "n2")}, arcs, {"name": "T1"})
    if name == "D1":
        full = ("r1", "r2")
        arcs = (
            Arc("a1", "n1", "n2", full, "r1"),
            Arc("a2", "n2", "n3", full, "r2"),
            Arc("a3", "n3", "n1", full, "r1"),
        )
        return Instance(("n1", "n2", "n3"), full, {"s1": ("n1", "n2"), "s2": ("n3",)}, arcs, {"name": "D1"})
    if name == "P3":
        arcs = (Arc("e1", "n1", "n2", ("r1",), "r1"), Arc("e2", "n2", "n3", ("r1",), "r1"))
        return Instance(("n1", "n2", "n3"), ("r1",), {"s1": ("n1", "n2", "n3")}, arcs, {"name": "P3"})
    raise KeyError(f"unknown fixture {name!r}")


def dump_json(obj, fp: IO | None = None) -> str:
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if fp is not None:
        fp.write(text)
    return text


__all__ = [
    "Arc",
    "Assignment",
    "BurdenVector",
    "ImbalanceReport",
    "Instance",
    "InstanceError",
    "InstanceParseError",
    "burdens",
    "changed_arcs",
    "check_assignment",
    "fixture",
    "initial_imbalance",
    "load_assignment",
    "load_instance",
    "natural_key",
    "read_instance",
    "scheduler_arcs",
    "structural_lower_bound",
    "total_imbalance",
]
