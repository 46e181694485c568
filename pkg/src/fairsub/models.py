"""Stage 1 / Stage 2 model specifications, exact evaluation and LP export.

Objectives are carried as exact rationals. Internally every kind is reduced
to an integer form ``den * value`` so the solvers never compare floats.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .network import (
    Assignment,
    Instance,
    burdens,
    check_assignment,
    natural_key,
    total_imbalance,
)

STAGE1 = "stage1"
EFFICIENT = "efficient"
MINIMAX = "minimax"
WEIGHTED = "weighted"
GINI = "gini"
KINDS = (STAGE1, EFFICIENT, MINIMAX, WEIGHTED, GINI)
STAGE2_KINDS = (EFFICIENT, MINIMAX, WEIGHTED, GINI)


class CandidateError(ValueError):
    """An assignment or candidate map is outside the allowed sets."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(str(x))


def candidates_fingerprint(candidates: Mapping[str, tuple[str, ...]]) -> str:
    canon = [[a, list(candidates[a])] for a in sorted(candidates, key=natural_key)]
    return hashlib.sha256(json.dumps(canon, separators=(",", ":")).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ObjectiveValue:
    kind: str
    value: Fraction
    imbalance: int
    changes: int
    max_burden: int
    pair_sum: int
    burdens: Mapping[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": str(self.value),
            "value_float": round(float(self.value), 4),
            "imbalance": self.imbalance,
            "changes": self.changes,
            "max_burden": self.max_burden,
            "pair_sum": self.pair_sum,
            "burdens": dict(self.burdens),
        }


def pair_sum(values) -> int:
    """sum over unordered pairs of |b_i - b_j|, in O(n log n)."""
    vals = sorted(values)
    total, prefix = 0, 0
    for i, v in enumerate(vals):
        total += i * v - prefix
        prefix += v
    return total


@dataclass(frozen=True)
class ModelSpec:
    instance: Instance
    candidates: Mapping[str, tuple[str, ...]]
    kind: str
    istar: int | None = None
    alpha: Fraction | None = None
    omega: Fraction | None = None

    # -- weights ----------------------------------------------------------
    def weights(self) -> tuple[int, int, int, int]:
        """(den, w_changes, w_maxburden, w_pairs) with den*value = w . (Delta, Z, pairs)."""
        if self.kind == EFFICIENT:
            return 1, 1, 0, 0
        if self.kind == MINIMAX:
            return 1, 0, 1, 0
        if self.kind == WEIGHTED:
            a = self.alpha
            return a.denominator, a.denominator - a.numerator, a.numerator, 0
        if self.kind == GINI:
            w = self.omega
            return w.denominator, w.denominator - w.numerator, 0, w.numerator
        return 1, 0, 0, 0

    @property
    def is_stage2(self) -> bool:
        return self.kind in STAGE2_KINDS

    @property
    def fingerprint(self) -> str:
        return candidates_fingerprint(self.candidates)

    def value_of(self, imbalance: int, changes: int, max_burden: int, pairs: int) -> Fraction:
        if self.kind == STAGE1:
            return Fraction(imbalance)
        den, wd, wz, wp = self.weights()
        return Fraction(wd * changes + wz * max_burden + wp * pairs, den)

    def label(self) -> str:
        if self.kind == WEIGHTED:
            return f"weighted(alpha={self.alpha})"
        if self.kind == GINI:
            return f"gini(omega={self.omega})"
        return self.kind

    def compile(self) -> "Compiled":
        return Compiled.from_spec(self)

    def summary(self) -> dict:
        sizes = [len(self.candidates[a.id]) for a in self.instance.arcs]
        lp = export_lp(self)
        n_bin = sum(sizes)
        return {
            "kind": self.kind,
            "istar": self.istar,
            "alpha": None if self.alpha is None else str(self.alpha),
            "omega": None if self.omega is None else str(self.omega),
            "arcs": len(sizes),
            "candidate_pairs": n_bin,
            "free_arcs": sum(1 for s in sizes if s > 1),
            "candidate_fingerprint": self.fingerprint,
            "lp_binaries": n_bin,
            "lp_constraints": _count_rows(lp),
        }


def _check_candidates(inst: Instance, candidate_sets) -> dict[str, tuple[str, ...]]:
    if candidate_sets is None:
        return inst.full_candidates()
    out = {}
    for a in inst.arcs:
        if a.id not in candidate_sets:
            raise CandidateError(f"arc {a.id}: no candidate set")
        cs = tuple(sorted(set(candidate_sets[a.id]), key=natural_key))
        if not cs:
            raise CandidateError(f"arc {a.id}: empty candidate set")
        if a.initial not in cs:
            raise CandidateError(f"arc {a.id}: candidate set misses the initial resource {a.initial}")
        stray = [r for r in cs if r not in a.candidates]
        if stray:
            raise CandidateError(f"arc {a.id}: {stray[0]} is not compatible with the arc")
        out[a.id] = cs
    return out


def _check_cap(istar) -> int:
    if istar is None:
        raise ValueError("Stage 2 models need an imbalance cap I*")
    if isinstance(istar, float) and not istar.is_integer():
        raise ValueError(f"I* must be an integer, got {istar}")
    return int(istar)


def _unit(x, name) -> Fraction:
    if x is None:
        raise ValueError(f"{name} is required for this model kind")
    f = as_fraction(x)
    if not 0 <= f <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")
    return f


def build_stage1(inst: Instance, candidate_sets=None) -> ModelSpec:
    return ModelSpec(inst, _check_candidates(inst, candidate_sets), STAGE1)


def build_stage2_efficient(inst: Instance, candidate_sets, istar: int) -> ModelSpec:
    return ModelSpec(inst, _check_candidates(inst, candidate_sets), EFFICIENT, _check_cap(istar))


def build_stage2_minimax(inst: Instance, candidate_sets, istar: int) -> ModelSpec:
    return ModelSpec(inst, _check_candidates(inst, candidate_sets), MINIMAX, _check_cap(istar))


def build_stage2_weighted(inst: Instance, candidate_sets, istar: int, alpha) -> ModelSpec:
    """(1 - alpha) * Delta + alpha * Z; alpha is the fairness weight."""
    return ModelSpec(inst, _check_candidates(inst, candidate_sets), WEIGHTED, _check_cap(istar),
                     alpha=_unit(alpha, "alpha"))


def build_stage2_gini(inst: Instance, candidate_sets, istar: int, omega) -> ModelSpec:
    """(1 - omega) * sum_s B_s + omega * sum_{s1<s2} |B_s1 - B_s2|."""
    return ModelSpec(inst, _check_candidates(inst, candidate_sets), GINI, _check_cap(istar),
                     omega=_unit(omega, "omega"))


def build(kind: str, inst: Instance, candidate_sets=None, istar=None, alpha=None, omega=None) -> ModelSpec:
    if kind == STAGE1:
        return build_stage1(inst, candidate_sets)
    if kind == EFFICIENT:
        return build_stage2_efficient(inst, candidate_sets, istar)
    if kind == MINIMAX:
        return build_stage2_minimax(inst, candidate_sets, istar)
    if kind == WEIGHTED:
        return build_stage2_weighted(inst, candidate_sets, istar, alpha)
    if kind == GINI:
        return build_stage2_gini(inst, candidate_sets, istar, omega)
    raise ValueError(f"unknown model kind {kind!r}")


def objective_components(spec: ModelSpec, phi: Assignment) -> ObjectiveValue:
    imb = total_imbalance(spec.instance, phi).total
    bv = burdens(spec.instance, phi)
    pairs = pair_sum(bv.per_scheduler.values())
    value = spec.value_of(imb, bv.changes, bv.max_burden, pairs)
    return ObjectiveValue(spec.kind, value, imb, bv.changes, bv.max_burden, pairs, dict(bv.per_scheduler))


def evaluate(spec: ModelSpec, phi: Assignment) -> tuple[bool, ObjectiveValue]:
    try:
        check_assignment(spec.instance, phi, spec.candidates)
    except ValueError as exc:
        raise CandidateError(str(exc)) from None
    obj = objective_components(spec, phi)
    feasible = (not spec.is_stage2) or obj.imbalance <= spec.istar
    return feasible, obj


# ---------------------------------------------------------------------------
# integer-indexed view used by the solvers

@dataclass(frozen=True)
class Compiled:
    spec: ModelSpec
    arc_ids: tuple[str, ...]
    resources: tuple[str, ...]
    origin: tuple[int, ...]
    dest: tuple[int, ...]
    cands: tuple[tuple[int, ...], ...]
    init: tuple[int, ...]
    sched: tuple[int, ...]
    n_nodes: int
    n_sched: int
    kind: str
    istar: int | None
    den: int
    w_changes: int
    w_max: int
    w_pairs: int

    @classmethod
    def from_spec(cls, spec: ModelSpec) -> "Compiled":
        inst = spec.instance
        node_ix = {n: i for i, n in enumerate(inst.nodes)}
        res_ix = {r: i for i, r in enumerate(inst.resources)}
        sched_ix = {s: i for i, s in enumerate(inst.schedulers)}
        den, wd, wz, wp = spec.weights()
        return cls(
            spec=spec,
            arc_ids=inst.arc_ids,
            resources=inst.resources,
            origin=tuple(node_ix[a.origin] for a in inst.arcs),
            dest=tuple(node_ix[a.dest] for a in inst.arcs),
            cands=tuple(tuple(res_ix[r] for r in spec.candidates[a.id]) for a in inst.arcs),
            init=tuple(res_ix[a.initial] for a in inst.arcs),
            sched=tuple(sched_ix[inst.owner(a.origin)] for a in inst.arcs),
            n_nodes=len(inst.nodes),
            n_sched=len(inst.schedulers),
            kind=spec.kind,
            istar=spec.istar,
            den=den,
            w_changes=wd,
            w_max=wz,
            w_pairs=wp,
        )

    @property
    def n_arcs(self) -> int:
        return len(self.arc_ids)

    @property
    def n_res(self) -> int:
        return len(self.resources)

    def scaled(self, imbalance: int, burden_vec) -> int:
        """den * objective for an assignment with the given I and burdens."""
        if self.kind == STAGE1:
            return imbalance
        total = 0
        if self.w_changes:
            total += self.w_changes * sum(burden_vec)
        if self.w_max:
            total += self.w_max * max(burden_vec)
        if self.w_pairs:
            total += self.w_pairs * pair_sum(burden_vec)
        return total

    def decode(self, x) -> dict[str, str]:
        return {a: self.resources[r] for a, r in zip(self.arc_ids, x)}

    def encode(self, phi: Assignment) -> list[int]:
        ix = {r: i for i, r in enumerate(self.resources)}
        return [ix[phi[a]] for a in self.arc_ids]

    def imbalance_of(self, x) -> int:
        net = {}
        for i, r in enumerate(x):
            o, d = self.origin[i], self.dest[i]
            net[(o, r)] = net.get((o, r), 0) - 1
            net[(d, r)] = net.get((d, r), 0) + 1
        return sum(abs(v) for v in net.values())

    def burdens_of(self, x) -> list[int]:
        b = [0] * self.n_sched
        for i, r in enumerate(x):
            if r != self.init[i]:
                b[self.sched[i]] += 1
        return b


# ---------------------------------------------------------------------------
# LP export

_SAFE = re.compile(r"[^A-Za-z0-9_.]")


def _name(*parts: str) -> str:
    return "_".join(_SAFE.sub("_", p) for p in parts)


def _terms(coeffs) -> list[str]:
    out = []
    for i, (c, v) in enumerate(coeffs):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        tok = f"{v}" if mag == 1 else f"{mag} {v}"
        out.append(f"{sign} {tok}" if i or c < 0 else tok)
    return out


def _wrap(head: str, toks: list[str], tail: str = "") -> list[str]:
    lines, cur = [], head
    for t in toks:
        if len(cur) + len(t) + 1 > 200:
            lines.append(cur)
            cur = "   "
        cur += " " + t
    if tail:
        cur += " " + tail
    lines.append(cur)
    return lines


def export_lp(spec: ModelSpec) -> str:
    """CPLEX-LP text for a model spec (binaries x, imbalances I, burdens B, Z, D)."""
    inst = spec.instance
    den, wd, wz, wp = spec.weights()
    xs = {(a.id, r): _name("x", a.id, r) for a in inst.arcs for r in spec.candidates[a.id]}
    inc: dict[tuple[str, str], list[tuple[int, str]]] = {}
    for a in inst.arcs:
        if a.is_loop:
            continue
        for r in spec.candidates[a.id]:
            inc.setdefault((a.dest, r), []).append((1, xs[(a.id, r)]))
            inc.setdefault((a.origin, r), []).append((-1, xs[(a.id, r)]))
    cells = sorted(inc, key=lambda k: (natural_key(k[0]), natural_key(k[1])))
    ivars = {c: _name("I", c[0], c[1]) for c in cells}
    scheds = list(inst.schedulers)
    bvars = {s: _name("B", s) for s in scheds}

    lines = [f"\\ model {spec.label()}", f"\\ candidate fingerprint {spec.fingerprint}"]
    if spec.kind != STAGE1:
        lines.append(f"\\ objective scaled by {den}")
    lines.append("Minimize")
    if spec.kind == STAGE1:
        obj = [(1, ivars[c]) for c in cells]
    else:
        obj = []
        if wd:
            obj += [(wd, bvars[s]) for s in scheds]
        if wz:
            obj.append((wz, "Z"))
        if wp:
            obj += [(wp, _name("D", s1, s2)) for i, s1 in enumerate(scheds) for s2 in scheds[i + 1:]]
    if not obj:
        # LP needs at least one variable in the objective
        obj = [(0, next(iter(xs.values())))] if xs else []
    lines += _wrap(" obj:", _terms(obj))
    lines.append("Subject To")
    for c in cells:
        flow = inc[c]
        # collapse parallel incidences of the same variable (loops excluded above)
        agg: dict[str, int] = {}
        for k, v in flow:
            agg[v] = agg.get(v, 0) + k
        flow = [(k, v) for v, k in agg.items() if k]
        lines += _wrap(f" imb_pos_{ivars[c]}:", _terms(flow + [(-1, ivars[c])]), "<= 0")
        lines += _wrap(f" imb_neg_{ivars[c]}:", _terms([(-k, v) for k, v in flow] + [(-1, ivars[c])]), "<= 0")
    for a in inst.arcs:
        lines += _wrap(f" assign_{_name(a.id)}:", _terms([(1, xs[(a.id, r)]) for r in spec.candidates[a.id]]), "= 1")
    if spec.kind != STAGE1:
        cap = [(1, ivars[c]) for c in cells] or [(0, bvars[scheds[0]])]
        lines += _wrap(" cap:", _terms(cap), f"<= {spec.istar}")
        for s in scheds:
            keep = [(1, xs[(a.id, a.initial)]) for a in inst.arcs if inst.owner(a.origin) == s]
            lines += _wrap(f" burden_{_name(s)}:", _terms([(1, bvars[s])] + keep), f"= {len(keep)}")
        if spec.kind in (MINIMAX, WEIGHTED):
            for s in scheds:
                lines.append(f" zlin_{_name(s)}: Z - {bvars[s]} >= 0")
        if spec.kind == GINI:
            for i, s1 in enumerate(scheds):
                for s2 in scheds[i + 1:]:
                    d = _name("D", s1, s2)
                    lines.append(f" gini_{d}_a: {d} - {bvars[s1]} + {bvars[s2]} >= 0")
                    lines.append(f" gini_{d}_b: {d} + {bvars[s1]} - {bvars[s2]} >= 0")
    lines.append("Bounds")
    for c in cells:
        lines.append(f" {ivars[c]} >= 0")
    if spec.kind != STAGE1:
        for s in scheds:
            lines.append(f" {bvars[s]} >= 0")
        if spec.kind in (MINIMAX, WEIGHTED):
            lines.append(" Z >= 0")
        if spec.kind == GINI:
            for i, s1 in enumerate(scheds):
                for s2 in scheds[i + 1:]:
                    lines.append(f" {_name('D', s1, s2)} >= 0")
    lines.append("Binary")
    names = [xs[(a.id, r)] for a in inst.arcs for r in spec.candidates[a.id]]
    for i in range(0, len(names), 8):
        lines.append(" " + " ".join(names[i:i + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def _count_rows(lp: str) -> int:
    body = lp.split("Subject To\n", 1)[1].split("Bounds\n", 1)[0]
    return sum(1 for line in body.splitlines() if line.startswith(" ") and not line.startswith("    ") and ":" in line)
