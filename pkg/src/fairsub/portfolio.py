"""Solution portfolios over efficiency/fairness weights, plus burden analytics."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Sequence

from .models import as_fraction, build_stage2_gini, build_stage2_weighted
from .network import BurdenVector, Instance, burdens, changed_arcs, natural_key, total_imbalance
from .solver import OPTIMAL, solve


def _fmt(x) -> str:
    """Integers stay integers; other rationals are rendered with 4 decimals."""
    if x is None:
        return ""
    f = Fraction(x) if not isinstance(x, float) else Fraction(str(x))
    if f.denominator == 1:
        return str(f.numerator)
    return f"{float(f):.4f}"


# ---------------------------------------------------------------------------
# analytics

def classify_substitutions(inst: Instance, phi: Mapping[str, str]) -> tuple[int, int]:
    """(internal, collaborative) counts of changed arcs."""
    internal = collaborative = 0
    for aid in changed_arcs(inst, phi):
        a = inst.arc(aid)
        if inst.owner(a.origin) == inst.owner(a.dest):
            internal += 1
        else:
            collaborative += 1
    return internal, collaborative


def _values(b) -> list:
    if isinstance(b, BurdenVector):
        return b.as_list()
    if isinstance(b, Mapping):
        return [b[k] for k in sorted(b, key=natural_key)]
    return list(b)


def gini_coefficient(b) -> float:
    """sum over ordered pairs |B_s - B_t| / (2 |S| sum_s B_s); 0 when nobody is burdened."""
    vals = _values(b)
    if not vals:
        raise ValueError("need at least one scheduler")
    total = sum(vals)
    if total == 0:
        return 0.0
    fr = [as_fraction(v) for v in vals]
    ordered = 2 * sum(abs(u - v) for u, v in combinations(fr, 2))
    return float(ordered / (2 * len(fr) * as_fraction(total)))


def burden_shares(b) -> list[float]:
    vals = _values(b)
    total = sum(vals)
    if total == 0:
        return [0.0] * len(vals)
    return [float(Fraction(v) / total) for v in vals]


def rank_changes(inst: Instance, phi_star: Mapping[str, str]) -> list[tuple[str, int]]:
    """Greedy priority order of a plan's changes: (arc id, imbalance after applying it)."""
    current = dict(inst.initial)
    remaining = changed_arcs(inst, phi_star)
    order = []
    while remaining:
        best = None
        for aid in remaining:  # remaining is in natural id order, so ties keep the smaller id
            trial = dict(current)
            trial[aid] = phi_star[aid]
            imb = total_imbalance(inst, trial).total
            if best is None or imb < best[1]:
                best = (aid, imb)
        current[best[0]] = phi_star[best[0]]
        remaining.remove(best[0])
        order.append(best)
    return order


def partial_implementation_curve(inst: Instance, phi_star: Mapping[str, str],
                                 levels: Sequence) -> list[tuple[object, int]]:
    """Residual imbalance after applying the first ceil(f * Delta) ranked changes, per level f."""
    fr = [as_fraction(f) for f in levels]
    if any(not 0 <= f <= 1 for f in fr):
        raise ValueError("levels must lie in [0, 1]")
    if any(a > b for a, b in zip(fr, fr[1:])):
        raise ValueError("levels must be sorted ascending")
    ranking = rank_changes(inst, phi_star)
    i0 = total_imbalance(inst, inst.initial).total
    out = []
    for f_in, f in zip(levels, fr):
        k = math.ceil(f * len(ranking))
        out.append((f_in, i0 if k == 0 else ranking[k - 1][1]))
    return out


def best_prefix_curve(inst: Instance, phi_star: Mapping[str, str], levels: Sequence) -> list[tuple[object, int]]:
    """Exhaustive oracle: the lowest imbalance any ceil(f * Delta)-subset of the plan reaches."""
    changed = changed_arcs(inst, phi_star)
    out = []
    for f in levels:
        k = math.ceil(as_fraction(f) * len(changed))
        best = None
        for subset in combinations(changed, k):
            trial = dict(inst.initial)
            for aid in subset:
                trial[aid] = phi_star[aid]
            imb = total_imbalance(inst, trial).total
            best = imb if best is None else min(best, imb)
        out.append((f, best))
    return out


# ---------------------------------------------------------------------------
# portfolio

@dataclass
class Entry:
    label: str
    params: dict
    solution: object  # solver.Solution
    on_front: bool = False

    @property
    def optimal(self) -> bool:
        return self.solution.status == OPTIMAL

    @property
    def flagged(self) -> bool:
        return not self.optimal

    @property
    def point(self) -> tuple[int, int] | None:
        o = self.solution.objective
        return None if o is None else (o.changes, o.max_burden)


def dominates(p: tuple[int, int], q: tuple[int, int]) -> bool:
    return p[0] <= q[0] and p[1] <= q[1] and p != q


@dataclass
class Portfolio:
    instance: Instance
    entries: list[Entry] = field(default_factory=list)

    def __post_init__(self):
        labels = [e.label for e in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError("portfolio labels must be unique")
        self.refresh_front()

    def refresh_front(self) -> None:
        """Mark the nondominated optimal entries; equal points keep their first entry."""
        seen = set()
        pts = [e.point for e in self.entries if e.optimal and e.point is not None]
        for e in self.entries:
            e.on_front = False
            if not e.optimal or e.point is None or e.point in seen:
                continue
            if any(dominates(q, e.point) for q in pts):
                continue
            e.on_front = True
            seen.add(e.point)

    def add(self, entry: Entry) -> None:
        if any(e.label == entry.label for e in self.entries):
            raise ValueError(f"duplicate label {entry.label}")
        self.entries.append(entry)
        self.refresh_front()

    def merged(self, other: "Portfolio") -> "Portfolio":
        return Portfolio(self.instance, list(self.entries) + list(other.entries))

    @property
    def front(self) -> list[Entry]:
        return [e for e in self.entries if e.on_front]

    def __len__(self) -> int:
        return len(self.entries)

    def analytics(self, e: Entry) -> dict:
        sol = e.solution
        if sol.assignment is None:
            return {}
        b = burdens(self.instance, sol.assignment)
        internal, collab = classify_substitutions(self.instance, sol.assignment)
        return {
            "burdens": dict(b.per_scheduler),
            "shares": dict(zip(sorted(b.per_scheduler, key=natural_key), burden_shares(b))),
            "gini": gini_coefficient(b),
            "internal": internal,
            "collaborative": collab,
        }

    def to_dict(self, timing: bool = True) -> dict:
        rows = []
        for e in self.entries:
            sol = e.solution
            row = {
                "label": e.label,
                "params": e.params,
                "status": sol.status,
                "on_front": e.on_front,
                "flagged": e.flagged,
                "delta": None if e.point is None else e.point[0],
                "z": None if e.point is None else e.point[1],
                "objective": None if sol.objective is None else _fmt(sol.objective.value),
                "assignment": sol.assignment,
                "analytics": self.analytics(e),
            }
            if timing:
                row["wall_ms"] = round(sol.wall_ms, 3)
            rows.append(row)
        return {"solutions": rows, "front": [e.label for e in self.front]}


def burden_distribution(portfolio: Portfolio) -> list[tuple[str, dict[str, float]]]:
    """Per solution, each scheduler's share of the total change count."""
    out = []
    scheds = sorted(portfolio.instance.schedulers, key=natural_key)
    for e in portfolio.entries:
        if e.solution.assignment is None:
            continue
        b = burdens(portfolio.instance, e.solution.assignment)
        out.append((e.label, dict(zip(scheds, burden_shares(b)))))
    return out


def _label(name: str, x) -> str:
    return f"{name}={x:g}" if isinstance(x, (int, float)) else f"{name}={x}"


def _check_grid(values, name):
    fr = [as_fraction(v) for v in values]
    if len(set(fr)) != len(fr):
        raise ValueError(f"{name} values must be distinct")
    if any(not 0 <= f <= 1 for f in fr):
        raise ValueError(f"{name} values must lie in [0, 1]")


def sweep_alpha(inst: Instance, candidate_sets, istar: int, alphas: Sequence, backend: str = "exact",
                limits=None, seed: int = 0) -> Portfolio:
    """One weighted-model solution per alpha (alpha = fairness weight)."""
    _check_grid(alphas, "alpha")
    entries = []
    for a in alphas:
        spec = build_stage2_weighted(inst, candidate_sets, istar, a)
        sol = solve(spec, backend, limits=limits, seed=seed)
        entries.append(Entry(_label("alpha", a), {"kind": "weighted", "alpha": _fmt(as_fraction(a))}, sol))
    return Portfolio(inst, entries)


def sweep_omega(inst: Instance, candidate_sets, istar: int, omegas: Sequence, backend: str = "exact",
                limits=None, seed: int = 0) -> Portfolio:
    """One Gini-model solution per omega; joins the front with its (Delta, Z)."""
    _check_grid(omegas, "omega")
    entries = []
    for w in omegas:
        spec = build_stage2_gini(inst, candidate_sets, istar, w)
        sol = solve(spec, backend, limits=limits, seed=seed)
        entries.append(Entry(_label("omega", w), {"kind": "gini", "omega": _fmt(as_fraction(w))}, sol))
    return Portfolio(inst, entries)


# ---------------------------------------------------------------------------
# reports

def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


TRADEOFF_HEADER = ["instance", "schedulers", "I0", "Istar", "delta_star", "z_star", "time_eff_ms",
                   "delta_fair", "z_fair", "time_fair_ms", "delta_fair_minus_star", "z_fair_minus_star"]


def tradeoff_row(name: str, inst: Instance, istar: int, eff, fair, timing: bool = True) -> list:
    """Efficient-vs-fair comparison row (both solutions at the same I*)."""
    de, ze = eff.objective.changes, eff.objective.max_burden
    df, zf = fair.objective.changes, fair.objective.max_burden
    t = (lambda s: f"{s.wall_ms:.3f}") if timing else (lambda s: "")
    return [name, len(inst.schedulers), total_imbalance(inst, inst.initial).total, istar, de, ze, t(eff),
            df, zf, t(fair), df - de, zf - ze]


def tradeoff_csv(rows) -> str:
    return _csv(TRADEOFF_HEADER, rows)


def alpha_curve(portfolio: Portfolio, timing: bool = True) -> list[list]:
    """(alpha, Delta, Z, time, Delta %, Z %) with percent change against the smallest alpha."""
    rows = []
    pts = [(as_fraction(e.params["alpha"]), e) for e in portfolio.entries if e.params.get("kind") == "weighted"]
    pts.sort(key=lambda t: t[0])
    base = next((e.point for _, e in pts if e.point is not None), None)
    for a, e in pts:
        if e.point is None:
            rows.append([_fmt(a), "", "", "", "", "", e.solution.status])
            continue
        d, z = e.point
        pct = lambda v, b: "" if not b else _fmt(Fraction(100 * (v - b), b))
        rows.append([_fmt(a), d, z, f"{e.solution.wall_ms:.3f}" if timing else "",
                     pct(d, base[0]), pct(z, base[1]), e.solution.status])
    return rows


def alpha_curve_csv(portfolio: Portfolio, timing: bool = True) -> str:
    return _csv(["alpha", "delta", "z", "time_ms", "delta_pct", "z_pct", "status"], alpha_curve(portfolio, timing))


def curve_csv(curves: Mapping[str, Sequence[tuple]]) -> str:
    rows = [[label, _fmt(as_fraction(f)), imb] for label, pts in curves.items() for f, imb in pts]
    return _csv(["plan", "fraction", "imbalance"], rows)


def shares_csv(portfolio: Portfolio) -> str:
    scheds = sorted(portfolio.instance.schedulers, key=natural_key)
    rows = [[label] + [f"{shares[s]:.4f}" for s in scheds] for label, shares in burden_distribution(portfolio)]
    return _csv(["label"] + scheds, rows)
