"""Solution records and search limits shared by every backend."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from ..models import ModelSpec, ObjectiveValue, objective_components
from ..network import natural_key

OPTIMAL = "Optimal"
FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
LIMIT_REACHED = "LimitReached"


class SearchSpaceError(RuntimeError):
    """Brute-force enumeration refused: too many assignments."""


@dataclass(frozen=True)
class SolveLimits:
    time_limit: float | None = None  # seconds
    node_limit: int | None = None
    gap: Fraction = Fraction(0)

    def __post_init__(self):
        for name in ("time_limit", "node_limit"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.gap < 0:
            raise ValueError("gap must be nonnegative")


@dataclass
class Solution:
    status: str
    assignment: dict[str, str] | None
    objective: ObjectiveValue | None
    bound: Fraction | None
    backend: str = ""
    nodes: int = 0
    iterations: int = 0
    wall_ms: float = 0.0
    seed: int | None = None
    trace: list = field(default_factory=list, repr=False)

    @property
    def value(self) -> Fraction | None:
        return None if self.objective is None else self.objective.value

    @property
    def has_assignment(self) -> bool:
        return self.assignment is not None

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "status": self.status,
            "backend": self.backend,
            "objective": None if self.objective is None else self.objective.to_dict(),
            "bound": None if self.bound is None else str(self.bound),
            "nodes": self.nodes,
            "iterations": self.iterations,
            "seed": self.seed,
            "assignment": None if self.assignment is None
            else {a: self.assignment[a] for a in sorted(self.assignment, key=natural_key)},
        }
        if timing:
            out["wall_ms"] = round(self.wall_ms, 3)
        return out


def finish(spec: ModelSpec, status: str, phi, bound, backend: str, **kw) -> Solution:
    obj = None if phi is None else objective_components(spec, phi)
    return Solution(status, None if phi is None else dict(phi), obj, bound, backend, **kw)
