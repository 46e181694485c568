"""Equipment substitution matrix and candidate-set derivation."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .network import natural_key

# Row = resource originally planned on the load, column = admissible substitute.
_BUILTIN_ROWS = (
    "11110000000000",
    "11110000000000",
    "11110000000000",
    "11111000000001",
    "11111000000001",
    "11111100000001",
    "11111110000001",
    "11111111000001",
    "11111111100001",
    "11111111110001",
    "11111111111001",
    "00000000000100",
    "11111111111011",
    "11111111111011",
)

ROW_ORIGINAL = "row"
COLUMN_ORIGINAL = "column"


@dataclass(frozen=True)
class CompatMatrix:
    resources: tuple[str, ...]
    matrix: np.ndarray  # bool, |R| x |R|
    convention: str = ROW_ORIGINAL

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=bool)
        n = len(self.resources)
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match {n} resources")
        if not m.diagonal().all():
            raise ValueError("compatibility matrix must have an all-true diagonal")
        if self.convention not in (ROW_ORIGINAL, COLUMN_ORIGINAL):
            raise ValueError(f"unknown convention {self.convention!r}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_index", {r: i for i, r in enumerate(self.resources)})

    def allowed(self, original: str, substitute: str) -> bool:
        i, j = self._index[original], self._index[substitute]
        if self.convention == COLUMN_ORIGINAL:
            i, j = j, i
        return bool(self.matrix[i, j])

    def transposed(self) -> "CompatMatrix":
        other = COLUMN_ORIGINAL if self.convention == ROW_ORIGINAL else ROW_ORIGINAL
        return CompatMatrix(self.resources, self.matrix, other)

    def restrict(self, resources) -> "CompatMatrix":
        """Sub-matrix over a subset of the resources (order as given)."""
        idx = [self._index[r] for r in resources]
        return CompatMatrix(tuple(resources), self.matrix[np.ix_(idx, idx)], self.convention)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(self.resources))
        for r, row in zip(self.resources, self.matrix):
            w.writerow([r] + [int(v) for v in row])
        return buf.getvalue()


def builtin_matrix() -> CompatMatrix:
    """The 14-type fleet matrix, resources ``r1`` .. ``r14``."""
    m = np.array([[c == "1" for c in row] for row in _BUILTIN_ROWS], dtype=bool)
    return CompatMatrix(tuple(f"r{i}" for i in range(1, 15)), m)


def identity_matrix(resources) -> CompatMatrix:
    resources = tuple(resources)
    return CompatMatrix(resources, np.eye(len(resources), dtype=bool))


def load_matrix_csv(text: str, convention: str = ROW_ORIGINAL) -> CompatMatrix:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise ValueError("empty matrix file")
    header = [c.strip() for c in rows[0][1:]]
    body = rows[1:]
    if [r[0].strip() for r in body] != header:
        raise ValueError("row labels must repeat the column header in the same order")
    cells = []
    for line_no, r in enumerate(body, start=2):
        vals = [c.strip() for c in r[1:]]
        if len(vals) != len(header) or any(v not in ("0", "1") for v in vals):
            raise ValueError(f"line {line_no}: expected {len(header)} cells of 0/1")
        cells.append([v == "1" for v in vals])
    return CompatMatrix(tuple(header), np.array(cells, dtype=bool), convention)


def candidates_for(matrix: CompatMatrix, initial: str) -> set[str]:
    if initial not in matrix._index:
        raise KeyError(f"unknown resource {initial!r}")
    return {r for r in matrix.resources if matrix.allowed(initial, r)}


def sorted_candidates(matrix: CompatMatrix, initial: str) -> tuple[str, ...]:
    return tuple(sorted(candidates_for(matrix, initial), key=natural_key))
