"""Cell indexing, symmetric orbits, and orbit averaging for r**T contingency tables.

Cells are 1-based coordinate tuples ``(i_1, ..., i_T)`` with each coordinate in
``{1, ..., r}``.  The linear index is lexicographic with the first coordinate
most significant, so score vectors built from Kronecker products line up with
the cell enumeration by construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

Cell = tuple[int, ...]

# Dense storage throughout; reject configurations whose cell count exceeds this.
INDEX_CAP = 10**7


class DegenerateOrbitError(ValueError):
    """Raised when an orbit carries zero mass where positivity is required."""


@dataclass(frozen=True)
class TableShape:
    """Dimensions of an r**T table plus the ordinal category scores.

    ``scores`` defaults to the equally spaced values ``1, ..., r``.
    """

    r: int
    T: int
    scores: tuple[float, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.r < 1:
            raise ValueError(f"need at least one category, got r={self.r}")
        if self.T < 2:
            raise ValueError(f"need at least two variables, got T={self.T}")
        if self.r**self.T > INDEX_CAP:
            raise ValueError(f"r**T = {self.r**self.T} exceeds the cap {INDEX_CAP}")
        scores = self.scores
        if scores is None:
            scores = tuple(float(k) for k in range(1, self.r + 1))
        else:
            scores = tuple(float(u) for u in scores)
            if len(scores) != self.r:
                raise ValueError(f"expected {self.r} scores, got {len(scores)}")
            if any(a >= b for a, b in zip(scores, scores[1:])):
                raise ValueError("scores must be strictly increasing")
        object.__setattr__(self, "scores", scores)

    @property
    def n_cells(self) -> int:
        return self.r**self.T

    @property
    def n_orbits(self) -> int:
        """Number of symmetric classes, C(r+T-1, T)."""
        return math.comb(self.r + self.T - 1, self.T)

    def score_of(self, cell: Cell) -> np.ndarray:
        """Score vector (u_{i_1}, ..., u_{i_T}) of a single cell."""
        return np.array([self.scores[c - 1] for c in cell])


@dataclass(frozen=True)
class CountTable:
    shape: TableShape
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.shape != (self.shape.n_cells,):
            raise ValueError(
                f"expected {self.shape.n_cells} counts, got {counts.shape}"
            )
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if counts.sum() <= 0:
            raise ValueError("total count must be positive")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> float:
        return float(self.counts.sum())

    def proportions(self) -> "ProbTable":
        return ProbTable(self.shape, self.counts / self.n)

    def smoothed_proportions(self, add: float = 0.5) -> "ProbTable":
        """Additively smoothed proportions; interior even with sampling zeros."""
        return ProbTable(
            self.shape,
            (self.counts + add) / (self.n + add * self.shape.n_cells),
        )


@dataclass(frozen=True)
class ProbTable:
    """Probabilities over the r**T cells.  Zeros are tolerated; operations that
    need an interior table check ``is_interior`` themselves."""

    shape: TableShape
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (self.shape.n_cells,):
            raise ValueError(f"expected {self.shape.n_cells} cells, got {probs.shape}")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {probs.sum()}, not 1")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def is_interior(self) -> bool:
        return bool(np.all(self.probs > 0))


def cell_index(shape: TableShape, cell: Cell) -> int:
    """Linear index of a cell under lexicographic order."""
    if len(cell) != shape.T:
        raise ValueError(f"expected {shape.T} coordinates, got {len(cell)}")
    idx = 0
    for c in cell:
        if not 1 <= c <= shape.r:
            raise ValueError(f"coordinate {c} outside 1..{shape.r}")
        idx = idx * shape.r + (c - 1)
    return idx


def cell_of_index(shape: TableShape, index: int) -> Cell:
    """Inverse of :func:`cell_index`."""
    if not 0 <= index < shape.n_cells:
        raise ValueError(f"index {index} outside 0..{shape.n_cells - 1}")
    coords = []
    for _ in range(shape.T):
        index, rem = divmod(index, shape.r)
        coords.append(rem + 1)
    return tuple(reversed(coords))


def all_cells(shape: TableShape):
    """Cells in lexicographic order."""
    return itertools.product(range(1, shape.r + 1), repeat=shape.T)


def orbit(cell: Cell) -> tuple[Cell, ...]:
    """The symmetric set of a cell: all distinct coordinate permutations."""
    return tuple(sorted(set(itertools.permutations(cell))))


def orbit_representative(cell: Cell) -> Cell:
    """Non-decreasing reordering of the coordinates; constant on each orbit."""
    return tuple(sorted(cell))


@dataclass(frozen=True)
class OrbitStructure:
    """Precomputed orbit bookkeeping for one (r, T)."""

    representatives: tuple[Cell, ...]  # lexicographic order
    orbit_id: np.ndarray  # cell index -> orbit number
    members: tuple[np.ndarray, ...]  # orbit number -> cell indices
    size_of_cell: np.ndarray  # |D(i)| per cell


@lru_cache(maxsize=None)
def _orbit_structure(r: int, T: int) -> OrbitStructure:
    shape = TableShape(r, T)
    reps_seen: dict[Cell, int] = {}
    orbit_id = np.empty(shape.n_cells, dtype=np.intp)
    member_lists: list[list[int]] = []
    for idx, cell in enumerate(all_cells(shape)):
        rep = orbit_representative(cell)
        oid = reps_seen.get(rep)
        if oid is None:
            oid = len(reps_seen)
            reps_seen[rep] = oid
            member_lists.append([])
        orbit_id[idx] = oid
        member_lists[oid].append(idx)
    members = tuple(np.array(m, dtype=np.intp) for m in member_lists)
    sizes = np.array([len(members[o]) for o in orbit_id], dtype=float)
    return OrbitStructure(
        representatives=tuple(reps_seen),
        orbit_id=orbit_id,
        members=members,
        size_of_cell=sizes,
    )


def orbit_structure(shape: TableShape) -> OrbitStructure:
    """Cached orbit decomposition of the cell set (scores play no role)."""
    return _orbit_structure(shape.r, shape.T)


def orbit_sums(shape: TableShape, values: np.ndarray) -> np.ndarray:
    """Per-cell sum of ``values`` over each cell's orbit."""
    struct = orbit_structure(shape)
    totals = np.bincount(struct.orbit_id, weights=values, minlength=len(struct.members))
    return totals[struct.orbit_id]


def symmetric_average(p: ProbTable) -> ProbTable:
    """The nearest completely symmetric table: orbit-wise averaging."""
    struct = orbit_structure(p.shape)
    return ProbTable(p.shape, orbit_sums(p.shape, p.probs) / struct.size_of_cell)


def conditional_within_orbit(p: ProbTable) -> np.ndarray:
    """Each cell's probability conditional on its orbit.

    Requires every orbit to carry positive mass.
    """
    sums = orbit_sums(p.shape, p.probs)
    if np.any(sums <= 0):
        bad = int(np.argmin(sums))
        raise DegenerateOrbitError(
            f"orbit of cell {cell_of_index(p.shape, bad)} has zero total probability"
        )
    return p.probs / sums
