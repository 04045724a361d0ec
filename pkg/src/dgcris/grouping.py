"""Partitions of RIS cells into groups.

Cells and groups are 0-based everywhere in the code. Serialized groupings
(JSON, CSV) use 1-based cell indices, see :meth:`Grouping.to_list`.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

STRATEGIES = ("horizontal", "vertical", "interlaced")


@dataclass(frozen=True)
class Grouping:
    """G subsets of cell indices.

    Each subset is kept as an ascending tuple, which doubles as the index
    vector d_g used when blocks are restored into the full matrices. The
    constructor does not check the partition axioms; use :func:`validate`.
    """

    subsets: tuple[tuple[int, ...], ...]

    def __init__(self, subsets: Iterable[Iterable[int]]):
        object.__setattr__(
            self, "subsets", tuple(tuple(sorted(int(m) for m in s)) for s in subsets))

    @property
    def num_groups(self) -> int:
        return len(self.subsets)

    @property
    def num_cells(self) -> int:
        return sum(len(s) for s in self.subsets)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.subsets)

    def __len__(self):
        return len(self.subsets)

    def __getitem__(self, g: int) -> tuple[int, ...]:
        return self.subsets[g]

    def index_vector(self, g: int) -> np.ndarray:
        return np.asarray(self.subsets[g], dtype=np.intp)

    def group_of(self, m: int) -> int:
        for g, s in enumerate(self.subsets):
            if m in s:
                return g
        raise KeyError(f"cell {m} is not in any group")

    def labels(self) -> np.ndarray:
        """``labels[m]`` is the group holding cell m (valid partitions only)."""
        out = np.full(self.num_cells, -1, dtype=np.intp)
        for g, s in enumerate(self.subsets):
            out[list(s)] = g
        return out

    def to_list(self) -> list[list[int]]:
        """JSON-friendly list of lists with 1-based cell indices."""
        return [[m + 1 for m in s] for s in self.subsets]

    @classmethod
    def from_list(cls, groups: Sequence[Sequence[int]]) -> "Grouping":
        return cls([[m - 1 for m in s] for s in groups])

    def __str__(self):
        return "{" + "},{".join(",".join(str(m + 1) for m in s) for s in self.subsets) + "}"


def uniform_adjacent(num_cells: int, num_groups: int) -> Grouping:
    """Contiguous, balanced partition.

    The first ``num_cells % num_groups`` groups get one extra cell, so for
    M = 5, G = 2 the result is {1,2,3},{4,5}.
    """
    if not 1 <= num_groups <= num_cells:
        raise ValueError(f"need 1 <= G <= M, got G={num_groups}, M={num_cells}")
    base, extra = divmod(num_cells, num_groups)
    subsets, start = [], 0
    for g in range(num_groups):
        size = base + (1 if g < extra else 0)
        subsets.append(range(start, start + size))
        start += size
    return Grouping(subsets)


def singletons(num_cells: int) -> Grouping:
    return uniform_adjacent(num_cells, num_cells)


def fixed_strategy(grid_rows: int, grid_cols: int, num_groups: int, strategy: str) -> Grouping:
    """Fixed layouts on a row-major indexed grid.

    horizontal: contiguous runs in row-major order; vertical: contiguous runs
    in column-major order; interlaced: cell m goes to group m mod G.
    """
    num_cells = grid_rows * grid_cols
    if not 1 <= num_groups <= num_cells or num_cells % num_groups:
        raise ValueError(f"G={num_groups} must divide M={num_cells}")
    size = num_cells // num_groups
    if strategy == "horizontal":
        order = np.arange(num_cells)
    elif strategy == "vertical":
        order = np.arange(num_cells).reshape(grid_rows, grid_cols).T.ravel()
    elif strategy == "interlaced":
        return Grouping([range(g, num_cells, num_groups) for g in range(num_groups)])
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return Grouping([order[g * size:(g + 1) * size] for g in range(num_groups)])


def validate(grouping: Grouping, num_cells: int, num_groups: int) -> list[str]:
    """List every violated partition clause; an empty list means valid."""
    problems = []
    if grouping.num_groups != num_groups:
        problems.append(f"expected {num_groups} groups, found {grouping.num_groups}")
    for g, s in enumerate(grouping.subsets):
        if not s:
            problems.append(f"group {g + 1} is empty")
        bad = [m for m in s if not 0 <= m < num_cells]
        if bad:
            problems.append(f"group {g + 1} holds out-of-range cells {[m + 1 for m in bad]}")
        if len(set(s)) != len(s):
            problems.append(f"group {g + 1} lists a cell more than once")
    for p in range(grouping.num_groups):
        for q in range(p + 1, grouping.num_groups):
            common = set(grouping.subsets[p]) & set(grouping.subsets[q])
            if common:
                problems.append(
                    f"groups {p + 1} and {q + 1} overlap on cells {sorted(m + 1 for m in common)}")
    covered = set().union(*map(set, grouping.subsets)) if grouping.subsets else set()
    missing = sorted(set(range(num_cells)) - covered)
    if missing:
        problems.append(f"cells {[m + 1 for m in missing]} are not assigned to any group")
    return problems


def move_cell(grouping: Grouping, m: int, g_from: int, g_to: int) -> Grouping:
    """Return a copy with cell ``m`` moved from group ``g_from`` to ``g_to``."""
    if m not in grouping.subsets[g_from]:
        raise ValueError(f"cell {m} is not in group {g_from}")
    if len(grouping.subsets[g_from]) <= 1:
        raise ValueError(f"group {g_from} would become empty")
    if g_to == g_from:
        return grouping
    subsets = [list(s) for s in grouping.subsets]
    subsets[g_from].remove(m)
    subsets[g_to].append(m)
    return Grouping(subsets)
