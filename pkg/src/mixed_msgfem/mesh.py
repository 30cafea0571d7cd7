"""Uniform rectangular fine mesh on the unit square and cell-region queries.

Numbering
---------
cells      c = j * n_x + i                      (i along x, j along y)
nodes      v = j * (n_x + 1) + i                (i = 0..n_x, j = 0..n_y)
edges      vertical edges first, row-major:     e = j * (n_x + 1) + i
           then horizontal edges, row-major:    e = n_vert + j * n_x + i

Every edge carries a fixed global unit normal: +x for vertical edges and
+y for horizontal edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# local edge slots of a cell
LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
# outward normal of each slot relative to the global edge normal
CELL_EDGE_SIGN = np.array([-1.0, 1.0, -1.0, 1.0])


@dataclass(frozen=True, eq=False)
class FineMesh:
    n_x: int
    n_y: int

    def __post_init__(self):
        if int(self.n_x) != self.n_x or int(self.n_y) != self.n_y:
            raise ValueError("cell counts must be integers")
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError(f"cell counts must be positive, got ({self.n_x}, {self.n_y})")

    @property
    def h_x(self) -> float:
        return 1.0 / self.n_x

    @property
    def h_y(self) -> float:
        return 1.0 / self.n_y

    @property
    def cell_area(self) -> float:
        return self.h_x * self.h_y

    @property
    def n_cells(self) -> int:
        return self.n_x * self.n_y

    @property
    def n_vertical(self) -> int:
        return self.n_y * (self.n_x + 1)

    @property
    def n_edges(self) -> int:
        return self.n_vertical + self.n_x * (self.n_y + 1)

    @property
    def n_nodes(self) -> int:
        return (self.n_x + 1) * (self.n_y + 1)

    @property
    def n_dofs(self) -> int:
        """RT0 + P0 unknown count."""
        return self.n_edges + self.n_cells

    def cell_index(self, i, j):
        return np.asarray(j) * self.n_x + np.asarray(i)

    def node_index(self, i, j):
        return np.asarray(j) * (self.n_x + 1) + np.asarray(i)

    def vertical_edge(self, i, j):
        return np.asarray(j) * (self.n_x + 1) + np.asarray(i)

    def horizontal_edge(self, i, j):
        return self.n_vertical + np.asarray(j) * self.n_x + np.asarray(i)

    @cached_property
    def cell_ij(self) -> tuple[np.ndarray, np.ndarray]:
        j, i = np.divmod(np.arange(self.n_cells), self.n_x)
        return i, j

    @cached_property
    def cell_centers(self) -> np.ndarray:
        i, j = self.cell_ij
        return np.column_stack(((i + 0.5) * self.h_x, (j + 0.5) * self.h_y))

    @cached_property
    def node_coords(self) -> np.ndarray:
        j, i = np.divmod(np.arange(self.n_nodes), self.n_x + 1)
        return np.column_stack((i * self.h_x, j * self.h_y))

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """(n_cells, 4) edge indices in slot order left, right, bottom, top."""
        i, j = self.cell_ij
        return np.column_stack((
            self.vertical_edge(i, j),
            self.vertical_edge(i + 1, j),
            self.horizontal_edge(i, j),
            self.horizontal_edge(i, j + 1),
        ))

    @cached_property
    def cell_nodes(self) -> np.ndarray:
        """(n_cells, 4) node indices: bottom-left, bottom-right, top-left, top-right."""
        i, j = self.cell_ij
        return np.column_stack((
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i, j + 1),
            self.node_index(i + 1, j + 1),
        ))

    @cached_property
    def edge_cells(self) -> np.ndarray:
        """(n_edges, 2): cell on the negative side, cell on the positive side (-1 if none)."""
        out = np.full((self.n_edges, 2), -1, dtype=np.int64)
        c = np.arange(self.n_cells)
        ce = self.cell_edges
        out[ce[:, RIGHT], 0] = c
        out[ce[:, LEFT], 1] = c
        out[ce[:, TOP], 0] = c
        out[ce[:, BOTTOM], 1] = c
        return out

    @cached_property
    def edge_nodes(self) -> np.ndarray:
        """(n_edges, 2) end nodes; vertical edges bottom->top, horizontal left->right."""
        out = np.empty((self.n_edges, 2), dtype=np.int64)
        jv, iv = np.divmod(np.arange(self.n_vertical), self.n_x + 1)
        out[: self.n_vertical, 0] = self.node_index(iv, jv)
        out[: self.n_vertical, 1] = self.node_index(iv, jv + 1)
        jh, ih = np.divmod(np.arange(self.n_edges - self.n_vertical), self.n_x)
        out[self.n_vertical:, 0] = self.node_index(ih, jh)
        out[self.n_vertical:, 1] = self.node_index(ih + 1, jh)
        return out

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        out = np.full(self.n_edges, self.h_x)
        out[: self.n_vertical] = self.h_y
        return out

    @cached_property
    def edge_is_vertical(self) -> np.ndarray:
        out = np.zeros(self.n_edges, dtype=bool)
        out[: self.n_vertical] = True
        return out

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero((self.edge_cells < 0).any(axis=1))

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.edge_nodes[self.boundary_edges])

    def whole(self) -> "CellRegion":
        return CellRegion.from_cells(self, np.arange(self.n_cells))

    def box(self, i0: int, i1: int, j0: int, j1: int) -> "CellRegion":
        """Cells with i0 <= i < i1 and j0 <= j < j1, clipped to the mesh."""
        i0, j0 = max(i0, 0), max(j0, 0)
        i1, j1 = min(i1, self.n_x), min(j1, self.n_y)
        if i1 <= i0 or j1 <= j0:
            raise ValueError("empty box")
        ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1))
        cells = np.sort(self.cell_index(ii, jj).ravel())
        return CellRegion.from_cells(self, cells, bounds=(i0, i1, j0, j1))


def build_cartesian_mesh(n_x: int, n_y: int) -> FineMesh:
    return FineMesh(n_x, n_y)


@dataclass(frozen=True, eq=False)
class CellRegion:
    """A set of mesh cells; ``bounds`` is set for rectangular boxes."""

    mesh: FineMesh
    cells: np.ndarray
    bounds: tuple[int, int, int, int] | None = None
    _mask: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_cells(cls, mesh, cells, bounds=None):
        cells = np.unique(np.asarray(cells, dtype=np.int64))
        if cells.size == 0:
            raise ValueError("empty region")
        if cells[0] < 0 or cells[-1] >= mesh.n_cells:
            raise ValueError("cell index out of range")
        mask = np.zeros(mesh.n_cells, dtype=bool)
        mask[cells] = True
        cells.setflags(write=False)
        mask.setflags(write=False)
        return cls(mesh, cells, bounds, mask)

    @classmethod
    def from_mask(cls, mesh, mask):
        return cls.from_cells(mesh, np.flatnonzero(mask))

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def n_cells(self) -> int:
        return self.cells.size

    @property
    def area(self) -> float:
        return self.cells.size * self.mesh.cell_area

    def contains(self, other: "CellRegion") -> bool:
        return bool(self.mask[other.cells].all())

    @cached_property
    def _edge_incidence(self) -> np.ndarray:
        ec = self.mesh.edge_cells
        inside = np.where(ec >= 0, self.mask[np.maximum(ec, 0)], False)
        return inside.sum(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        """All edges incident to a region cell, sorted."""
        return np.flatnonzero(self._edge_incidence > 0)

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self._edge_incidence == 2)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self._edge_incidence == 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.unique(self.mesh.cell_nodes[self.cells])

    @cached_property
    def outward_sign(self) -> np.ndarray:
        """Outward normal of the region relative to the global normal, per boundary edge."""
        ec = self.mesh.edge_cells[self.boundary_edges]
        neg_inside = (ec[:, 0] >= 0) & self.mask[np.maximum(ec[:, 0], 0)]
        return np.where(neg_inside, 1.0, -1.0)


def region_boundary_split(mesh: FineMesh, region: CellRegion) -> tuple[np.ndarray, np.ndarray]:
    """Split the region boundary edges into (on the domain boundary, inside the domain)."""
    if region.n_cells == 0:
        raise ValueError("empty region")
    be = region.boundary_edges
    on_domain = (mesh.edge_cells[be] < 0).any(axis=1)
    return be[on_domain], be[~on_domain]
