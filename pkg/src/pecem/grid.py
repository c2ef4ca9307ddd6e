"""Structured triangulations of the unit square and the coarse/fine hierarchy.

Nodes are numbered row-major, ``k = iy * (n_x + 1) + ix``. Cell ``c = iy * n_x + ix``
is split along its lower-left to upper-right diagonal into triangles ``2c`` and
``2c + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class StructuredGrid:
    n_x: int
    n_y: int

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError(f"cell counts must be positive, got {self.n_x}x{self.n_y}")

    @property
    def h_x(self) -> float:
        return 1.0 / self.n_x

    @property
    def h_y(self) -> float:
        return 1.0 / self.n_y

    @property
    def n_nodes(self) -> int:
        return (self.n_x + 1) * (self.n_y + 1)

    @property
    def n_cells(self) -> int:
        return self.n_x * self.n_y

    @property
    def n_triangles(self) -> int:
        return 2 * self.n_cells

    def node_index(self, ix, iy):
        return np.asarray(iy) * (self.n_x + 1) + np.asarray(ix)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.n_x + 1)
        y = np.linspace(0.0, 1.0, self.n_y + 1)
        X, Y = np.meshgrid(x, y)
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def triangles(self) -> np.ndarray:
        iy, ix = np.divmod(np.arange(self.n_cells), self.n_x)
        n00 = self.node_index(ix, iy)
        n10 = n00 + 1
        n01 = n00 + self.n_x + 1
        n11 = n01 + 1
        tri = np.empty((self.n_triangles, 3), dtype=np.int64)
        tri[0::2] = np.column_stack([n00, n10, n11])
        tri[1::2] = np.column_stack([n00, n11, n01])
        return tri

    @cached_property
    def triangle_cell(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_cells), 2)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        x, y = self.nodes.T
        return (np.isclose(x, 0) | np.isclose(x, 1) | np.isclose(y, 0) | np.isclose(y, 1))

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass(frozen=True)
class Oversample:
    element: int
    layers: int
    elements: np.ndarray  # coarse element indices, sorted
    node_set: np.ndarray  # fine nodes strictly interior to the region and to Omega
    triangle_set: np.ndarray = field(repr=False)  # fine triangles inside the region


@dataclass(frozen=True)
class GridPair:
    fine: StructuredGrid
    coarse: StructuredGrid

    def __post_init__(self):
        r = self.fine.n_x // self.coarse.n_x
        if (r < 2 or self.fine.n_x != r * self.coarse.n_x
                or self.fine.n_y != r * self.coarse.n_y):
            raise ValueError("fine grid must refine the coarse grid by an integer ratio >= 2")

    @property
    def ratio(self) -> int:
        return self.fine.n_x // self.coarse.n_x

    @property
    def H(self) -> float:
        return self.coarse.h_x

    @property
    def n_elements(self) -> int:
        return self.coarse.n_cells

    @cached_property
    def fine_cell_element(self) -> np.ndarray:
        """Coarse element owning each fine cell."""
        r = self.ratio
        iy, ix = np.divmod(np.arange(self.fine.n_cells), self.fine.n_x)
        return (iy // r) * self.coarse.n_x + ix // r

    @cached_property
    def triangle_element(self) -> np.ndarray:
        return self.fine_cell_element[self.fine.triangle_cell]

    def element_box(self, i: int) -> tuple[int, int]:
        self._check_element(i)
        ey, ex = divmod(i, self.coarse.n_x)
        return ex, ey

    def _check_element(self, i):
        if not 0 <= i < self.n_elements:
            raise IndexError(f"coarse element {i} out of range [0, {self.n_elements})")

    def _box_nodes(self, x0, x1, y0, y1, interior_only: bool) -> np.ndarray:
        """Fine nodes in the coarse box [x0, x1] x [y0, y1] (coarse cell units)."""
        r = self.ratio
        ix = np.arange(x0 * r, x1 * r + 1)
        iy = np.arange(y0 * r, y1 * r + 1)
        if interior_only:
            ix = ix[1:-1]
            iy = iy[1:-1]
        IX, IY = np.meshgrid(ix, iy)
        nodes = self.fine.node_index(IX.ravel(), IY.ravel())
        return np.sort(nodes[~self.fine.boundary_mask[nodes]])

    def element_nodes(self, i: int) -> np.ndarray:
        """Non-Dirichlet fine nodes of the closed element K_i."""
        ex, ey = self.element_box(i)
        return self._box_nodes(ex, ex + 1, ey, ey + 1, interior_only=False)

    def element_triangles(self, i: int) -> np.ndarray:
        self._check_element(i)
        return np.flatnonzero(self.triangle_element == i)

    def oversample(self, i: int, layers: int) -> Oversample:
        """Enlarge K_i by ``layers`` rings of neighbouring coarse elements."""
        if layers < 0:
            raise ValueError("layer count must be nonnegative")
        ex, ey = self.element_box(i)
        x0, x1 = max(ex - layers, 0), min(ex + layers + 1, self.coarse.n_x)
        y0, y1 = max(ey - layers, 0), min(ey + layers + 1, self.coarse.n_y)
        EX, EY = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        elements = np.sort((EY * self.coarse.n_x + EX).ravel())
        nodes = self._box_nodes(x0, x1, y0, y1, interior_only=True)
        tris = np.flatnonzero(np.isin(self.triangle_element, elements))
        return Oversample(i, layers, elements, nodes, tris)

    def prolongation(self) -> sp.csr_matrix:
        """Nodal interpolation of coarse P1 functions onto the fine grid (all nodes)."""
        r = self.ratio
        fx, fy = np.divmod(np.arange(self.fine.n_nodes), self.fine.n_x + 1)[::-1]
        cx, sx = np.divmod(fx, r)
        cy, sy = np.divmod(fy, r)
        # points on the last coarse line belong to the previous cell with local coord r
        last_x = cx == self.coarse.n_x
        cx[last_x] -= 1
        sx[last_x] = r
        last_y = cy == self.coarse.n_y
        cy[last_y] -= 1
        sy[last_y] = r
        s, t = sx / r, sy / r
        c00 = self.coarse.node_index(cx, cy)
        c10, c01 = c00 + 1, c00 + self.coarse.n_x + 1
        c11 = c01 + 1
        # lower triangle (s >= t): (00, 10, 11); upper (s < t): (00, 11, 01)
        lower = s >= t
        rows, cols, vals = [], [], []
        n = np.arange(self.fine.n_nodes)
        w00 = np.where(lower, 1 - s, 1 - t)
        w10 = np.where(lower, s - t, 0.0)
        w11 = np.where(lower, t, s)
        w01 = np.where(lower, 0.0, t - s)
        for c, w in ((c00, w00), (c10, w10), (c11, w11), (c01, w01)):
            keep = w != 0
            rows.append(n[keep])
            cols.append(c[keep])
            vals.append(w[keep])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.fine.n_nodes, self.coarse.n_nodes),
        )


def build_grid_pair(coarse_n: int, ratio: int) -> GridPair:
    if coarse_n < 1 or ratio < 1:
        raise ValueError(f"sizes must be positive, got coarse_n={coarse_n}, ratio={ratio}")
    if coarse_n < 2 or ratio < 2:
        raise ValueError(f"need coarse_n >= 2 and ratio >= 2, got {coarse_n}, {ratio}")
    return GridPair(StructuredGrid(coarse_n * ratio, coarse_n * ratio),
                    StructuredGrid(coarse_n, coarse_n))


def coarse_hat_functions(gp: GridPair) -> sp.csc_matrix:
    """Coarse P1 hats as fine nodal vectors, one column per coarse node (partition of unity)."""
    return gp.prolongation().tocsc()
