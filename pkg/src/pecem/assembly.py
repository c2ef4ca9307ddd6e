"""P1 assembly of the poroelastic forms with Dirichlet dof elimination.

All coefficients are constant per fine cell, so every bilinear form is
integrated exactly. Displacement dofs are interleaved: ``2k`` is the x-component
and ``2k + 1`` the y-component of interior node ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .coeff import CoefficientField, PhysicsConstants
from .grid import GridPair, StructuredGrid, coarse_hat_functions

_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


@dataclass(frozen=True)
class DofMap:
    grid: StructuredGrid

    @cached_property
    def p_of_node(self) -> np.ndarray:
        """Pressure dof of each fine node, -1 on the Dirichlet boundary."""
        m = np.full(self.grid.n_nodes, -1, dtype=np.int64)
        m[self.grid.interior_nodes] = np.arange(self.grid.interior_nodes.size)
        return m

    @property
    def n_p(self) -> int:
        return int(self.grid.interior_nodes.size)

    @property
    def n_u(self) -> int:
        return 2 * self.n_p

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.grid.boundary_mask

    def p_dofs(self, nodes) -> np.ndarray:
        d = self.p_of_node[np.asarray(nodes)]
        return d[d >= 0]

    def u_dofs(self, nodes) -> np.ndarray:
        p = self.p_dofs(nodes)
        return np.column_stack([2 * p, 2 * p + 1]).ravel()

    def expand_p(self, p: np.ndarray) -> np.ndarray:
        """Nodal values on all fine nodes (zero on the boundary)."""
        out = np.zeros(self.grid.n_nodes)
        out[self.grid.interior_nodes] = p
        return out

    def expand_u(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.expand_p(u[0::2]), self.expand_p(u[1::2])


def p1_geometry(grid: StructuredGrid):
    """Areas and constant basis gradients ``G[t, a, :]`` of every fine triangle."""
    p = grid.nodes[grid.triangles]
    area = grid.signed_areas()
    if np.any(area <= 0):
        raise ValueError("degenerate or inverted triangle in mesh")
    # gradient of barycentric coordinate a: rotated opposite edge / (2 area)
    G = np.empty((grid.n_triangles, 3, 2))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        e = p[:, c] - p[:, b]
        G[:, a, 0] = -e[:, 1] / (2 * area)
        G[:, a, 1] = e[:, 0] / (2 * area)
    return area, G


def strain_matrices(G: np.ndarray) -> np.ndarray:
    """Voigt strain-displacement matrices (exx, eyy, 2exy) for interleaved local dofs."""
    nt = G.shape[0]
    Bm = np.zeros((nt, 3, 6))
    Bm[:, 0, 0::2] = G[:, :, 0]
    Bm[:, 1, 1::2] = G[:, :, 1]
    Bm[:, 2, 0::2] = G[:, :, 1]
    Bm[:, 2, 1::2] = G[:, :, 0]
    return Bm


@dataclass
class ElementData:
    """Per-triangle local matrices; global forms are sums over triangle subsets."""

    grid: StructuredGrid
    dofmap: DofMap
    a: np.ndarray      # (nt, 6, 6) elasticity
    b: np.ndarray      # (nt, 3, 3) Darcy
    c: np.ndarray      # (nt, 3, 3) scaled mass
    d: np.ndarray      # (nt, 3, 6) coupling, rows pressure
    s1: np.ndarray     # (nt, 6, 6) tildesigma-weighted mass
    s2: np.ndarray     # (nt, 3, 3) tildekappa-weighted mass
    m: np.ndarray      # (nt, 3, 3) plain mass
    _p_idx: np.ndarray = field(init=False, repr=False)
    _u_idx: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pmap = self.dofmap.p_of_node[self.grid.triangles]
        self._p_idx = pmap
        u = np.empty((pmap.shape[0], 6), dtype=np.int64)
        u[:, 0::2] = np.where(pmap >= 0, 2 * pmap, -1)
        u[:, 1::2] = np.where(pmap >= 0, 2 * pmap + 1, -1)
        self._u_idx = u

    def _scatter(self, local, rows_idx, cols_idx, n_rows, n_cols, tris=None):
        if tris is not None:
            local, rows_idx, cols_idx = local[tris], rows_idx[tris], cols_idx[tris]
        R = np.broadcast_to(rows_idx[:, :, None], local.shape)
        C = np.broadcast_to(cols_idx[:, None, :], local.shape)
        keep = (R >= 0) & (C >= 0)
        return sp.csr_matrix((local[keep], (R[keep], C[keep])), shape=(n_rows, n_cols))

    def form(self, name: str, tris=None) -> sp.csr_matrix:
        """Assemble form ``name`` over all triangles or the subset ``tris``."""
        local = getattr(self, name)
        n_p, n_u = self.dofmap.n_p, self.dofmap.n_u
        if name in ("a", "s1"):
            return self._scatter(local, self._u_idx, self._u_idx, n_u, n_u, tris)
        if name == "d":
            return self._scatter(local, self._p_idx, self._u_idx, n_p, n_u, tris)
        return self._scatter(local, self._p_idx, self._p_idx, n_p, n_p, tris)

    def full_mass(self) -> sp.csr_matrix:
        """Plain mass matrix on all fine nodes (no Dirichlet elimination)."""
        tri = self.grid.triangles
        R = np.broadcast_to(tri[:, :, None], self.m.shape)
        C = np.broadcast_to(tri[:, None, :], self.m.shape)
        n = self.grid.n_nodes
        return sp.csr_matrix((self.m.ravel(), (R.ravel(), C.ravel())), shape=(n, n))


@dataclass
class FormSet:
    gp: GridPair
    dofmap: DofMap
    elements: ElementData
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    D: sp.csr_matrix
    S1: sp.csr_matrix
    S2: sp.csr_matrix
    MP: sp.csr_matrix
    physics: PhysicsConstants
    field: CoefficientField
    weight_sigma: np.ndarray = field(repr=False)
    weight_kappa: np.ndarray = field(repr=False)


def partition_gradient_weight(gp: GridPair, chi=None) -> np.ndarray:
    """Sum over coarse hats of |grad chi_i|^2 on each fine triangle."""
    if chi is None:
        chi = coarse_hat_functions(gp)
    grid = gp.fine
    _, G = p1_geometry(grid)
    nt, tri = grid.n_triangles, grid.triangles
    rows = np.repeat(np.arange(nt), 3)
    out = np.zeros(nt)
    for k in range(2):
        Gk = sp.csr_matrix((G[:, :, k].ravel(), (rows, tri.ravel())), shape=(nt, grid.n_nodes))
        gk = (Gk @ chi).tocsr()
        out += np.asarray(gk.multiply(gk).sum(axis=1)).ravel()
    return out


def assemble_forms(gp: GridPair, field_: CoefficientField, pc: PhysicsConstants,
                   chi=None) -> FormSet:
    grid = gp.fine
    if field_.E.size != grid.n_cells:
        raise ValueError(f"coefficient field has {field_.E.size} cells, grid has {grid.n_cells}")
    if field_.nu_p != pc.nu_p:
        raise ValueError(f"Poisson ratio mismatch: field {field_.nu_p}, physics {pc.nu_p}")
    dm = DofMap(grid)
    area, G = p1_geometry(grid)
    cell = grid.triangle_cell
    lam, mu, kap = field_.lam[cell], field_.mu[cell], field_.kappa[cell]

    Bm = strain_matrices(G)
    Dm = np.zeros((grid.n_triangles, 3, 3))
    Dm[:, 0, 0] = Dm[:, 1, 1] = lam + 2 * mu
    Dm[:, 0, 1] = Dm[:, 1, 0] = lam
    Dm[:, 2, 2] = mu
    a = area[:, None, None] * np.einsum("tki,tkl,tlj->tij", Bm, Dm, Bm)

    GG = np.einsum("tad,tbd->tab", G, G)
    b = (area * kap / pc.nu)[:, None, None] * GG
    m = area[:, None, None] * _MASS_REF
    c = m / pc.M
    div = np.empty((grid.n_triangles, 6))
    div[:, 0::2] = G[:, :, 0]
    div[:, 1::2] = G[:, :, 1]
    d = (pc.alpha * area / 3.0)[:, None, None] * np.broadcast_to(div[:, None, :], (grid.n_triangles, 3, 6))

    grad_chi = partition_gradient_weight(gp, chi)
    w_sigma = (lam + 2 * mu) * grad_chi
    w_kappa = kap / pc.nu * grad_chi
    s2 = w_kappa[:, None, None] * m
    s1 = np.zeros((grid.n_triangles, 6, 6))
    s1[:, 0::2, 0::2] = w_sigma[:, None, None] * m
    s1[:, 1::2, 1::2] = w_sigma[:, None, None] * m

    el = ElementData(grid, dm, a, b, c, np.ascontiguousarray(d), s1, s2, m)
    return FormSet(gp, dm, el, el.form("a"), el.form("b"), el.form("c"), el.form("d"),
                   el.form("s1"), el.form("s2"), el.form("m"), pc, field_, w_sigma, w_kappa)


def assemble_load(gp: GridPair, f, t: float = 0.0) -> np.ndarray:
    """Load vector of ``f(t, x, y)`` against interior hats, edge-midpoint quadrature."""
    grid = gp.fine if isinstance(gp, GridPair) else gp
    p = grid.nodes[grid.triangles]
    area = grid.signed_areas()
    # midpoint opposite to vertex a is (p_b + p_c)/2; hat a is 1/2 at the two other midpoints
    mids = np.stack([(p[:, (a + 1) % 3] + p[:, (a + 2) % 3]) / 2 for a in range(3)], axis=1)
    fv = np.asarray(f(t, mids[..., 0], mids[..., 1]), dtype=float)
    fv = np.broadcast_to(fv, mids.shape[:2])
    total = fv.sum(axis=1, keepdims=True)
    local = (area / 3.0)[:, None] * 0.5 * (total - fv)
    full = np.bincount(grid.triangles.ravel(), weights=local.ravel(), minlength=grid.n_nodes)
    return full[grid.interior_nodes]


def interpolate(gp: GridPair, g, t: float = 0.0) -> np.ndarray:
    """Nodal values of ``g(t, x, y)`` at interior fine nodes."""
    grid = gp.fine
    x, y = grid.nodes[grid.interior_nodes].T
    return np.broadcast_to(np.asarray(g(t, x, y), dtype=float), x.shape).copy()
