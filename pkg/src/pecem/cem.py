"""Constraint energy minimizing multiscale spaces V_H and Q_{H,1}.

Auxiliary functions live on a single closed coarse element and are zero
elsewhere, so they are stored element-locally. A function restricted to all
elements at once is a *broken* vector: the concatenation over elements of its
values on each element's dof patch. Global s-products of auxiliary functions
are sums of element-local products, which makes the auxiliary Gram block
diagonal and the projections exactly idempotent.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import FormSet
from .grid import GridPair
from .linalg import SolverError, SpdFactor, gen_eig_sym

GLOBAL_BASIS_MAX_CELLS = 64


@dataclass
class LocalSpectralSpace:
    """Element-local eigenpairs of one field (displacement or pressure)."""

    kind: str                 # "V" or "Q"
    n: int                    # global fine dof count of the field
    dofs: list                # per element: global dof indices of the closed patch
    values: list              # per element: ascending eigenvalues kept
    vectors: list             # per element: (n_i, J) local eigenvectors, s_i-orthonormal
    smats: list = field(repr=False)  # per element: dense local s_i
    owner: np.ndarray = field(init=False)
    local_index: np.ndarray = field(init=False)
    offsets: np.ndarray = field(init=False)
    P: sp.csc_matrix = field(init=False, repr=False)   # columns v_j^i embedded
    W: sp.csc_matrix = field(init=False, repr=False)   # columns s_i v_j^i embedded

    def __post_init__(self):
        counts = [v.shape[1] for v in self.vectors]
        self.owner = np.repeat(np.arange(len(counts)), counts)
        self.local_index = np.concatenate([np.arange(c) for c in counts]).astype(int)
        self.offsets = np.concatenate([[0], np.cumsum([d.size for d in self.dofs])])
        self.P = self._embed(self.vectors)
        self.W = self._embed([S @ V for S, V in zip(self.smats, self.vectors)])

    def _embed(self, blocks) -> sp.csc_matrix:
        rows, cols, vals = [], [], []
        col = 0
        for d, V in zip(self.dofs, blocks):
            J = V.shape[1]
            rows.append(np.repeat(d, J))
            cols.append(np.tile(np.arange(col, col + J), d.size))
            vals.append(V.ravel())
            col += J
        return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(self.n, col))

    @property
    def n_aux(self) -> int:
        return self.owner.size

    @property
    def n_broken(self) -> int:
        return int(self.offsets[-1])

    def columns_of(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.owner == i)

    def restrict(self, v) -> np.ndarray:
        """Conforming fine vector -> broken vector."""
        return np.concatenate([np.asarray(v)[d] for d in self.dofs])

    def block(self, w, i: int) -> np.ndarray:
        return w[self.offsets[i]:self.offsets[i + 1]]

    def aux_broken(self, k: int) -> np.ndarray:
        """Auxiliary function number ``k`` as a broken vector."""
        i, j = self.owner[k], self.local_index[k]
        w = np.zeros(self.n_broken)
        w[self.offsets[i]:self.offsets[i + 1]] = self.vectors[i][:, j]
        return w

    def coefficients(self, v, broken: bool = False) -> np.ndarray:
        """s_i(v, v_j^i) for every auxiliary function."""
        if not broken:
            return self.W.T @ np.asarray(v)
        return np.concatenate([(S @ V).T @ self.block(v, i)
                               for i, (S, V) in enumerate(zip(self.smats, self.vectors))])

    def s_inner(self, v, w) -> float:
        """Global s-product of two broken vectors."""
        return float(sum(self.block(v, i) @ (S @ self.block(w, i))
                         for i, S in enumerate(self.smats)))


@dataclass
class AuxiliarySpace:
    disp: LocalSpectralSpace
    pres: LocalSpectralSpace

    def field(self, which) -> LocalSpectralSpace:
        if which in (1, "V", "disp"):
            return self.disp
        if which in (2, "Q", "Q1", "pres"):
            return self.pres
        raise ValueError(f"unknown auxiliary field {which!r}")


@dataclass
class MultiscaleSpace:
    basis: sp.csc_matrix      # fine dofs x n_basis
    element: np.ndarray
    local_index: np.ndarray
    layers: int               # -1 for global (unlocalized) bases
    tag: str                  # "V_H", "Q_H1" or "Q_H2"
    supports: list = field(default_factory=list, repr=False)

    @property
    def n_basis(self) -> int:
        return self.basis.shape[1]

    def dense(self) -> np.ndarray:
        return self.basis.toarray()


def _local(M, dofs):
    return M[dofs][:, dofs].toarray()


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def build_auxiliary(forms: FormSet, gp: GridPair, J1: int = 2, J2: int = 2,
                    workers: int = 1) -> AuxiliarySpace:
    """Neumann-type spectral problems a_i v = lam s1_i v and b_i q = zeta s2_i q on each K_i."""
    if J1 < 1 or J2 < 1:
        raise ValueError("J1 and J2 must be >= 1")
    if J1 < 3:
        warnings.warn(f"J1={J1} is below the 3-dimensional rigid-motion kernel", stacklevel=2)
    el, dm = forms.elements, forms.dofmap

    def solve(i):
        tris = gp.element_triangles(i)
        nodes = gp.element_nodes(i)
        out = []
        for a_name, s_name, dofs, J in (("a", "s1", dm.u_dofs(nodes), J1),
                                        ("b", "s2", dm.p_dofs(nodes), J2)):
            Ai = _local(el.form(a_name, tris), dofs)
            Si = _local(el.form(s_name, tris), dofs)
            if J > dofs.size:
                raise SolverError(f"element {i}: {J} modes requested, patch has {dofs.size} dofs")
            try:
                res = gen_eig_sym(Ai, Si, J)
            except SolverError as exc:
                raise SolverError(f"element {i}: {exc}") from exc
            out.append((dofs, res.values, res.vectors, Si))
        return out

    results = _map(solve, range(gp.n_elements), workers)
    spaces = []
    for k, (kind, n) in enumerate((("V", dm.n_u), ("Q", dm.n_p))):
        spaces.append(LocalSpectralSpace(kind, n, [r[k][0] for r in results],
                                         [r[k][1] for r in results],
                                         [r[k][2] for r in results],
                                         [r[k][3] for r in results]))
    return AuxiliarySpace(*spaces)


def project_pi(aux: AuxiliarySpace, which, v, broken: bool = False) -> np.ndarray:
    """pi(v) = sum_i sum_j s_i(v, v_j^i) v_j^i, returned as a broken vector."""
    space = aux.field(which)
    c = space.coefficients(v, broken=broken)
    out = np.zeros(space.n_broken)
    for i, V in enumerate(space.vectors):
        cols = space.columns_of(i)
        out[space.offsets[i]:space.offsets[i + 1]] = V @ c[cols]
    return out


def _penalized_solve(K_loc, W_loc, cols):
    """Columns of (K + W W^T)^-1 W[:, cols] via the Woodbury identity."""
    fac = SpdFactor(sp.csc_matrix(K_loc))
    X = fac.solve(W_loc.toarray())
    if X.ndim == 1:
        X = X[:, None]
    G = W_loc.T @ X
    m = G.shape[0]
    Y = np.linalg.solve(np.eye(m) + G, np.eye(m)[:, cols])
    return X @ Y


def _fields(forms, aux, which):
    if which in ("V", "V_H", 1):
        return forms.A, aux.disp, forms.dofmap.u_dofs, "V_H"
    if which in ("Q", "Q1", "Q_H1", 2):
        return forms.B, aux.pres, forms.dofmap.p_dofs, "Q_H1"
    raise ValueError(f"unknown space {which!r}")


def _assemble_columns(n, pieces, tag, layers):
    rows, cols, vals, element, local, supports = [], [], [], [], [], []
    col = 0
    for i, dofs, Psi in pieces:
        for j in range(Psi.shape[1]):
            rows.append(dofs)
            cols.append(np.full(dofs.size, col))
            vals.append(Psi[:, j])
            element.append(i)
            local.append(j)
            supports.append(dofs)
            col += 1
    basis = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, col))
    return MultiscaleSpace(basis, np.array(element), np.array(local), layers, tag, supports)


def build_cem_basis(forms: FormSet, aux: AuxiliarySpace, gp: GridPair, ell: int,
                    which: str = "Q", workers: int = 1) -> MultiscaleSpace:
    """Localized CEM basis on the zero-trace space of each oversampled region.

    Solves a(psi, v) + s(pi psi, pi v) = s(v_j^i, pi v) (or the b/s2 analogue).
    """
    if ell < 1:
        raise ValueError("oversampling needs at least one layer")
    K, space, dof_fn, tag = _fields(forms, aux, which)

    def solve(i):
        os = gp.oversample(i, ell)
        dofs = dof_fn(os.node_set)
        if dofs.size == 0:
            raise SolverError(f"element {i}: oversampled region has no interior dofs")
        W_loc = space.W[dofs]
        active = np.flatnonzero(W_loc.getnnz(axis=0))
        W_loc = W_loc[:, active]
        cols = np.searchsorted(active, space.columns_of(i))
        Psi = _penalized_solve(K[dofs][:, dofs], W_loc, cols)
        return i, dofs, Psi

    pieces = _map(solve, range(gp.n_elements), workers)
    return _assemble_columns(space.n, pieces, tag, ell)


def build_global_basis(forms: FormSet, aux: AuxiliarySpace, which: str = "Q") -> MultiscaleSpace:
    """Unlocalized CEM basis on all interior fine dofs (small meshes only)."""
    grid = forms.gp.fine
    if max(grid.n_x, grid.n_y) > GLOBAL_BASIS_MAX_CELLS:
        raise ValueError(f"global basis refused on a {grid.n_x}x{grid.n_y} fine grid "
                         f"(limit {GLOBAL_BASIS_MAX_CELLS})")
    K, space, _, tag = _fields(forms, aux, which)
    dofs = np.arange(space.n)
    Psi = _penalized_solve(K, space.W, np.arange(space.n_aux))
    pieces = [(i, dofs, Psi[:, space.columns_of(i)]) for i in range(len(space.vectors))]
    return _assemble_columns(space.n, pieces, tag, -1)
