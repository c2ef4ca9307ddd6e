"""The explicitly treated pressure space Q_{H,2} and its CFL diagnostics."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import FormSet
from .cem import (AuxiliarySpace, LocalSpectralSpace, MultiscaleSpace, _assemble_columns,
                  _local, _map)
from .grid import GridPair
from .linalg import SolverError, SpdFactor, gen_eig_sym, subspace_cos_angle


def build_kernel_basis(aux: AuxiliarySpace, gp: GridPair, i: int, J2: int | None = None) -> np.ndarray:
    """s2_i-orthonormal basis of the patch functions with vanishing pi_2 projection.

    Columns are local coordinates on ``aux.pres.dofs[i]``. ``J2`` may lower the
    number of auxiliary modes removed (``J2=0`` keeps the whole patch space).
    """
    S = aux.pres.smats[i]
    Q = aux.pres.vectors[i]
    if J2 is not None:
        Q = Q[:, :J2]
    n, J = S.shape[0], Q.shape[1]
    if n <= J:
        raise SolverError(f"element {i}: patch has {n} dofs, cannot remove {J} auxiliary modes")
    N = sla.null_space((S @ Q).T) if J else np.eye(n)
    L = np.linalg.cholesky(N.T @ S @ N)
    return sla.solve_triangular(L, N.T, lower=True).T


def build_qh2_aux(forms: FormSet, aux: AuxiliarySpace, gp: GridPair, J: int = 2,
                  workers: int = 1) -> LocalSpectralSpace:
    """Smallest modes of b_i(xi, q) = gamma c(xi, q) over the element kernel space.

    The returned space stores the element-local c matrices as its inner products,
    so ``W.T @ phi`` gives c(phi, xi_j^i) for every second-type function.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    el = forms.elements

    def solve(i):
        dofs = aux.pres.dofs[i]
        tris = gp.element_triangles(i)
        Bi = _local(el.form("b", tris), dofs)
        Ci = _local(el.form("c", tris), dofs)
        K = build_kernel_basis(aux, gp, i)
        if J > K.shape[1]:
            raise SolverError(f"element {i}: kernel has dimension {K.shape[1]} < {J}")
        try:
            res = gen_eig_sym(K.T @ Bi @ K, K.T @ Ci @ K, J)
        except SolverError as exc:
            raise SolverError(f"element {i}: {exc}") from exc
        return dofs, res.values, K @ res.vectors, Ci

    results = _map(solve, range(gp.n_elements), workers)
    return LocalSpectralSpace("Q2", forms.dofmap.n_p, [r[0] for r in results],
                              [r[1] for r in results], [r[2] for r in results],
                              [r[3] for r in results])


def _constraint_solve(B_loc, Y, rhs, i):
    """Solve [[B, Y], [Y^T, 0]] [phi; mu] = [0; rhs] by the multiplier Schur complement."""
    fac = SpdFactor(sp.csc_matrix(B_loc))
    X = fac.solve(Y)
    if X.ndim == 1:
        X = X[:, None]
    G = Y.T @ X
    G = 0.5 * (G + G.T)
    w = np.linalg.eigvalsh(G)
    if w[0] <= 1e-13 * w[-1]:
        raise SolverError(f"element {i}: rank-deficient constraint block "
                          f"(condition {w[-1] / max(w[0], 1e-300):.3g})")
    return X @ sla.cho_solve(sla.cho_factor(G), rhs)


def build_qh2_basis(forms: FormSet, aux: AuxiliarySpace, qaux: LocalSpectralSpace,
                    gp: GridPair, ell: int, workers: int = 1) -> MultiscaleSpace:
    """Constrained energy minimizers: for each xi_j^i find phi in Q_0(K_{i,l}) with

    b(phi, q) + s2(mu1, q) + c(mu2, q) = 0, s2(phi, Q_aux1) = 0, c(phi, xi) = c(xi_j^i, xi).
    """
    if ell < 1:
        raise ValueError("oversampling needs at least one layer")
    dm = forms.dofmap

    def solve(i):
        os = gp.oversample(i, ell)
        dofs = dm.p_dofs(os.node_set)
        W1 = aux.pres.W[dofs]
        W2 = qaux.W[dofs]
        a1 = np.flatnonzero(np.isin(aux.pres.owner, os.elements))
        a2 = np.flatnonzero(np.isin(qaux.owner, os.elements))
        Y = np.hstack([W1[:, a1].toarray(), W2[:, a2].toarray()])
        own = qaux.columns_of(i)
        rhs = np.zeros((Y.shape[1], own.size))
        rhs[a1.size + np.searchsorted(a2, own), np.arange(own.size)] = 1.0
        Phi = _constraint_solve(forms.B[dofs][:, dofs], Y, rhs, i)
        return i, dofs, Phi

    pieces = _map(solve, range(gp.n_elements), workers)
    return _assemble_columns(dm.n_p, pieces, "Q_H2", ell)


@dataclass
class StabilityReport:
    gamma_c: float
    lambda_max: float
    tau_max: float
    C1: float
    H: float
    tau: float
    verdict: str
    gamma_a: float | None = None

    def to_json(self, **meta) -> str:
        d = asdict(self)
        d.update(meta)
        return json.dumps(d, indent=2, sort_keys=True)

    def tau_bound(self) -> float:
        """tau <= C1^-2 H^2 (1 - gamma_c); equals tau_max."""
        return self.H ** 2 * (1.0 - self.gamma_c) / self.C1 ** 2


def stability_report(forms: FormSet, Q1: MultiscaleSpace, Q2: MultiscaleSpace, H: float,
                     tau: float, gamma_a: float | None = None) -> StabilityReport:
    if Q1.n_basis == 0 or Q2.n_basis == 0:
        raise ValueError("both pressure spaces must be nonempty")
    R1, R2 = Q1.basis, Q2.basis
    C = forms.C
    G11 = (R1.T @ C @ R1).toarray()
    G12 = (R1.T @ C @ R2).toarray()
    G22 = (R2.T @ C @ R2).toarray()
    gamma_c = subspace_cos_angle(G11, G12, G22)
    B22 = (R2.T @ forms.B @ R2).toarray()
    lam = float(gen_eig_sym(B22, G22, 1, largest=True).values[-1])
    if not (math.isfinite(lam) and lam > 0):
        raise SolverError(f"degenerate b/c spectrum on Q_H2 (lambda_max={lam})")
    tau_max = (1.0 - gamma_c) / lam
    verdict = "PASS" if tau <= tau_max else "FAIL"
    return StabilityReport(gamma_c, lam, tau_max, H * math.sqrt(lam), H, tau, verdict, gamma_a)
