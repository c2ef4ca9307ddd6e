"""Direct solvers shared by every stage of the method."""
from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    pass


class SpdFactor:
    """Reusable factorization of a symmetric positive definite matrix.

    Sparse input is factored by SuperLU with a symmetric ordering and no
    off-diagonal pivoting, so the pivots are those of LDL^T and a nonpositive
    pivot exposes an indefinite matrix. Dense input goes through Cholesky.
    """

    def __init__(self, A):
        self.n = A.shape[0]
        self.solves = 0
        self._lock = threading.Lock()
        if sp.issparse(A):
            A = sp.csc_matrix(A)
            try:
                self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                     options={"SymmetricMode": True})
            except RuntimeError as exc:
                raise SolverError(f"sparse factorization failed: {exc}") from exc
            piv = self._lu.U.diagonal()
            if not np.all(np.isfinite(piv)) or np.any(piv <= 0):
                raise SolverError("matrix is not positive definite (nonpositive pivot)")
            self._chol = None
        else:
            A = np.asarray(A, dtype=float)
            try:
                self._chol = sla.cho_factor(A)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"matrix is not positive definite: {exc}") from exc
            self._lu = None

    def solve(self, b):
        with self._lock:
            self.solves += 1
            if self._lu is not None:
                return self._lu.solve(np.asarray(b, dtype=float))
            return sla.cho_solve(self._chol, b)

    __call__ = solve


def spd_solve(A, b):
    return SpdFactor(A).solve(b)


class SaddleFactor:
    """Monolithic factorization of ``[[A, -D^T], [D, Cs]]`` for displacement/pressure pairs.

    ``Cs`` is the pressure block after scaling by the time step (e.g. ``C + tau*B``).
    """

    def __init__(self, A, D, Cs):
        self.n_u = A.shape[0]
        self.n_p = Cs.shape[0]
        sparse = sp.issparse(A) or sp.issparse(D) or sp.issparse(Cs)
        if sparse:
            K = sp.bmat([[sp.csc_matrix(A), -sp.csc_matrix(D).T],
                         [sp.csc_matrix(D), sp.csc_matrix(Cs)]], format="csc")
            try:
                self._lu = spla.splu(K)
            except RuntimeError as exc:
                raise SolverError(self._diagnose(A, D, Cs, str(exc))) from exc
            self._solve = self._lu.solve
        else:
            K = np.block([[A, -D.T], [D, Cs]])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(K, check_finite=True)
            if np.any(np.abs(np.diag(lu)) < 1e-14 * np.abs(np.diag(lu)).max()):
                raise SolverError(self._diagnose(A, D, Cs, "zero pivot"))
            self._solve = lambda r: sla.lu_solve((lu, piv), r)
        self.K = K
        self._lock = threading.Lock()

    @staticmethod
    def _diagnose(A, D, Cs, msg):
        try:
            SpdFactor(A)
        except SolverError:
            return f"singular saddle system: displacement block A is not SPD ({msg})"
        return f"singular saddle system: pressure Schur complement block is singular ({msg})"

    def solve(self, r_u, r_p):
        rhs = np.concatenate([np.asarray(r_u, dtype=float), np.asarray(r_p, dtype=float)])
        with self._lock:
            x = self._solve(rhs)
        return x[:self.n_u], x[self.n_u:]


def saddle_solve(A, D, Cs, r_u, r_p):
    return SaddleFactor(A, D, Cs).solve(r_u, r_p)


@dataclass
class EigResult:
    values: np.ndarray
    vectors: np.ndarray


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


def gen_eig_sym(A, S, k: int | None = None, largest: bool = False) -> EigResult:
    """Extreme eigenpairs of ``A v = lam S v``; vectors are S-orthonormal.

    Returns the ``k`` smallest in ascending order (or the ``k`` largest, still
    ascending, with ``largest=True``).
    """
    A, S = _dense(A), _dense(S)
    n = A.shape[0]
    k = n if k is None else k
    if not 0 <= k <= n:
        raise ValueError(f"requested {k} eigenpairs of an order-{n} problem")
    if k == 0:
        return EigResult(np.zeros(0), np.zeros((n, 0)))
    A = 0.5 * (A + A.T)
    S = 0.5 * (S + S.T)
    idx = [n - k, n - 1] if largest else [0, k - 1]
    try:
        w, V = sla.eigh(A, S, subset_by_index=idx)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"right-hand matrix not positive definite on this space: {exc}") from exc
    return EigResult(w, V)


def subspace_cos_angle(G11, G12, G22) -> float:
    """Cosine of the smallest principal angle between two subspaces.

    Inputs are the Gram matrices of the two bases and their cross-Gram in a
    common inner product. Equals ``sqrt(lambda_max(G11^-1 G12 G22^-1 G12^T))``.
    """
    G11, G12, G22 = _dense(G11), _dense(G12), _dense(G22)
    try:
        L1 = np.linalg.cholesky(0.5 * (G11 + G11.T))
        L2 = np.linalg.cholesky(0.5 * (G22 + G22.T))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"Gram matrix not positive definite: {exc}") from exc
    X = sla.solve_triangular(L1, G12, lower=True)
    X = sla.solve_triangular(L2, X.T, lower=True).T
    if X.size == 0:
        return 0.0
    s = np.linalg.svd(X, compute_uv=False)
    return float(min(max(s[0], 0.0), 1.0))
