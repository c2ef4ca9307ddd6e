"""Coarse time steppers in reduced coordinates.

Three methods share one :class:`ReducedSystem`: backward Euler on
V_H x Q_{H,1}, backward Euler on V_H x (Q_{H,1} + Q_{H,2}), and the partially
explicit splitting that treats Q_{H,1} implicitly and Q_{H,2} explicitly.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import FormSet, assemble_load, interpolate
from .cem import MultiscaleSpace
from .fine import TimeGrid, Trajectory
from .linalg import SaddleFactor, SolverError, SpdFactor

log = logging.getLogger(__name__)

MAX_BASIS_CONDITION = 1e14


def _congruence(R, M, S=None):
    S = R if S is None else S
    out = R.T @ M @ S
    return out.toarray() if sp.issparse(out) else np.asarray(out)


def _as_sparse(X):
    if isinstance(X, MultiscaleSpace):
        X = X.basis
    return sp.csc_matrix(X)


@dataclass
class ReducedSystem:
    forms: FormSet
    Rv: sp.csc_matrix
    R1: sp.csc_matrix
    R2: sp.csc_matrix
    A: np.ndarray
    B11: np.ndarray
    B12: np.ndarray
    B22: np.ndarray
    C11: np.ndarray
    C12: np.ndarray
    C22: np.ndarray
    D1: np.ndarray   # Q_{H,1} rows x V_H columns
    D2: np.ndarray   # Q_{H,2} rows x V_H columns
    _factors: dict = field(default_factory=dict, repr=False)

    @property
    def n_v(self) -> int:
        return self.A.shape[0]

    @property
    def n1(self) -> int:
        return self.B11.shape[0]

    @property
    def n2(self) -> int:
        return self.B22.shape[0]

    @property
    def has_q2(self) -> bool:
        return self.n2 > 0

    @property
    def Rq(self) -> sp.csc_matrix:
        return sp.hstack([self.R1, self.R2], format="csc")

    def blocks_q(self, with_q2: bool):
        """Pressure blocks (B, C, D) on Q_{H,1} or on Q_{H,1} + Q_{H,2}."""
        if not with_q2:
            return self.B11, self.C11, self.D1
        B = np.block([[self.B11, self.B12], [self.B12.T, self.B22]])
        C = np.block([[self.C11, self.C12], [self.C12.T, self.C22]])
        return B, C, np.vstack([self.D1, self.D2])

    def loads(self, source, t):
        F = assemble_load(self.forms.gp, source, t)
        return self.R1.T @ F, self.R2.T @ F

    def factor(self, key, tau, builder):
        k = (key, tau)
        if k not in self._factors:
            self._factors[k] = builder()
        return self._factors[k]

    def prolong(self, U, P1, P2=None):
        p = self.R1 @ P1
        if P2 is not None and self.has_q2:
            p = p + self.R2 @ P2
        return self.Rv @ U, p


def reduce(forms: FormSet, V_H, Q1, Q2=None) -> ReducedSystem:
    """Galerkin projection of all forms onto the multiscale bases."""
    Rv, R1 = _as_sparse(V_H), _as_sparse(Q1)
    R2 = _as_sparse(Q2) if Q2 is not None else sp.csc_matrix((R1.shape[0], 0))
    A = _congruence(Rv, forms.A)
    for name, R, M in (("V_H", Rv, forms.A), ("Q_H1", R1, forms.B),
                       ("Q_H1+Q_H2", sp.hstack([R1, R2]), forms.B)):
        G = _congruence(R, M)
        if G.shape[0] == 0:
            continue
        w = np.linalg.eigvalsh(0.5 * (G + G.T))
        cond = w[-1] / w[0] if w[0] > 0 else np.inf
        if not cond < MAX_BASIS_CONDITION:
            raise SolverError(f"{name} basis is rank deficient (Gram condition {cond:.3g})")
    return ReducedSystem(
        forms, Rv, R1, R2, A,
        _congruence(R1, forms.B), _congruence(R1, forms.B, R2), _congruence(R2, forms.B),
        _congruence(R1, forms.C), _congruence(R1, forms.C, R2), _congruence(R2, forms.C),
        _congruence(R1, forms.D, Rv), _congruence(R2, forms.D, Rv),
    )


@dataclass
class SplitState:
    U1: np.ndarray
    U2: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    dU1: np.ndarray
    dU2: np.ndarray
    dP1: np.ndarray
    dP2: np.ndarray
    n: int = 0

    @classmethod
    def cold(cls, U1, U2, P1, P2, n=0):
        z = np.zeros_like
        return cls(U1, U2, P1, P2, z(U1), z(U2), z(P1), z(P2), n)

    @property
    def U(self):
        return self.U1 + self.U2

    def copy(self):
        return SplitState(*(np.array(getattr(self, k)) for k in
                            ("U1", "U2", "P1", "P2", "dU1", "dU2", "dP1", "dP2")), self.n)


def b_projection(rs: ReducedSystem, p0_fine, with_q2: bool = True):
    """Coordinates of the b-orthogonal projection of a fine pressure onto Q_H."""
    B, _, _ = rs.blocks_q(with_q2 and rs.has_q2)
    R = rs.Rq if (with_q2 and rs.has_q2) else rs.R1
    rhs = R.T @ (rs.forms.B @ p0_fine)
    try:
        return SpdFactor(B).solve(rhs)
    except SolverError as exc:
        raise SolverError(f"coupled pressure Gram is singular: {exc}") from exc


def _elasticity(rs: ReducedSystem):
    return rs.factor("A", 0.0, lambda: SpdFactor(rs.A))


def initial_split_state(p0, rs: ReducedSystem) -> SplitState:
    """Initial split state from ``p0(x, y)`` (or a fine nodal vector)."""
    p0_fine = p0 if isinstance(p0, np.ndarray) else interpolate(rs.forms.gp, lambda t, x, y: p0(x, y))
    P = b_projection(rs, p0_fine, with_q2=True)
    P1, P2 = P[:rs.n1], P[rs.n1:]
    Afac = _elasticity(rs)
    U1 = Afac.solve(rs.D1.T @ P1)
    U2 = Afac.solve(rs.D2.T @ P2) if rs.has_q2 else np.zeros(rs.n_v)
    return SplitState.cold(U1, U2, P1, P2)


def initial_coarse_state(p0, rs: ReducedSystem, with_q2: bool):
    p0_fine = p0 if isinstance(p0, np.ndarray) else interpolate(rs.forms.gp, lambda t, x, y: p0(x, y))
    P = b_projection(rs, p0_fine, with_q2=with_q2)
    _, _, D = rs.blocks_q(with_q2)
    return _elasticity(rs).solve(D.T @ P), P


def step_implicit_coarse(U, P, rs: ReducedSystem, F_next, tau: float, with_q2: bool, n: int = -1):
    """One backward-Euler step; ``F_next`` is the reduced load at t_{n+1}."""
    B, C, D = rs.blocks_q(with_q2)
    fac = rs.factor(("implicit", with_q2), tau, lambda: SaddleFactor(rs.A, D, C + tau * B))
    try:
        return fac.solve(np.zeros_like(U), tau * F_next + D @ U + C @ P)
    except (RuntimeError, ValueError) as exc:
        raise SolverError(f"implicit coarse step {n} failed: {exc}") from exc


class InstabilityError(FloatingPointError):
    pass


def step_split(s: SplitState, rs: ReducedSystem, F1, F2, tau: float, report=None) -> SplitState:
    """Partially explicit step; ``F1``, ``F2`` are reduced loads at t_n.

    With an empty Q_{H,2} only stage 1 remains, which is backward Euler on
    V_H x Q_{H,1} with the load lagged to t_n.

    Stage 1 (implicit in Q_{H,1}), with dX = lagged difference and everything
    multiplied through by tau:
        A U1' - D1^T P1' = 0
        D1 U1' + (C11 + tau B11) P1' = tau F1 + D1 U1 + C11 P1 - D1 dU2 - C12 dP2 - tau B12 P2
    Stage 2 (explicit in the b-term on Q_{H,2}):
        A U2' - D2^T P2' = 0
        D2 U2' + C22 P2' = tau F2 + D2 U2 + C22 P2 - D2 dU1 - C12^T dP1 - tau (B12^T P1' + B22 P2)
    """
    f1 = rs.factor("split1", tau, lambda: SaddleFactor(rs.A, rs.D1, rs.C11 + tau * rs.B11))
    r1 = (tau * F1 + rs.D1 @ s.U1 + rs.C11 @ s.P1 - rs.D1 @ s.dU2 - rs.C12 @ s.dP2
          - tau * (rs.B12 @ s.P2))
    _guard(s.n + 1, tau, report, r1)
    U1, P1 = f1.solve(np.zeros(rs.n_v), r1)
    if rs.has_q2:
        f2 = rs.factor("split2", tau, lambda: SaddleFactor(rs.A, rs.D2, rs.C22))
        r2 = (tau * F2 + rs.D2 @ s.U2 + rs.C22 @ s.P2 - rs.D2 @ s.dU1 - rs.C12.T @ s.dP1
              - tau * (rs.B12.T @ P1 + rs.B22 @ s.P2))
        _guard(s.n + 1, tau, report, r2)
        U2, P2 = f2.solve(np.zeros(rs.n_v), r2)
    else:
        U2, P2 = s.U2, s.P2
    _guard(s.n + 1, tau, report, U1, U2, P1, P2)
    return SplitState(U1, U2, P1, P2, U1 - s.U1, U2 - s.U2, P1 - s.P1, P2 - s.P2, s.n + 1)


def _guard(n, tau, report, *arrays):
    if all(np.all(np.isfinite(x)) for x in arrays):
        return
    msg = f"split scheme produced non-finite values at step {n}"
    if report is not None:
        msg += f"; tau={tau:.3g} vs tau_max={report.tau_max:.3g} (verdict {report.verdict})"
    raise InstabilityError(msg)


@dataclass
class LyapunovTrace:
    energy: np.ndarray
    budget: np.ndarray
    flags: np.ndarray

    @property
    def ok(self) -> bool:
        return not self.flags.any()


def lyapunov_trace(states, rs: ReducedSystem, gamma_a: float, gamma_c: float, tau: float,
                   source_norms=None, slack: float = 1e-12) -> LyapunovTrace:
    """Per-step stability functional of the splitting scheme.

    E_n = sum_i (gamma_c |P_i^n - P_i^{n-1}|_c^2 + gamma_a |U_i^n - U_i^{n-1}|_a^2) + tau |P^n|_b^2
    and the source budget 2 tau^2 / (1 - gamma_c) |M^{1/2} f^n|^2 per step.
    """
    B, C, _ = rs.blocks_q(True)
    E = []
    for s in states:
        P = np.concatenate([s.P1, s.P2])
        e = (gamma_c * (s.dP1 @ rs.C11 @ s.dP1 + s.dP2 @ rs.C22 @ s.dP2)
             + gamma_a * (s.dU1 @ rs.A @ s.dU1 + s.dU2 @ rs.A @ s.dU2)
             + tau * P @ B @ P)
        E.append(e)
    E = np.array(E)
    if source_norms is None:
        budget = np.zeros(max(len(E) - 1, 0))
    else:
        budget = 2 * tau ** 2 / (1 - gamma_c) * np.asarray(source_norms, dtype=float)[:len(E) - 1]
    flags = E[1:] > E[:-1] + budget + slack
    return LyapunovTrace(E, budget, flags)


def source_norms(rs: ReducedSystem, source, time: TimeGrid, M: float):
    """M |f(t_n)|^2 in L2 (nodal interpolant, mass form) for n = 0..N-1."""
    out = []
    for n in range(time.N):
        fv = interpolate(rs.forms.gp, source, time.t(n))
        out.append(float(M * fv @ (rs.forms.MP @ fv)))
    return out


def empirical_gamma_a(states, rs: ReducedSystem) -> float:
    """Largest a-cosine between the displacement increments of the two stages.

    The subspace cosine of the two displacement ranges is 1 (both fill V_H), so
    the per-trajectory value max |a(dU1, dU2)| / (|dU1|_a |dU2|_a) is used.
    """
    g = 0.0
    for s in states[1:]:
        n1 = float(s.dU1 @ rs.A @ s.dU1)
        n2 = float(s.dU2 @ rs.A @ s.dU2)
        if n1 > 0 and n2 > 0:
            g = max(g, abs(float(s.dU1 @ rs.A @ s.dU2)) / np.sqrt(n1 * n2))
    return min(g, 1.0)


def run_implicit(rs: ReducedSystem, time: TimeGrid, source, p0, with_q2: bool,
                 stride: int = 1, method: str | None = None) -> Trajectory:
    method = method or ("cem_q2" if with_q2 else "cem")
    U, P = initial_coarse_state(p0, rs, with_q2)
    n1 = rs.n1
    traj = Trajectory(method, time)

    def save(n):
        P1, P2 = P[:n1], (P[n1:] if with_q2 else None)
        traj.append(n, *rs.prolong(U, P1, P2))

    save(0)
    for n in range(time.N):
        F1, F2 = rs.loads(source, time.t(n + 1))
        F = np.concatenate([F1, F2]) if with_q2 else F1
        U, P = step_implicit_coarse(U, P, rs, F, time.tau, with_q2, n)
        if (n + 1) % stride == 0 or n + 1 == time.N:
            save(n + 1)
    return traj


def run_split(rs: ReducedSystem, time: TimeGrid, source, p0, stride: int = 1, report=None,
              keep_states: bool = False, method: str = "split"):
    if report is not None and report.verdict != "PASS":
        warnings.warn(f"time step {time.tau:.3g} exceeds the sufficient CFL bound "
                      f"{report.tau_max:.3g}", RuntimeWarning, stacklevel=2)
    s = initial_split_state(p0, rs)
    traj = Trajectory(method, time)
    states = [s.copy()] if keep_states else None
    traj.append(0, *rs.prolong(s.U, s.P1, s.P2))
    for n in range(time.N):
        F1, F2 = rs.loads(source, time.t(n))
        s = step_split(s, rs, F1, F2, time.tau, report)
        if keep_states:
            states.append(s.copy())
        if (n + 1) % stride == 0 or n + 1 == time.N:
            traj.append(n + 1, *rs.prolong(s.U, s.P1, s.P2))
    return (traj, states) if keep_states else traj
