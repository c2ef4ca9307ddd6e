import numpy as np
import pytest
import scipy.sparse as sp

from oracles import dense_forms, split_step_oracle
from pecem.assembly import assemble_load, interpolate
from pecem.fine import FineSolver, TimeGrid
from pecem.linalg import SolverError
from pecem.msstep import (InstabilityError, ReducedSystem, SplitState, b_projection,
                          empirical_gamma_a, initial_coarse_state, initial_split_state,
                          lyapunov_trace, reduce, run_implicit, run_split, step_implicit_coarse,
                          step_split)
from pecem.qh2 import StabilityReport

BUBBLE = lambda x, y: 100 * x * (1 - x) * y * (1 - y)


@pytest.fixture(scope="module")
def dense(small):
    f = small.field
    ref = dense_forms(8, f.E, f.kappa, f.nu_p, small.pc.alpha, small.pc.M, small.pc.nu)
    return ref, small.V.dense(), small.Q1.dense(), small.Q2.dense()


def random_state(rs, rng):
    z = lambda n: rng.normal(size=n)
    return SplitState(z(rs.n_v), z(rs.n_v), z(rs.n1), z(rs.n2),
                      z(rs.n_v), z(rs.n_v), z(rs.n1), z(rs.n2), 3)


def test_reduce_without_q2(small):
    rs = reduce(small.forms, small.V, small.Q1)
    assert not rs.has_q2
    for name in ("B12", "B22", "C12", "C22", "D2"):
        assert getattr(rs, name).size == 0


def test_reduce_identity_prolongation(small):
    f = small.forms
    rs = reduce(f, sp.identity(f.dofmap.n_u, format="csc"), sp.identity(f.dofmap.n_p, format="csc"))
    for red, full in ((rs.A, f.A), (rs.B11, f.B), (rs.C11, f.C), (rs.D1, f.D)):
        assert np.abs(red - full.toarray()).max() == 0


def test_reduce_congruence_and_symmetry(small, rng):
    rs = small.rs
    for R, blk, M in ((rs.R1, rs.B11, small.forms.B), (rs.R2, rs.C22, small.forms.C),
                      (rs.Rv, rs.A, small.forms.A)):
        x = rng.normal(size=blk.shape[0])
        y = R @ x
        assert x @ blk @ x == pytest.approx(y @ (M @ y), rel=1e-12)
    for blk in (rs.A, rs.B11, rs.B22, rs.C11, rs.C22):
        assert np.abs(blk - blk.T).max() <= 1e-12 * np.abs(blk).max()


def test_reduce_rejects_rank_deficient(small):
    dup = sp.hstack([small.Q1.basis, small.Q1.basis[:, :1]], format="csc")
    with pytest.raises(SolverError, match="rank deficient"):
        reduce(small.forms, small.V, dup)


def test_initial_state_zero(small):
    s = initial_split_state(lambda x, y: 0 * x, small.rs)
    for k in ("U1", "U2", "P1", "P2", "dU1", "dU2", "dP1", "dP2"):
        assert np.all(getattr(s, k) == 0)


def test_initial_state_reproduces_span(small, rng):
    rs = small.rs
    c1, c2 = rng.normal(size=rs.n1), rng.normal(size=rs.n2)
    p0 = rs.R1 @ c1 + rs.R2 @ c2
    s = initial_split_state(p0, rs)
    assert np.allclose(s.P1, c1, atol=1e-9) and np.allclose(s.P2, c2, atol=1e-9)


def test_initial_state_dense_oracle(small, dense):
    ref, Rv, R1, R2 = dense
    rs = small.rs
    R = np.hstack([R1, R2])
    p0 = interpolate(small.gp, lambda t, x, y: BUBBLE(x, y))
    P = np.linalg.solve(R.T @ ref["B"] @ R, R.T @ ref["B"] @ p0)
    s = initial_split_state(BUBBLE, rs)
    assert np.allclose(np.concatenate([s.P1, s.P2]), P, rtol=1e-9, atol=1e-9 * np.abs(P).max())
    Ar = Rv.T @ ref["A"] @ Rv
    U1 = np.linalg.solve(Ar, (R1.T @ ref["D"] @ Rv).T @ P[:rs.n1])
    assert np.allclose(s.U1, U1, rtol=1e-9, atol=1e-9 * np.abs(U1).max())


def test_implicit_zero(small):
    rs = small.rs
    U, P = step_implicit_coarse(np.zeros(rs.n_v), np.zeros(rs.n1), rs, np.zeros(rs.n1), 1e-3, False)
    assert np.all(U == 0) and np.all(P == 0)


def test_implicit_with_fine_basis_matches_fine_solver(small, rng):
    f = small.forms
    rs = reduce(f, sp.identity(f.dofmap.n_u, format="csc"), sp.identity(f.dofmap.n_p, format="csc"))
    u, p = rng.normal(size=f.dofmap.n_u), rng.normal(size=f.dofmap.n_p)
    F = assemble_load(small.gp, lambda t, x, y: 1 + x * y, 1e-3)
    Uc, Pc = step_implicit_coarse(u, p, rs, F, 1e-3, False)
    Uf, Pf = FineSolver(f, 1e-3).step(u, p, F)
    assert np.abs(Uc - Uf).max() <= 1e-10 * np.abs(Uf).max()
    assert np.abs(Pc - Pf).max() <= 1e-10 * np.abs(Pf).max()


@pytest.mark.parametrize("with_q2", [False, True])
def test_implicit_dense_oracle(small, dense, rng, with_q2):
    ref, Rv, R1, R2 = dense
    R = np.hstack([R1, R2]) if with_q2 else R1
    tau = 1e-3
    Ar = Rv.T @ ref["A"] @ Rv
    Dr, Br, Cr = R.T @ ref["D"] @ Rv, R.T @ ref["B"] @ R, R.T @ ref["C"] @ R
    U, P = rng.normal(size=Ar.shape[0]), rng.normal(size=R.shape[1])
    Ff = assemble_load(small.gp, lambda t, x, y: np.cos(x) * y, tau)
    K = np.block([[Ar, -Dr.T], [Dr / tau, Cr / tau + Br]])
    x = np.linalg.solve(K, np.concatenate([np.zeros_like(U), R.T @ Ff + (Dr @ U + Cr @ P) / tau]))
    got = np.concatenate(step_implicit_coarse(U, P, small.rs, R.T @ Ff, tau, with_q2))
    assert np.abs(got - x).max() <= 1e-10 * np.abs(x).max()


def test_split_zero_trajectory(small):
    traj = run_split(small.rs, TimeGrid(1e-5, 5), lambda t, x, y: 0 * x, lambda x, y: 0 * x)
    assert all(np.all(p == 0) for p in traj.p)


def test_split_one_step_dense_oracle(small, dense, rng):
    tau = 2e-5
    s = random_state(small.rs, rng)
    Ff = assemble_load(small.gp, lambda t, x, y: 5 + np.sin(x + y), 0.0)
    ref = split_step_oracle(dense, s, Ff, tau)
    got = step_split(s, small.rs, small.rs.R1.T @ Ff, small.rs.R2.T @ Ff, tau)
    for k in ("U1", "U2", "P1", "P2", "dU1", "dU2", "dP1", "dP2"):
        a, b = getattr(got, k), getattr(ref, k)
        assert np.abs(a - b).max() <= 1e-10 * max(np.abs(b).max(), 1e-300), k
    assert got.n == 4


def test_split_degenerate_hand_solved():
    one = lambda v: np.array([[v]])
    I1 = sp.csc_matrix(np.eye(1))
    rs = ReducedSystem(None, I1, I1, I1, one(2.0), one(1.0), one(0.0), one(3.0),
                       one(1.0), one(0.0), one(2.0), one(0.5), one(0.0))
    s = SplitState.cold(np.array([0.25]), np.array([0.0]), np.array([1.0]), np.array([1.0]))
    new = step_split(s, rs, np.array([1.0]), np.array([0.5]), 0.1)
    # stage 2: P2' = P2 + tau (F2 - B22 P2) / C22, no displacement coupling
    assert new.P2[0] == pytest.approx(0.875, rel=1e-14)
    assert new.U2[0] == 0.0
    # stage 1: (D1^2/A + C11 + tau B11) P1' = tau F1 + D1 U1 + C11 P1
    assert new.P1[0] == pytest.approx(1.0, rel=1e-14)
    assert new.U1[0] == pytest.approx(0.25, rel=1e-14)


def test_split_without_q2_matches_implicit_for_constant_source(small, rng):
    rs = reduce(small.forms, small.V, small.Q1)
    U, P = rng.normal(size=rs.n_v), rng.normal(size=rs.n1)
    s = SplitState.cold(U, np.zeros(rs.n_v), P, np.zeros(0))
    F1, _ = rs.loads(lambda t, x, y: 3.0 + 0 * x, 0.0)
    tau = 1e-4
    for _ in range(3):
        s = step_split(s, rs, F1, np.zeros(0), tau)
        U, P = step_implicit_coarse(U, P, rs, F1, tau, False)
        assert np.abs(s.P1 - P).max() <= 1e-10 * np.abs(P).max()
        assert np.abs(s.U - U).max() <= 1e-10 * np.abs(U).max()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_guard_references_report(small):
    rs = small.rs
    s = SplitState.cold(np.zeros(rs.n_v), np.zeros(rs.n_v), np.full(rs.n1, np.inf), np.zeros(rs.n2))
    rep = StabilityReport(0.5, 1.0, 0.5, 1.0, 0.5, 1.0, "FAIL")
    with pytest.raises(InstabilityError, match="tau_max"):
        step_split(s, rs, np.zeros(rs.n1), np.zeros(rs.n2), 1e-4, rep)


def test_split_warns_on_failed_verdict(small):
    rep = StabilityReport(0.5, 1e9, 1e-10, 1.0, 0.5, 1e-5, "FAIL")
    with pytest.warns(RuntimeWarning, match="CFL"):
        run_split(small.rs, TimeGrid(1e-5, 1), lambda t, x, y: 0 * x, BUBBLE, report=rep)


def test_lyapunov_zero_trajectory(small):
    rs = small.rs
    z = SplitState.cold(np.zeros(rs.n_v), np.zeros(rs.n_v), np.zeros(rs.n1), np.zeros(rs.n2))
    lt = lyapunov_trace([z, z.copy(), z.copy()], rs, 0.5, 0.5, 1e-3)
    assert np.all(lt.energy == 0) and lt.ok


def test_lyapunov_stable_below_cfl(small):
    rs, rep = small.rs, small.report
    traj, states = run_split(rs, TimeGrid(rep.tau_max, 40), lambda t, x, y: 0 * x, BUBBLE,
                             keep_states=True)
    ga = empirical_gamma_a(states, rs)
    assert 0 <= ga <= 1
    lt = lyapunov_trace(states, rs, ga, rep.gamma_c, rep.tau_max)
    assert lt.ok
    assert np.all(lt.energy >= 0)


def test_lyapunov_budget_uses_source_norms(small):
    rs = small.rs
    z = SplitState.cold(np.zeros(rs.n_v), np.zeros(rs.n_v), np.zeros(rs.n1), np.zeros(rs.n2))
    lt = lyapunov_trace([z, z], rs, 0.0, 0.5, 0.1, source_norms=[2.0])
    assert lt.budget.tolist() == [pytest.approx(2 * 0.01 / 0.5 * 2.0)]


def test_run_implicit_saves_strided(small):
    traj = run_implicit(small.rs, TimeGrid(1e-4, 5), lambda t, x, y: 1 + 0 * x, BUBBLE, True, stride=2)
    assert traj.steps == [0, 2, 4, 5]
    assert traj.method == "cem_q2"


def test_initial_coarse_state_consistent(small):
    U, P = initial_coarse_state(BUBBLE, small.rs, False)
    B, _, D = small.rs.blocks_q(False)
    assert np.linalg.norm(small.rs.A @ U - D.T @ P) <= 1e-10 * np.linalg.norm(D.T @ P)
    assert np.allclose(P, b_projection(small.rs, interpolate(small.gp, lambda t, x, y: BUBBLE(x, y)), False))
