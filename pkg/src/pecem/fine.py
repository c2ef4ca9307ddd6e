"""Fully implicit fine-scale reference solver (backward Euler, P1/P1)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import FormSet, assemble_load
from .linalg import SaddleFactor, SolverError, SpdFactor


@dataclass(frozen=True)
class TimeGrid:
    tau: float
    N: int

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"time step must be positive, got {self.tau}")
        if self.N < 1:
            raise ValueError(f"step count must be >= 1, got {self.N}")

    @property
    def T(self) -> float:
        return self.N * self.tau

    def t(self, n: int) -> float:
        return n * self.tau


@dataclass
class Trajectory:
    """Saved (u, p) fine-dof snapshots, ``steps[k]`` is the index of ``u[k]``."""

    method: str
    time: TimeGrid
    steps: list = field(default_factory=list)
    u: list = field(default_factory=list)
    p: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, n, u, p):
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
            raise FloatingPointError(f"{self.method}: non-finite state at step {n}")
        self.steps.append(n)
        self.u.append(np.asarray(u, dtype=float).copy())
        self.p.append(np.asarray(p, dtype=float).copy())

    def at(self, n):
        k = self.steps.index(n)
        return self.u[k], self.p[k]


def initial_pressure_fine(forms: FormSet, p0) -> np.ndarray:
    """L2 projection of ``p0(x, y)`` onto the fine pressure space."""
    rhs = assemble_load(forms.gp, lambda t, x, y: p0(x, y), 0.0)
    return SpdFactor(forms.MP).solve(rhs)


def initial_displacement(forms: FormSet, p0_vec, factor: SpdFactor | None = None) -> np.ndarray:
    """Consistent displacement: a(u0, v) = d(v, p0)."""
    factor = factor or SpdFactor(forms.A)
    return factor.solve(forms.D.T @ p0_vec)


class FineSolver:
    """Backward-Euler stepper for the coupled fine system, factorized once."""

    def __init__(self, forms: FormSet, tau: float):
        self.forms = forms
        self.tau = tau
        self.factor = SaddleFactor(forms.A, forms.D, (forms.C + tau * forms.B).tocsc())

    def step(self, u, p, load_next, n: int = -1):
        f = self.forms
        rhs_p = self.tau * load_next + f.D @ u + f.C @ p
        try:
            return self.factor.solve(np.zeros_like(u), rhs_p)
        except (RuntimeError, ValueError) as exc:
            raise SolverError(f"fine step {n} failed: {exc}") from exc


def step_fine(forms: FormSet, tau: float, u, p, load_next):
    return FineSolver(forms, tau).step(u, p, load_next)


def run_fine(forms: FormSet, time: TimeGrid, source, p0, stride: int = 1,
             method: str = "fine") -> Trajectory:
    """Reference trajectory; ``source(t, x, y)`` is taken at t_{n+1} in step n."""
    solver = FineSolver(forms, time.tau)
    p = initial_pressure_fine(forms, p0)
    u = initial_displacement(forms, p)
    traj = Trajectory(method, time)
    traj.append(0, u, p)
    for n in range(time.N):
        load = assemble_load(forms.gp, source, time.t(n + 1))
        u, p = solver.step(u, p, load, n)
        if (n + 1) % stride == 0 or n + 1 == time.N:
            traj.append(n + 1, u, p)
    return traj
