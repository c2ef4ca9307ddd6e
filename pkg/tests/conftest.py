import warnings

import numpy as np
import pytest

from pecem.assembly import assemble_forms
from pecem.cem import build_auxiliary, build_cem_basis
from pecem.coeff import PhysicsConstants, constant_field, generate_streak_field
from pecem.grid import build_grid_pair
from pecem.msstep import reduce
from pecem.qh2 import build_qh2_aux, build_qh2_basis, stability_report

ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])


class Small:
    """2x2 coarse / 8x8 fine streak instance with every space built."""

    def __init__(self, seed=7, J=2, ell=1, contrast=1e4):
        self.gp = build_grid_pair(2, 4)
        self.field = generate_streak_field(self.gp, 1.0, contrast, seed)
        self.pc = PhysicsConstants()
        self.forms = assemble_forms(self.gp, self.field, self.pc)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            self.aux = build_auxiliary(self.forms, self.gp, J, J)
        self.V = build_cem_basis(self.forms, self.aux, self.gp, ell, "V")
        self.Q1 = build_cem_basis(self.forms, self.aux, self.gp, ell, "Q")
        self.qaux = build_qh2_aux(self.forms, self.aux, self.gp, J)
        self.Q2 = build_qh2_basis(self.forms, self.aux, self.qaux, self.gp, ell)
        self.rs = reduce(self.forms, self.V, self.Q1, self.Q2)
        self.report = stability_report(self.forms, self.Q1, self.Q2, self.gp.H, 1e-4)


@pytest.fixture(scope="session")
def small():
    return Small()


@pytest.fixture(scope="session")
def const3():
    """3x3 coarse / 12x12 fine constant-coefficient forms (element 4 is interior)."""
    gp = build_grid_pair(3, 4)
    return gp, assemble_forms(gp, constant_field(gp, 1.0), PhysicsConstants())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
