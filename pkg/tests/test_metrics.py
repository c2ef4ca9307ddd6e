import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_forms
from pecem.fine import TimeGrid, Trajectory
from pecem.metrics import (ErrorSeries, pressure_errors, read_error_csv, table_rows,
                           write_error_csv)


def make_traj(method, ps, tau=1e-3, n_u=1):
    t = Trajectory(method, TimeGrid(tau, max(len(ps) - 1, 1)))
    for n, p in enumerate(ps):
        t.append(n, np.zeros(n_u), p)
    return t


def test_identical_trajectories_have_zero_error(small, rng):
    ps = [rng.normal(size=small.forms.dofmap.n_p) for _ in range(4)]
    s = pressure_errors(make_traj("cem", ps), make_traj("fine", ps), small.forms)
    assert s.steps == [0, 1, 2, 3]
    assert all(e == 0 for e in s.e_l2 + s.e_energy)


def test_zero_multiscale_gives_unit_error(small, rng):
    ps = [rng.normal(size=small.forms.dofmap.n_p) for _ in range(3)]
    zero = [np.zeros_like(p) for p in ps]
    s = pressure_errors(make_traj("cem", zero), make_traj("fine", ps), small.forms)
    assert np.allclose(s.e_l2, 1.0, rtol=1e-14) and np.allclose(s.e_energy, 1.0, rtol=1e-14)


def test_dense_oracle(small, rng):
    f = small.field
    ref = dense_forms(8, f.E, f.kappa, f.nu_p, small.pc.alpha, small.pc.M, small.pc.nu)
    ph, pm = rng.normal(size=(2, small.forms.dofmap.n_p))
    s = pressure_errors(make_traj("split", [pm, pm]), make_traj("fine", [ph, ph]), small.forms)
    d = pm - ph
    want_l2 = math.sqrt(d @ ref["MP"] @ d / (ph @ ref["MP"] @ ph))
    want_b = math.sqrt(d @ ref["B"] @ d / (ph @ ref["B"] @ ph))
    assert s.e_l2[1] == pytest.approx(want_l2, rel=1e-10)
    assert s.e_energy[1] == pytest.approx(want_b, rel=1e-10)
    assert s.times == [0.0, 1e-3]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_triangle_inequality(small, seed):
    rng = np.random.default_rng(seed)
    ph, pa, pb = rng.normal(size=(3, small.forms.dofmap.n_p))
    fine = make_traj("fine", [ph])
    ea = pressure_errors(make_traj("a", [pa]), fine, small.forms)
    eb = pressure_errors(make_traj("b", [pb]), fine, small.forms)
    # |pa - pb| <= |pa - ph| + |pb - ph|, all relative to the same |ph|
    eab = pressure_errors(make_traj("a", [pa]), make_traj("fine", [pb]), small.forms)
    scale_l2 = math.sqrt(pb @ small.forms.MP @ pb / (ph @ small.forms.MP @ ph))
    assert eab.e_l2[0] * scale_l2 <= ea.e_l2[0] + eb.e_l2[0] + 1e-12
    scale_b = math.sqrt(pb @ small.forms.B @ pb / (ph @ small.forms.B @ ph))
    assert eab.e_energy[0] * scale_b <= ea.e_energy[0] + eb.e_energy[0] + 1e-12


def test_zero_reference_step_skipped(small, rng, caplog):
    n = small.forms.dofmap.n_p
    ph = [np.zeros(n), rng.normal(size=n)]
    pm = [rng.normal(size=n), rng.normal(size=n)]
    with caplog.at_level(logging.WARNING, logger="pecem.metrics"):
        s = pressure_errors(make_traj("cem", pm), make_traj("fine", ph), small.forms)
    assert s.skipped == [0] and s.steps == [1]
    assert "zero reference" in caplog.text


def test_mismatched_time_step_rejected(small):
    p = [np.ones(small.forms.dofmap.n_p)]
    with pytest.raises(ValueError, match="time steps"):
        pressure_errors(make_traj("cem", p, tau=1e-3), make_traj("fine", p, tau=2e-3), small.forms)


def test_disjoint_steps_rejected(small):
    p = np.ones(small.forms.dofmap.n_p)
    a = Trajectory("cem", TimeGrid(1e-3, 5))
    a.append(2, np.zeros(1), p)
    with pytest.raises(ValueError, match="no saved steps"):
        pressure_errors(a, make_traj("fine", [p]), small.forms)


def test_csv_roundtrip_full_precision(tmp_path):
    s = ErrorSeries("split", "x", [1, 2], [1e-4, 2e-4], [0.1 + 1e-17, 1 / 3], [2 / 7, math.pi / 10])
    t = ErrorSeries("cem", "x", [1], [1e-4], [np.nextafter(0.5, 1)], [0.25])
    path = tmp_path / "e.csv"
    write_error_csv(path, [s, t])
    back = read_error_csv(path)
    assert set(back) == {"split", "cem"}
    for orig in (s, t):
        got = back[orig.method]
        assert got.steps == orig.steps
        assert got.times == orig.times and got.e_l2 == orig.e_l2 and got.e_energy == orig.e_energy
    assert path.read_text().splitlines()[0] == "n,t,method,e_L2,e_energy"


def test_csv_step_filter(tmp_path):
    s = ErrorSeries("cem", "", [1, 2, 3], [0.1, 0.2, 0.3], [1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    write_error_csv(tmp_path / "e.csv", [s], steps=[2])
    assert read_error_csv(tmp_path / "e.csv")["cem"].steps == [2]


def test_table_rows_percent_and_missing():
    a = ErrorSeries("cem", "", [1, 21], [0, 0], [0.1, 0.2], [0.015, 0.5])
    b = ErrorSeries("split", "", [1], [0], [0.1], [0.02])
    rows = table_rows([a, b], steps=(1, 21))
    assert rows[0] == [1, pytest.approx(1.5), pytest.approx(2.0)]
    assert rows[1][0] == 21 and rows[1][1] == pytest.approx(50.0) and np.isnan(rows[1][2])
    assert a.at(21) == (0.2, 0.5) and a.final == (0.2, 0.5)
