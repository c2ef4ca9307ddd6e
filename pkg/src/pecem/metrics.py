"""Relative pressure errors against the fine reference."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import FormSet
from .fine import Trajectory

log = logging.getLogger(__name__)

TABLE_STEPS = (1, 21, 41, 61, 81, 100)


@dataclass
class ErrorSeries:
    method: str
    preset: str
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    e_l2: list = field(default_factory=list)
    e_energy: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def at(self, n):
        k = self.steps.index(n)
        return self.e_l2[k], self.e_energy[k]

    @property
    def final(self):
        return self.e_l2[-1], self.e_energy[-1]


def _norm(M, v):
    return math.sqrt(max(float(v @ (M @ v)), 0.0))


def pressure_errors(ms: Trajectory, fine: Trajectory, forms: FormSet, preset: str = "") -> ErrorSeries:
    """e_L2 = |p_ms - p_h|_MP / |p_h|_MP and e_energy = |p_ms - p_h|_B / |p_h|_B per saved step."""
    out = ErrorSeries(ms.method, preset)
    common = [n for n in ms.steps if n in fine.steps]
    if not common:
        raise ValueError("trajectories share no saved steps")
    if abs(ms.time.tau - fine.time.tau) > 1e-15 * max(ms.time.tau, 1.0):
        raise ValueError("trajectories use different time steps")
    for n in common:
        _, p_ms = ms.at(n)
        _, p_h = fine.at(n)
        d = p_ms - p_h
        den_l2, den_b = _norm(forms.MP, p_h), _norm(forms.B, p_h)
        if den_l2 == 0 or den_b == 0:
            log.warning("%s: zero reference pressure at step %d, skipped", ms.method, n)
            out.skipped.append(n)
            continue
        out.steps.append(n)
        out.times.append(ms.time.t(n))
        out.e_l2.append(_norm(forms.MP, d) / den_l2)
        out.e_energy.append(_norm(forms.B, d) / den_b)
    return out


def write_error_csv(path, series: list, steps=None) -> None:
    """Columns n, t, method, e_L2, e_energy with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t", "method", "e_L2", "e_energy"])
        for s in series:
            for n, t, a, b in zip(s.steps, s.times, s.e_l2, s.e_energy):
                if steps is None or n in steps:
                    w.writerow([n, f"{t:.17g}", s.method, f"{a:.17g}", f"{b:.17g}"])


def read_error_csv(path) -> dict:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            s = out.setdefault(row["method"], ErrorSeries(row["method"], ""))
            s.steps.append(int(row["n"]))
            s.times.append(float(row["t"]))
            s.e_l2.append(float(row["e_L2"]))
            s.e_energy.append(float(row["e_energy"]))
    return out


def table_rows(series: list, steps=TABLE_STEPS):
    """Rows (n, e_energy per method in percent) at the tabulated steps."""
    rows = []
    for n in steps:
        row = [n]
        for s in series:
            row.append(100 * s.at(n)[1] if n in s.steps else np.nan)
        rows.append(row)
    return rows
