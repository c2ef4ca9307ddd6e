"""Material coefficients: Lame parameters, high-contrast streak media, raster input."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import GridPair


@dataclass(frozen=True)
class PhysicsConstants:
    alpha: float = 0.9   # Biot-Willis coefficient
    M: float = 1.0       # Biot modulus
    nu: float = 1.0      # fluid viscosity
    nu_p: float = 0.2    # Poisson ratio

    def __post_init__(self):
        for name in ("alpha", "M", "nu", "nu_p"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.M <= 0:
            raise ValueError(f"M must be positive, got {self.M}")
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not -1.0 < self.nu_p < 0.5:
            raise ValueError(f"nu_p must lie in (-1, 1/2), got {self.nu_p}")


def lame_from_young(E, nu_p: float):
    """Return ``(lam, mu)`` for Young's modulus ``E`` (scalar or array) and Poisson ratio."""
    if not -1.0 < nu_p < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 1/2), got {nu_p}")
    E = np.asarray(E, dtype=float)
    if np.any(E <= 0):
        raise ValueError("Young's modulus must be positive")
    lam = nu_p * E / ((1.0 - 2.0 * nu_p) * (1.0 + nu_p))
    mu = E / (2.0 * (1.0 + nu_p))
    if lam.ndim == 0:
        return float(lam), float(mu)
    return lam, mu


@dataclass(frozen=True)
class CoefficientField:
    """Per-fine-cell Young's modulus and permeability."""

    E: np.ndarray
    kappa: np.ndarray
    nu_p: float
    seed: int | None = None
    source: str = "generated"
    lam: np.ndarray = field(init=False, repr=False)
    mu: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        E = np.ascontiguousarray(self.E, dtype=float)
        kappa = np.ascontiguousarray(self.kappa, dtype=float)
        if E.shape != kappa.shape or E.ndim != 1:
            raise ValueError("E and kappa must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(E)) and np.all(np.isfinite(kappa))):
            raise ValueError("coefficients must be finite")
        if np.any(E <= 0) or np.any(kappa <= 0):
            raise ValueError("coefficients must be positive")
        lam, mu = lame_from_young(E, self.nu_p)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @property
    def contrast(self) -> float:
        return float(self.E.max() / self.E.min())

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.E.tobytes())
        h.update(self.kappa.tobytes())
        h.update(repr(self.nu_p).encode())
        return h.hexdigest()

    def scaled(self, s: float) -> "CoefficientField":
        return CoefficientField(self.E * s, self.kappa * s, self.nu_p, self.seed, self.source)


def constant_field(gp: GridPair, value: float = 1.0, nu_p: float = 0.2) -> CoefficientField:
    v = np.full(gp.fine.n_cells, float(value))
    return CoefficientField(v, v.copy(), nu_p, None, "constant")


def generate_streak_field(gp: GridPair, background: float = 1.0, contrast: float = 1e4,
                          seed: int = 0, nu_p: float = 0.2,
                          n_streaks: int | None = None) -> CoefficientField:
    """Two-valued medium: ``background`` with thin high-valued channels.

    Channels are horizontal, vertical or L-shaped, one or two fine cells thick,
    and span between two and five coarse cells. Permeability equals E.
    """
    if background <= 0:
        raise ValueError("background must be positive")
    if contrast < 1:
        raise ValueError("contrast must be >= 1")
    rng = np.random.default_rng(seed)
    nx, ny, r = gp.fine.n_x, gp.fine.n_y, gp.ratio
    mask = np.zeros((ny, nx), dtype=bool)
    if n_streaks is None:
        n_streaks = max(4, (gp.coarse.n_x * gp.coarse.n_y) // 4)
    for _ in range(n_streaks):
        kind = rng.integers(3)
        thick = int(rng.integers(1, 3))
        length = int(rng.integers(2 * r, 5 * r + 1))
        x0 = int(rng.integers(1, nx - 1))
        y0 = int(rng.integers(1, ny - 1))
        if kind in (0, 2):
            mask[y0:y0 + thick, x0:x0 + length] = True
        if kind in (1, 2):
            mask[y0:y0 + length, x0:x0 + thick] = True
    if contrast > 1 and not mask.any():
        mask[ny // 2, :] = True
    E = np.where(mask.ravel(), background * contrast, background)
    return CoefficientField(E, E.copy(), nu_p, seed, "streaks")


def load_raster(path, gp: GridPair, nu_p: float = 0.2) -> CoefficientField:
    """Read Young's modulus from a CSV raster whose first row is the top of the domain."""
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"non-numeric entry in raster {path}: {exc}") from None
    nx, ny = gp.fine.n_x, gp.fine.n_y
    if len(rows) != ny or any(len(r) != nx for r in rows):
        shape = (len(rows), len(rows[0]) if rows else 0)
        raise ValueError(f"raster shape {shape} does not match fine grid ({ny}, {nx})")
    data = np.array(rows)
    if not np.all(np.isfinite(data)) or np.any(data <= 0):
        raise ValueError("raster entries must be positive and finite")
    E = data[::-1].ravel()
    return CoefficientField(E, E.copy(), nu_p, None, f"raster:{Path(path).name}")


def save_raster(field_: CoefficientField, gp: GridPair, path) -> None:
    data = field_.E.reshape(gp.fine.n_y, gp.fine.n_x)[::-1]
    Path(path).write_text("\n".join(",".join(f"{v:.17g}" for v in row) for row in data) + "\n")
