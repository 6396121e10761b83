"""Wigner functions on a rectangular patch of the phase plane.

``W(alpha) = (2/pi) Tr[rho D(alpha) Pi D(alpha)^dag]`` with the parity
``Pi = (-1)^{a^dag a}``.  The displaced-parity matrix elements have the closed
form (``n >= m``, ``x = 4 |alpha|^2``)

    <m| D Pi D^dag |n> = (-1)^m sqrt(m!/n!) (2 alpha^*)^(n-m) e^{-x/2} L_m^(n-m)(x)

so every grid point costs one generalized-Laguerre recurrence per diagonal
``n - m`` and no matrix exponential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .exceptions import NoPreferredDirectionError
from .fock import DensityMatrix, FockVector

__all__ = [
    "PhaseGrid",
    "WignerMap",
    "default_grid",
    "wigner",
    "wigner_at",
    "wigner_overlap",
    "shifted_overlap",
    "gradient_direction",
]

#: relative eigenvalue gap of the gradient tensor below which a map counts as isotropic
ISOTROPY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class PhaseGrid:
    re_min: float
    re_max: float
    im_min: float
    im_max: float
    points_per_axis: int = 201

    def __post_init__(self):
        if int(self.points_per_axis) < 2:
            raise ValueError("points_per_axis must be >= 2 to integrate")
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("grid bounds must be ordered (min < max)")
        for name in ("re_min", "re_max", "im_min", "im_max"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def re(self) -> np.ndarray:
        return np.linspace(self.re_min, self.re_max, self.points_per_axis)

    @property
    def im(self) -> np.ndarray:
        return np.linspace(self.im_min, self.im_max, self.points_per_axis)

    @property
    def spacing(self):
        k = self.points_per_axis - 1
        return (self.re_max - self.re_min) / k, (self.im_max - self.im_min) / k

    @property
    def cell_area(self) -> float:
        dx, dy = self.spacing
        return dx * dy

    def points(self) -> np.ndarray:
        """Complex ``alpha`` values, shape ``(im, re)``."""
        return self.re[None, :] + 1j * self.im[:, None]

    def shifted(self, delta: complex) -> "PhaseGrid":
        return PhaseGrid(self.re_min + delta.real, self.re_max + delta.real,
                         self.im_min + delta.imag, self.im_max + delta.imag,
                         self.points_per_axis)

    def to_dict(self):
        return {"re_min": self.re_min, "re_max": self.re_max, "im_min": self.im_min,
                "im_max": self.im_max, "points_per_axis": self.points_per_axis}


def default_grid(mean_photon_number: float, points: int = 201) -> PhaseGrid:
    """Square grid spanning ``+-(sqrt(nbar) + 4)`` on both axes."""
    half = math.sqrt(max(mean_photon_number, 0.0)) + 4.0
    return PhaseGrid(-half, half, -half, half, points)


@dataclass(frozen=True, eq=False)
class WignerMap:
    """Wigner values sampled on ``grid``; ``values[i, j]`` sits at ``re[j] + i im[i]``."""

    grid: PhaseGrid
    values: np.ndarray

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)

    def at_origin(self) -> float:
        """Value at the grid point closest to ``alpha = 0``."""
        i = int(np.argmin(np.abs(self.grid.im)))
        j = int(np.argmin(np.abs(self.grid.re)))
        return float(self.values[i, j])

    def rows(self):
        """``(re, im, w)`` tuples, real part varying fastest."""
        re, im = self.grid.re, self.grid.im
        for i, y in enumerate(im):
            for j, x in enumerate(re):
                yield float(x), float(y), float(self.values[i, j])


def _density(state) -> np.ndarray:
    if state.modes != 1 or getattr(state, "structure", "field") != "field":
        raise ValueError("the Wigner function is defined here for single-mode field states")
    if isinstance(state, FockVector):
        psi = state.amplitudes
        return np.outer(psi, psi.conj())
    if isinstance(state, DensityMatrix):
        return np.asarray(state.matrix)
    raise TypeError(f"unsupported state type {type(state).__name__}")


def wigner_at(state, alpha) -> np.ndarray:
    """Wigner function at arbitrary complex points (any array shape)."""
    rho = _density(state)
    alpha = np.asarray(alpha, dtype=complex)
    x = 4.0 * np.abs(alpha) ** 2
    envelope = np.exp(-0.5 * x)
    two_conj = 2.0 * alpha.conj()
    dim = rho.shape[0]
    total = np.zeros(alpha.shape)
    power = np.ones(alpha.shape, dtype=complex)
    for k in range(dim):
        ms = np.arange(dim - k)
        # rho_{m+k, m} pairs with <m|D Pi D^dag|m+k>
        coeffs = rho[ms + k, ms] * (-1.0) ** ms * np.exp(0.5 * (gammaln(ms + 1) - gammaln(ms + k + 1)))
        lag_prev = np.zeros(alpha.shape)
        lag = np.ones(alpha.shape)
        acc = coeffs[0] * lag
        for m in range(1, dim - k):
            lag, lag_prev = ((2 * m - 1 + k - x) * lag - (m - 1 + k) * lag_prev) / m, lag
            acc = acc + coeffs[m] * lag
        term = (power * envelope) * acc
        total += term.real if k == 0 else 2.0 * term.real
        power = power * two_conj
    return (2.0 / math.pi) * total


def wigner(state, grid: PhaseGrid | None = None) -> WignerMap:
    """Sample the Wigner function of a single-mode state on ``grid``."""
    if grid is None:
        grid = default_grid(state.mean_photon_number())
    return WignerMap(grid, wigner_at(state, grid.points()))


def _same_grid(a: PhaseGrid, b: PhaseGrid) -> bool:
    return a == b


def wigner_overlap(a: WignerMap, b: WignerMap) -> float:
    """``pi * integral W_a W_b``; equals ``Tr[rho_a rho_b]`` up to grid error."""
    if not _same_grid(a.grid, b.grid):
        raise ValueError("Wigner maps live on different grids")
    return float(math.pi * np.sum(a.values * b.values) * a.grid.cell_area)


def shifted_overlap(state, delta: complex, grid: PhaseGrid | None = None,
                    other=None) -> float:
    """``pi * integral W(alpha) W'(alpha + delta)`` with ``W'`` of ``other`` (default ``state``).

    For a displacement ``D(delta)`` this is ``|<psi|D(delta)|psi>|^2`` on pure states.
    """
    if grid is None:
        grid = default_grid(state.mean_photon_number())
    base = wigner_at(state, grid.points())
    moved = wigner_at(state if other is None else other, grid.points() + complex(delta))
    return float(math.pi * np.sum(base * moved) * grid.cell_area)


def gradient_direction(wmap: WignerMap, isotropy_tolerance: float = ISOTROPY_TOLERANCE) -> float:
    """Phase-plane angle in ``[0, pi)`` maximizing ``integral (u . grad W)^2``.

    The integrated squared directional derivative is the quadratic form of the
    2x2 tensor ``integral grad W grad W^T``; its leading eigenvector is the
    answer, defined up to sign.
    """
    dx, dy = wmap.grid.spacing
    gy, gx = np.gradient(wmap.values, dy, dx)
    T = np.array([[np.sum(gx * gx), np.sum(gx * gy)],
                  [np.sum(gx * gy), np.sum(gy * gy)]]) * wmap.grid.cell_area
    lam, vec = np.linalg.eigh(T)
    if lam[1] <= 0:
        raise NoPreferredDirectionError("flat Wigner map: the gradient vanishes everywhere")
    if (lam[1] - lam[0]) / (lam[1] + lam[0]) < isotropy_tolerance:
        raise NoPreferredDirectionError("isotropic Wigner map: no preferred direction")
    u = vec[:, 1]
    return float(math.atan2(u[1], u[0]) % math.pi)
