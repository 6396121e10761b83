"""Quantum and classical Fisher information of the interferometer phase."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import check_finite_scalar, check_nonnegative
from .exceptions import NonPhysicalStateError
from .fock import DensityMatrix, jy_operator
from .interferometer import InterferometerInput, blur_tables, distribution_and_derivative
from .preparation import loss_timescale

__all__ = [
    "FisherReport",
    "PhaseOptimum",
    "P_FLOOR",
    "RANK_TOLERANCE",
    "qfi",
    "qfi_pure",
    "qfi_mixed",
    "qfi_dense",
    "cfi",
    "fisher_report",
    "qfi_approx",
    "optimize_phase_beta",
    "overlap_deficit",
]

#: outcomes with probability below this are left out of the classical sum
P_FLOOR = 1e-14
#: eigenvalue pairs with lam_i + lam_j below this are left out of the mixed-state sum
RANK_TOLERANCE = 1e-12


@dataclass(frozen=True)
class FisherReport:
    qfi: float
    cfi: float
    theta: float
    repetitions: int = 1
    sigma: float = 0.0

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be a positive integer")

    @staticmethod
    def bound(information: float, repetitions: int) -> float:
        """Cramer-Rao bound ``1 / sqrt(m F)`` on the phase uncertainty."""
        if information <= 0:
            return math.inf
        return 1.0 / math.sqrt(repetitions * information)

    @property
    def crlb(self) -> float:
        """Bound reachable with photon counting (classical information)."""
        return self.bound(self.cfi, self.repetitions)

    @property
    def quantum_crlb(self) -> float:
        return self.bound(self.qfi, self.repetitions)

    def to_dict(self):
        return {"theta": self.theta, "qfi": self.qfi, "cfi": self.cfi,
                "repetitions": self.repetitions, "sigma": self.sigma,
                "crlb": self.crlb, "quantum_crlb": self.quantum_crlb}


def qfi_pure(inp: InterferometerInput) -> float:
    """``4 Var(Jy)`` on a pure two-mode input; independent of the phase."""
    if not inp.is_pure:
        raise ValueError("qfi_pure needs a pure port-a state; use qfi_mixed")
    psi = inp.components[1][0]
    jpsi = inp.jy.apply(psi)
    mean = np.vdot(psi, jpsi).real
    return float(4.0 * (np.vdot(jpsi, jpsi).real - mean ** 2))


def qfi_mixed(inp: InterferometerInput, rank_tolerance: float = RANK_TOLERANCE) -> float:
    """Mixed-state QFI restricted to the support of ``rho_a``.

    With ``J_ij = <i|Jy|j>`` on the input eigenvectors ``v_i (x) |beta>``,

        F = 4 sum_i lam_i <i|Jy^2|i> - 4 sum_i lam_i |J_ii|^2
            - 8 sum_{i != j} lam_i lam_j / (lam_i + lam_j) |J_ij|^2

    which equals the full eigen-sum over the two-mode space: eigenvectors
    outside the support only enter through ``Jy^2``.
    """
    lam, vecs = inp.components
    jv = inp.jy.apply(vecs)
    sq = np.einsum("ij,ij->i", jv.conj(), jv).real
    J = vecs.conj() @ jv.T
    diag = np.abs(np.diag(J)) ** 2
    total = 4.0 * np.dot(lam, sq) - 4.0 * np.dot(lam, diag)
    pair_sum = lam[:, None] + lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(pair_sum > rank_tolerance,
                          lam[:, None] * lam[None, :] / pair_sum, 0.0)
    np.fill_diagonal(weight, 0.0)
    total -= 8.0 * np.sum(weight * np.abs(J) ** 2)
    return float(total)


def qfi(inp: InterferometerInput) -> float:
    return qfi_pure(inp) if inp.is_pure else qfi_mixed(inp)


def qfi_dense(rho, rank_tolerance: float = RANK_TOLERANCE) -> float:
    """Brute-force ``2 sum (l_i - l_j)^2 / (l_i + l_j) |<i|Jy|j>|^2`` over the full two-mode eigensystem."""
    if isinstance(rho, DensityMatrix):
        if rho.structure != "two_mode_field":
            raise ValueError("qfi_dense needs a two-mode density matrix")
        mat, cutoffs = rho.matrix, rho.cutoffs
    else:
        raise TypeError("expected a two-mode DensityMatrix")
    lam, vec = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    if lam[0] < -1e-10:
        raise NonPhysicalStateError(f"negative eigenvalue {lam[0]:.3g}")
    lam = np.clip(lam, 0.0, None)
    J = vec.conj().T @ jy_operator(*cutoffs).dense() @ vec
    num = (lam[:, None] - lam[None, :]) ** 2
    den = lam[:, None] + lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(den > rank_tolerance, num / den, 0.0) * np.abs(J) ** 2
    return float(2.0 * terms.sum())


def cfi(inp: InterferometerInput, theta: float, sigma: float = 0.0,
        p_floor: float = P_FLOOR) -> float:
    """Classical Fisher information of photon counting at both outputs.

    ``sigma > 0`` blurs both the probabilities and their derivative with the
    Gaussian detector response before the sum.
    """
    theta = check_finite_scalar(theta, "theta")
    sigma = check_nonnegative(sigma, "sigma")
    probs, deriv = distribution_and_derivative(inp, theta)
    if sigma > 0:
        probs, deriv = blur_tables(probs, deriv, sigma)
    keep = probs > p_floor
    return float(np.sum(deriv[keep] ** 2 / probs[keep]))


def fisher_report(inp: InterferometerInput, theta: float, sigma: float = 0.0,
                  repetitions: int = 1) -> FisherReport:
    return FisherReport(qfi(inp), cfi(inp, theta, sigma), float(theta), repetitions, sigma)


def qfi_approx(formula: str, n_alpha: float, n_beta: float, phase: float | None = None, *,
               kappa: float = 0.0, U0: float | None = None, t: float | None = None) -> float:
    """Closed-form QFI references.

    ``opt``        ``n_a + n_b + 4 n_a n_b sin^2(U0 t / 2)``, beam phase optimized
    ``phase0``     ``n_a + n_b + n_a n_b sin^2(U0 t)``, real beam amplitude
    ``lossy_fit``  ``n_a + n_b + exp(-2/3 (t/tau)^3) sin^2(U0 t) n_a n_b``, with
                   ``kappa tau (U0 tau)^2 n_a = 1``

    The first two assume well separated coherent components.  For
    ``lossy_fit`` pass ``U0`` and ``t`` (and ``kappa``); ``phase`` is ignored.
    """
    base = n_alpha + n_beta
    if formula == "lossy_fit":
        if U0 is None or t is None:
            raise ValueError("lossy_fit needs U0 and t")
        tau = loss_timescale(kappa, U0, n_alpha)
        factor = 1.0 if math.isinf(tau) else math.exp(-2.0 / 3.0 * (t / tau) ** 3)
        return base + factor * math.sin(U0 * t) ** 2 * n_alpha * n_beta
    if phase is None:
        if U0 is None or t is None:
            raise ValueError(f"{formula} needs phase = U0 t")
        phase = U0 * t
    if formula == "opt":
        return base + 4.0 * n_alpha * n_beta * math.sin(0.5 * phase) ** 2
    if formula == "phase0":
        return base + n_alpha * n_beta * math.sin(phase) ** 2
    raise ValueError(f"unknown formula {formula!r}; expected opt, phase0 or lossy_fit")


class PhaseOptimum(NamedTuple):
    phi_beta: float
    qfi: float
    resolution: float
    grid: np.ndarray
    values: np.ndarray


def optimize_phase_beta(port_a, beta0: float, grid_size: int = 64,
                        beta_cutoff=None, rel_tie: float = 1e-9) -> PhaseOptimum:
    """Scan the beam phase on ``[0, 2 pi)`` and keep the QFI maximizer.

    Values within ``rel_tie`` of the maximum count as ties, resolved towards
    the smallest phase.
    """
    if grid_size < 8:
        raise ValueError("grid_size must be >= 8")
    beta0 = check_nonnegative(beta0, "beta0")
    base = InterferometerInput(port_a, beta0, beta_cutoff)
    grid = 2.0 * math.pi * np.arange(grid_size) / grid_size
    values = np.array([qfi(base.with_beta(beta0 * np.exp(1j * phi))) for phi in grid])
    best = values.max()
    k = int(np.argmax(values >= best - rel_tie * abs(best)))
    return PhaseOptimum(float(grid[k]), float(values[k]), 2.0 * math.pi / grid_size, grid, values)


def overlap_deficit(inp: InterferometerInput, theta: float, dtheta: float) -> float:
    """``1 - |<psi(theta)|psi(theta + dtheta)>|^2`` for a pure input."""
    if not inp.is_pure:
        raise ValueError("overlap_deficit needs a pure input")
    psi = inp.components[1][0]
    a = inp.jy.rotate(psi, theta)
    b = inp.jy.rotate(psi, theta + dtheta)
    return float(1.0 - abs(np.vdot(a, b)) ** 2)
