"""Mach-Zehnder propagation and photon-counting statistics.

The interferometer maps the two-mode input to ``exp(-i theta Jy)`` applied to
it; density matrices transform as ``rho -> U rho U^dag`` with the same ``U``.

A mixed port-``a`` state is handled through its eigen-ensemble
``rho_a = sum_i lam_i |v_i><v_i|``: every ``v_i (x) |beta>`` is propagated as a
vector, so the full two-mode density matrix is never needed for counting
statistics or Fisher information.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._validation import check_dimension, check_finite_scalar, check_nonnegative
from .exceptions import NonPhysicalStateError
from .fock import (DensityMatrix, FockVector, ModeCutoff, as_cutoff, coherent_state,
                   default_cutoff, jy_operator)

__all__ = [
    "InterferometerInput",
    "OutputDistribution",
    "SliceTable",
    "mzi_transform",
    "rotate_state",
    "output_distribution",
    "distribution_and_derivative",
    "blur_distribution",
    "blur_tables",
    "fixed_total_slice",
    "polar_slice",
]

#: eigenvalues of rho_a in [-EIG_CLIP, 0) are clipped to zero
EIG_CLIP = 1e-10


@dataclass(frozen=True, eq=False)
class InterferometerInput:
    """Prepared light in port ``a`` and a coherent beam ``beta`` in port ``b``.

    ``beta_cutoff`` defaults to the larger of the port-``a`` cutoff and the
    cutoff policy for ``|beta|^2``.
    """

    port_a: FockVector | DensityMatrix
    beta: complex = 0.0
    beta_cutoff: ModeCutoff | int | None = None
    max_dimension: int | None = None

    def __post_init__(self):
        if self.port_a.modes != 1 or getattr(self.port_a, "structure", "field") != "field":
            raise ValueError("port_a must be a single-mode field state")
        beta = check_finite_scalar(self.beta, "beta", complex_ok=True)
        object.__setattr__(self, "beta", beta)
        if self.beta_cutoff is None:
            n_a = self.port_a.cutoffs[0].n_max
            cut = ModeCutoff(max(n_a, default_cutoff(abs(beta) ** 2).n_max))
        else:
            cut = as_cutoff(self.beta_cutoff)
        object.__setattr__(self, "beta_cutoff", cut)
        check_dimension(self.port_a.cutoffs[0].dim * cut.dim, self.max_dimension)

    @property
    def cutoffs(self):
        return (self.port_a.cutoffs[0], self.beta_cutoff)

    @property
    def dims(self):
        return tuple(c.dim for c in self.cutoffs)

    @property
    def is_pure(self) -> bool:
        return isinstance(self.port_a, FockVector)

    @property
    def n_alpha(self) -> float:
        return self.port_a.mean_photon_number()

    @property
    def n_beta(self) -> float:
        return abs(self.beta) ** 2

    @property
    def phi_beta(self) -> float:
        return math.atan2(self.beta.imag, self.beta.real)

    @property
    def shot_noise_limit(self) -> float:
        return self.n_alpha + self.n_beta

    @cached_property
    def jy(self):
        return jy_operator(*self.cutoffs)

    @cached_property
    def beta_state(self) -> FockVector:
        return coherent_state(self.beta, self.beta_cutoff)

    @cached_property
    def port_a_spectrum(self):
        """Weights and port-``a`` eigenvectors (rows) with nonzero weight."""
        if self.is_pure:
            return np.ones(1), self.port_a.amplitudes[None, :]
        rho = self.port_a
        herm = rho.hermiticity_error()
        if herm > 1e-10:
            raise NonPhysicalStateError(f"port_a is not Hermitian ({herm:.3g})")
        lam, vec = rho.eigensystem()
        if lam[0] < -EIG_CLIP:
            raise NonPhysicalStateError(f"port_a has a negative eigenvalue {lam[0]:.3g}")
        lam = np.where(lam < 0, 0.0, lam)
        keep = lam > 0
        return lam[keep], vec[:, keep].T

    @cached_property
    def components(self):
        """Weights ``lam_i`` and two-mode vectors ``v_i (x) |beta>`` as rows."""
        lam, vecs = self.port_a_spectrum
        beta = self.beta_state.amplitudes
        two_mode = (vecs[:, :, None] * beta[None, None, :]).reshape(len(lam), -1)
        return lam, two_mode

    def two_mode_state(self):
        """Input as a two-mode :class:`FockVector` or :class:`DensityMatrix`."""
        lam, vecs = self.components
        if self.is_pure:
            return FockVector(vecs[0], self.cutoffs)
        return DensityMatrix((vecs.T * lam) @ vecs.conj(), self.cutoffs, "two_mode_field")

    def with_beta(self, beta) -> "InterferometerInput":
        return InterferometerInput(self.port_a, beta, self.beta_cutoff, self.max_dimension)


def rotate_state(state, theta: float):
    """Apply the interferometer to any two-mode vector or density matrix."""
    if state.modes != 2:
        raise ValueError("the interferometer acts on two-mode states")
    jy = jy_operator(*state.cutoffs)
    if isinstance(state, FockVector):
        return FockVector(jy.rotate(state.amplitudes, theta), state.cutoffs)
    return DensityMatrix(jy.conjugate(state.matrix, theta), state.cutoffs, "two_mode_field")


def mzi_transform(inp: InterferometerInput, theta: float):
    """Output state ``exp(-i theta Jy) (port_a (x) |beta>)``."""
    theta = check_finite_scalar(theta, "theta")
    lam, vecs = inp.components
    out = inp.jy.rotate(vecs, theta)
    if inp.is_pure:
        return FockVector(out[0], inp.cutoffs)
    return DensityMatrix((out.T * lam) @ out.conj(), inp.cutoffs, "two_mode_field")


@dataclass(frozen=True, eq=False)
class OutputDistribution:
    """Photon-count probabilities ``probs[n, m]`` at phase ``theta``."""

    theta: float
    probs: np.ndarray
    sigma: float = 0.0
    blurred: bool = False
    derivative: np.ndarray | None = field(default=None, repr=False)

    def total(self) -> float:
        return float(self.probs.sum())

    def rows(self):
        """``(theta, n, m, p)`` tuples in row-major order."""
        na, nb = self.probs.shape
        for n in range(na):
            for m in range(nb):
                yield self.theta, n, m, float(self.probs[n, m])


def distribution_and_derivative(inp: InterferometerInput, theta: float):
    """``p(n, m | theta)`` and ``d p / d theta`` from the analytic commutator form."""
    lam, vecs = inp.components
    psi = inp.jy.rotate(vecs, theta)
    dpsi = -1j * inp.jy.apply(psi)
    probs = np.einsum("i,ij->j", lam, np.abs(psi) ** 2)
    deriv = np.einsum("i,ij->j", lam, 2.0 * np.real(psi.conj() * dpsi))
    return probs.reshape(inp.dims), deriv.reshape(inp.dims)


def output_distribution(inp: InterferometerInput, theta: float, sigma: float = 0.0,
                        with_derivative: bool = False) -> OutputDistribution:
    theta = check_finite_scalar(theta, "theta")
    probs, deriv = distribution_and_derivative(inp, theta)
    probs = np.clip(probs, 0.0, None)
    dist = OutputDistribution(theta, probs, derivative=deriv if with_derivative else None)
    return blur_distribution(dist, sigma) if sigma > 0 else dist


def _kernel(n_in: int, sigma: float) -> np.ndarray:
    """Gaussian weights from ``n_in`` input counts to ``n_in + K`` output counts."""
    reach = int(math.ceil(6.0 * sigma))
    n_out = np.arange(n_in + reach)[:, None]
    diff = n_out - np.arange(n_in)[None, :]
    ker = np.exp(-(diff ** 2) / (2.0 * sigma ** 2))
    ker[np.abs(diff) > reach] = 0.0
    return ker


def blur_tables(probs, derivative, sigma):
    """Convolve ``p`` (and optionally ``dp/dtheta``) with a Gaussian detector response.

    The result is renormalized over nonnegative counts; the derivative of the
    normalized table includes the variation of the normalization constant.
    """
    sigma = check_nonnegative(sigma, "sigma")
    if sigma == 0:
        return probs, derivative
    ka = _kernel(probs.shape[0], sigma)
    kb = _kernel(probs.shape[1], sigma)
    S = ka @ probs @ kb.T
    Z = S.sum()
    P = S / Z
    if derivative is None:
        return P, None
    dS = ka @ derivative @ kb.T
    dP = dS / Z - S * dS.sum() / Z ** 2
    return P, dP


def blur_distribution(dist: OutputDistribution, sigma: float) -> OutputDistribution:
    """Detector-blurred copy of ``dist``; ``sigma = 0`` returns ``dist`` itself."""
    sigma = check_nonnegative(sigma, "sigma")
    if sigma == 0:
        return dist
    P, dP = blur_tables(dist.probs, dist.derivative, sigma)
    return OutputDistribution(dist.theta, P, sigma, True, dP)


@dataclass(frozen=True, eq=False)
class SliceTable:
    """Probabilities on ``n + m = total`` indexed by angle and ``delta_n = n - m``."""

    total: int
    thetas: np.ndarray
    delta_n: np.ndarray
    probs: np.ndarray      # shape (len(thetas), len(delta_n))

    def mass(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def rows(self):
        for i, th in enumerate(self.thetas):
            for j, dn in enumerate(self.delta_n):
                yield float(th), int(dn), float(self.probs[i, j])


def _slice_indices(shape, total):
    na, nb = shape[0] - 1, shape[1] - 1
    if total < 0 or total > na + nb:
        raise ValueError(f"N = {total} outside the range 0..{na + nb} of the count table")
    n = np.arange(max(0, total - nb), min(na, total) + 1)
    return n, total - n


def fixed_total_slice(dists, total: int) -> SliceTable:
    """Extract ``p(n, m | theta)`` on ``n + m = total`` from distributions at several angles."""
    dists = [dists] if isinstance(dists, OutputDistribution) else list(dists)
    if not dists:
        raise ValueError("no distributions given")
    n, m = _slice_indices(dists[0].probs.shape, total)
    probs = np.array([d.probs[n, m] for d in dists])
    thetas = np.array([d.theta for d in dists])
    return SliceTable(total, thetas, n - m, probs)


def polar_slice(inp: InterferometerInput, total: int, thetas) -> SliceTable:
    """:func:`fixed_total_slice` over an angle grid, propagating each component once."""
    n, m = _slice_indices(inp.dims, total)
    thetas = np.asarray(thetas, dtype=float)
    lam, vecs = inp.components
    flat = n * inp.dims[1] + m
    probs = np.zeros((thetas.size, n.size))
    for w, v in zip(lam, vecs):
        probs += w * np.abs(inp.jy.rotate_many(v, thetas)[:, flat]) ** 2
    return SliceTable(total, thetas, n - m, probs)
