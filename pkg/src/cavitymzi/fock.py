"""Truncated bosonic Fock-space algebra.

States of one or two modes live in a number basis truncated at ``n_max`` per
mode.  Two-mode amplitudes are stored row-major with mode ``a`` varying
slowest, i.e. the flat index of ``|n, m>`` is ``n * (n_max_b + 1) + m``.

The Mach-Zehnder generator ``Jy = (a^dag b - b^dag a) / 2i`` conserves the
total photon number ``N = n + m``; :class:`JyOperator` stores it as one small
Hermitian block per ``N`` and diagonalizes each block once, so that
``exp(-i theta Jy)`` costs a handful of small matrix products.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy import stats
from scipy.special import gammaln

from ._validation import check_dimension, check_finite_scalar
from .exceptions import NonPhysicalStateError, TruncationWarning

__all__ = [
    "ModeCutoff",
    "FockVector",
    "DensityMatrix",
    "JyOperator",
    "as_cutoff",
    "default_cutoff",
    "coherent_state",
    "number_state",
    "vacuum",
    "tensor_product",
    "apply_jy",
    "jy_operator",
    "partial_trace",
    "truncation_tail_mass",
    "fidelity",
    "annihilation",
    "state_to_dict",
    "state_from_dict",
]

SCHEMA_VERSION = "fockstate-v1"
STRUCTURES = ("field", "atom_field", "two_mode_field")
#: predicted neglected Poisson weight above which a truncation warning is emitted
TAIL_WARNING_LEVEL = 1e-10


@dataclass(frozen=True)
class ModeCutoff:
    """Highest retained occupation of one bosonic mode."""

    n_max: int

    def __post_init__(self):
        if isinstance(self.n_max, bool) or not isinstance(self.n_max, (int, np.integer)):
            raise TypeError(f"n_max must be an integer, got {type(self.n_max).__name__}")
        if self.n_max < 0:
            raise ValueError(f"n_max must be >= 0, got {self.n_max}")
        object.__setattr__(self, "n_max", int(self.n_max))

    @property
    def dim(self) -> int:
        return self.n_max + 1

    @classmethod
    def for_mean(cls, mean_occupation: float) -> "ModeCutoff":
        return default_cutoff(mean_occupation)


def as_cutoff(value) -> ModeCutoff:
    if isinstance(value, ModeCutoff):
        return value
    return ModeCutoff(value)


def default_cutoff(mean_occupation: float) -> ModeCutoff:
    """Cutoff ``ceil(n + 6 sqrt(n) + 10)`` for a mode of mean occupation ``n``."""
    n = check_finite_scalar(mean_occupation, "mean_occupation")
    if n < 0:
        raise ValueError("mean occupation must be >= 0")
    return ModeCutoff(int(math.ceil(n + 6.0 * math.sqrt(n) + 10.0)))


def _freeze(arr):
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FockVector:
    """Pure state of one or two truncated modes."""

    amplitudes: np.ndarray
    cutoffs: tuple

    def __post_init__(self):
        cutoffs = tuple(as_cutoff(c) for c in self.cutoffs)
        if len(cutoffs) not in (1, 2):
            raise ValueError("a FockVector has one or two modes")
        amps = np.array(self.amplitudes, dtype=complex).ravel()
        dim = math.prod(c.dim for c in cutoffs)
        if amps.size != dim:
            raise ValueError(f"expected {dim} amplitudes for cutoffs "
                             f"{[c.n_max for c in cutoffs]}, got {amps.size}")
        object.__setattr__(self, "cutoffs", cutoffs)
        object.__setattr__(self, "amplitudes", _freeze(amps))

    @property
    def modes(self) -> int:
        return len(self.cutoffs)

    @property
    def dims(self) -> tuple:
        return tuple(c.dim for c in self.cutoffs)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def structure(self) -> str:
        return "field" if self.modes == 1 else "two_mode_field"

    def as_array(self) -> np.ndarray:
        """Amplitudes reshaped to ``(dim_a,)`` or ``(dim_a, dim_b)``."""
        return self.amplitudes.reshape(self.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "FockVector":
        nrm = self.norm()
        if nrm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return FockVector(self.amplitudes / nrm, self.cutoffs)

    def photon_distribution(self, mode: int = 0) -> np.ndarray:
        probs = np.abs(self.as_array()) ** 2
        if self.modes == 1:
            return probs
        return probs.sum(axis=1 - mode)

    def mean_photon_number(self, mode=None) -> float:
        if mode is None:
            return sum(self.mean_photon_number(k) for k in range(self.modes))
        p = self.photon_distribution(mode)
        return float(np.dot(np.arange(p.size), p))

    def inner(self, other: "FockVector") -> complex:
        """``<self|other>``."""
        if self.dims != other.dims:
            raise ValueError("states have different dimensions")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()),
                             self.cutoffs, self.structure)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix of a field mode, an atom-field pair or two field modes.

    For ``atom_field`` the atom (levels ``b``, ``c``) is the slow index and
    ``cutoffs`` holds the single field cutoff.
    """

    matrix: np.ndarray
    cutoffs: tuple
    structure: str = "field"

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        cutoffs = tuple(as_cutoff(c) for c in self.cutoffs)
        expected_modes = 2 if self.structure == "two_mode_field" else 1
        if len(cutoffs) != expected_modes:
            raise ValueError(f"{self.structure} needs {expected_modes} cutoff(s)")
        object.__setattr__(self, "cutoffs", cutoffs)
        mat = np.array(self.matrix, dtype=complex)
        dim = math.prod(self.dims)
        if mat.shape != (dim, dim):
            raise ValueError(f"expected a {dim}x{dim} matrix, got {mat.shape}")
        object.__setattr__(self, "matrix", _freeze(mat))

    @property
    def dims(self) -> tuple:
        if self.structure == "atom_field":
            return (2, self.cutoffs[0].dim)
        return tuple(c.dim for c in self.cutoffs)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def modes(self) -> int:
        return len(self.cutoffs)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    @cached_property
    def _eigh(self):
        herm = 0.5 * (self.matrix + self.matrix.conj().T)
        return np.linalg.eigh(herm)

    def eigenvalues(self) -> np.ndarray:
        return self._eigh[0]

    def eigensystem(self):
        """Eigenvalues (ascending) and eigenvectors as columns."""
        return self._eigh

    def check_physical(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-10):
        """Raise :class:`NonPhysicalStateError` unless Hermitian, unit trace and PSD."""
        herm = self.hermiticity_error()
        if herm > herm_tol:
            raise NonPhysicalStateError(f"not Hermitian (max |rho - rho^dag| = {herm:.3g})")
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise NonPhysicalStateError(f"trace {tr.real:.12g} differs from 1")
        lam_min = self.eigenvalues()[0]
        if lam_min < -eig_tol:
            raise NonPhysicalStateError(f"negative eigenvalue {lam_min:.3g}")
        return self

    def normalize(self) -> "DensityMatrix":
        tr = self.trace().real
        if tr <= 0:
            raise ValueError("cannot normalize a density matrix with non-positive trace")
        return DensityMatrix(self.matrix / tr, self.cutoffs, self.structure)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def photon_distribution(self, mode: int = 0) -> np.ndarray:
        """Marginal number distribution of a field mode."""
        diag = np.real(np.diag(self.matrix)).reshape(self.dims)
        if self.structure == "field":
            return diag
        if self.structure == "atom_field":
            return diag.sum(axis=0)
        return diag.sum(axis=1 - mode)

    def mean_photon_number(self, mode=None) -> float:
        if mode is None and self.structure == "two_mode_field":
            return self.mean_photon_number(0) + self.mean_photon_number(1)
        p = self.photon_distribution(mode or 0)
        return float(np.dot(np.arange(p.size), p))


# ---------------------------------------------------------------- constructors

def vacuum(cutoff) -> FockVector:
    return number_state(0, cutoff)


def number_state(n: int, cutoff) -> FockVector:
    cutoff = as_cutoff(cutoff)
    if not 0 <= n <= cutoff.n_max:
        raise ValueError(f"number state |{n}> outside cutoff {cutoff.n_max}")
    amps = np.zeros(cutoff.dim, dtype=complex)
    amps[n] = 1.0
    return FockVector(amps, (cutoff,))


def coherent_amplitudes(amplitude: complex, n_max: int) -> np.ndarray:
    """Untruncated-normalization coefficients ``exp(-|a|^2/2) a^n / sqrt(n!)``."""
    n = np.arange(n_max + 1)
    if amplitude == 0:
        return (n == 0).astype(complex)
    log_mag = -0.5 * abs(amplitude) ** 2 + n * math.log(abs(amplitude)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(amplitude))


def coherent_state(amplitude: complex, cutoff) -> FockVector:
    """Coherent state ``|alpha>`` renormalized on the truncated basis."""
    alpha = check_finite_scalar(amplitude, "amplitude", complex_ok=True)
    cutoff = as_cutoff(cutoff)
    neglected = float(stats.poisson.sf(cutoff.n_max, abs(alpha) ** 2)) if alpha != 0 else 0.0
    if neglected >= TAIL_WARNING_LEVEL:
        warnings.warn(f"cutoff {cutoff.n_max} neglects Poisson weight {neglected:.2e} "
                      f"of |alpha|^2 = {abs(alpha) ** 2:.4g}", TruncationWarning, stacklevel=2)
    amps = coherent_amplitudes(alpha, cutoff.n_max)
    return FockVector(amps / np.linalg.norm(amps), (cutoff,))


def tensor_product(a: FockVector, b: FockVector, max_dimension=None) -> FockVector:
    """Two-mode product ``|a> (x) |b>`` with amplitude ``a_n b_m`` at ``(n, m)``."""
    if a.modes != 1 or b.modes != 1:
        raise ValueError("tensor_product takes two single-mode states")
    check_dimension(a.dim * b.dim, max_dimension)
    return FockVector(np.outer(a.amplitudes, b.amplitudes), a.cutoffs + b.cutoffs)


def annihilation(cutoff) -> np.ndarray:
    """Dense truncated annihilation operator."""
    cutoff = as_cutoff(cutoff)
    return np.diag(np.sqrt(np.arange(1, cutoff.dim)), 1).astype(complex)


# ------------------------------------------------------------- MZI generator

@dataclass(frozen=True)
class JyBlock:
    total: int
    indices: np.ndarray      # flat two-mode indices, ordered by n ascending
    matrix: np.ndarray       # Hermitian block of Jy
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def propagator(self, theta: float) -> np.ndarray:
        phases = np.exp(-1j * theta * self.eigenvalues)
        return (self.eigenvectors * phases) @ self.eigenvectors.conj().T


class JyOperator:
    """``Jy = (a^dag b - b^dag a) / 2i`` on two truncated modes.

    Use :func:`jy_operator` to obtain a cached instance.
    """

    def __init__(self, cutoff_a, cutoff_b):
        self.cutoffs = (as_cutoff(cutoff_a), as_cutoff(cutoff_b))
        self.na, self.nb = (c.n_max for c in self.cutoffs)
        self.dim = (self.na + 1) * (self.nb + 1)
        self.blocks = tuple(self._build_block(N) for N in range(self.na + self.nb + 1))

    def _build_block(self, total):
        nb1 = self.nb + 1
        n = np.arange(max(0, total - self.nb), min(self.na, total) + 1)
        m = total - n
        d = n.size
        mat = np.zeros((d, d), dtype=complex)
        # <n+1, m-1| Jy |n, m> = -i sqrt((n+1) m) / 2
        lower = -0.5j * np.sqrt((n[:-1] + 1.0) * m[:-1])
        idx = np.arange(d - 1)
        mat[idx + 1, idx] = lower
        mat[idx, idx + 1] = lower.conj()
        lam, vec = np.linalg.eigh(mat)
        return JyBlock(total, n * nb1 + m, _freeze(mat), _freeze(lam), _freeze(vec))

    def apply(self, states: np.ndarray) -> np.ndarray:
        """``Jy`` applied to flat state(s) of shape ``(dim,)`` or ``(k, dim)``."""
        states = np.asarray(states, dtype=complex)
        lead = states.shape[:-1]
        psi = states.reshape(lead + (self.na + 1, self.nb + 1))
        out = np.zeros_like(psi)
        n = np.arange(self.na + 1)[:, None]
        m = np.arange(self.nb + 1)[None, :]
        raise_a = np.sqrt((n[:-1] + 1.0) * m[:, 1:])          # a^dag b on (n, m>=1)
        lower_a = np.sqrt(n[1:] * (m[:, :-1] + 1.0))          # b^dag a on (n>=1, m)
        out[..., 1:, :-1] += raise_a * psi[..., :-1, 1:]
        out[..., :-1, 1:] -= lower_a * psi[..., 1:, :-1]
        return (out / 2j).reshape(states.shape)

    def dense(self) -> np.ndarray:
        """Dense matrix built from Kronecker products of ladder operators."""
        a = annihilation(self.cutoffs[0])
        b = annihilation(self.cutoffs[1])
        A = np.kron(a, np.eye(self.nb + 1))
        B = np.kron(np.eye(self.na + 1), b)
        return (A.conj().T @ B - B.conj().T @ A) / 2j

    def rotate(self, states: np.ndarray, theta: float) -> np.ndarray:
        """``exp(-i theta Jy)`` applied to flat state(s) ``(dim,)`` or ``(k, dim)``."""
        states = np.asarray(states, dtype=complex)
        out = np.empty_like(states)
        for blk in self.blocks:
            U = blk.propagator(theta)
            out[..., blk.indices] = states[..., blk.indices] @ U.T
        return out

    def rotate_many(self, state: np.ndarray, thetas) -> np.ndarray:
        """One flat state rotated to every angle in ``thetas``; shape ``(len(thetas), dim)``."""
        thetas = np.asarray(thetas, dtype=float)
        state = np.asarray(state, dtype=complex)
        out = np.empty((thetas.size, state.size), dtype=complex)
        for blk in self.blocks:
            coeff = blk.eigenvectors.conj().T @ state[blk.indices]
            phases = np.exp(-1j * np.outer(thetas, blk.eigenvalues))
            out[:, blk.indices] = (phases * coeff) @ blk.eigenvectors.T
        return out

    def conjugate(self, matrix: np.ndarray, theta: float) -> np.ndarray:
        """``exp(-i theta Jy) M exp(+i theta Jy)`` for a dense two-mode matrix."""
        left = self.rotate(np.asarray(matrix, dtype=complex).T, theta).T
        return self.rotate(left.conj(), theta).conj()


@lru_cache(maxsize=16)
def _cached_jy(na: int, nb: int) -> JyOperator:
    return JyOperator(na, nb)


def jy_operator(cutoff_a, cutoff_b) -> JyOperator:
    return _cached_jy(as_cutoff(cutoff_a).n_max, as_cutoff(cutoff_b).n_max)


def apply_jy(state: FockVector) -> FockVector:
    """``Jy |psi>`` (not normalized)."""
    if state.modes != 2:
        raise ValueError("apply_jy needs a two-mode state")
    jy = jy_operator(*state.cutoffs)
    return FockVector(jy.apply(state.amplitudes), state.cutoffs)


# ------------------------------------------------------------- reductions

_MODE_NAMES = {
    "two_mode_field": {"a": 0, "b": 1, 0: 0, 1: 1},
    "atom_field": {"atom": 0, "field": 1, 0: 0, 1: 1},
}


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced density matrix of the subsystem ``keep``.

    ``keep`` is ``"a"``/``"b"`` (or 0/1) for two field modes and
    ``"atom"``/``"field"`` for an atom-field state.  A kept atom is returned
    as a plain 2x2 array since it is not a field state.
    """
    names = _MODE_NAMES.get(rho.structure)
    if names is None:
        raise ValueError(f"cannot take a partial trace of a {rho.structure} state")
    if keep not in names:
        raise ValueError(f"invalid subsystem {keep!r} for {rho.structure}")
    k = names[keep]
    d0, d1 = rho.dims
    t = rho.matrix.reshape(d0, d1, d0, d1)
    reduced = np.einsum("ijkj->ik", t) if k == 0 else np.einsum("ijil->jl", t)
    if rho.structure == "atom_field":
        if k == 0:
            return reduced
        return DensityMatrix(reduced, rho.cutoffs, "field")
    return DensityMatrix(reduced, (rho.cutoffs[k],), "field")


def _edge_mask(dims, cutoffs_dims):
    grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
    mask = np.zeros(dims, dtype=bool)
    for g, top in zip(grids[-len(cutoffs_dims):], cutoffs_dims):
        mask |= g == top - 1
    return mask.ravel()


def truncation_tail_mass(state) -> float:
    """Probability on basis states where some mode sits at its cutoff."""
    if isinstance(state, FockVector):
        probs = np.abs(state.amplitudes) ** 2
        return float(probs[_edge_mask(state.dims, state.dims)].sum())
    if isinstance(state, DensityMatrix):
        probs = np.real(np.diag(state.matrix))
        field_dims = tuple(c.dim for c in state.cutoffs)
        return float(probs[_edge_mask(state.dims, field_dims)].sum())
    raise TypeError("expected a FockVector or DensityMatrix")


def _sqrtm_psd(mat):
    lam, vec = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    # round-off eigenvalues would contribute their square roots (~1e-8)
    lam = np.where(lam > 1e-14 * max(lam[-1], 1e-300), lam, 0.0)
    return (vec * np.sqrt(lam)) @ vec.conj().T


def fidelity(x, y) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`` of two states."""
    if isinstance(x, FockVector) and isinstance(y, FockVector):
        return abs(x.inner(y)) ** 2
    if isinstance(x, DensityMatrix) and isinstance(y, FockVector):
        x, y = y, x
    if isinstance(x, FockVector):
        v = x.amplitudes
        return float(np.real(np.vdot(v, y.matrix @ v)))
    # ||sqrt(rho) sqrt(sigma)||_1 squared
    sv = np.linalg.svd(_sqrtm_psd(x.matrix) @ _sqrtm_psd(y.matrix), compute_uv=False)
    return float(np.sum(sv) ** 2)


# ------------------------------------------------------------- serialization

def state_to_dict(state, **extra) -> dict:
    """Serialize to the ``fockstate-v1`` JSON layout."""
    if isinstance(state, FockVector):
        kind, data = "vector", state.amplitudes
    elif isinstance(state, DensityMatrix):
        kind, data = "density", state.matrix.ravel()
    else:
        raise TypeError("expected a FockVector or DensityMatrix")
    out = {
        "version": SCHEMA_VERSION,
        "kind": kind,
        "structure": state.structure,
        "cutoffs": [c.n_max for c in state.cutoffs],
        "data": [[float(z.real), float(z.imag)] for z in data],
    }
    out.update(extra)
    return out


def state_from_dict(payload: dict):
    if payload.get("version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported state version {payload.get('version')!r}")
    data = np.asarray(payload["data"], dtype=float)
    values = data[:, 0] + 1j * data[:, 1]
    cutoffs = tuple(payload["cutoffs"])
    if payload.get("kind", "vector") == "vector":
        return FockVector(values, cutoffs)
    dim = int(round(math.sqrt(values.size)))
    return DensityMatrix(values.reshape(dim, dim), cutoffs, payload["structure"])
