"""Conditional preparation of non-classical light in a dispersive cavity.

An atom in ``(|b> + |c>)/sqrt(2)`` crosses a cavity holding a coherent state.
Level ``b`` picks up the phase ``exp(-i n U0 t)``; a pi/2 pulse then mixes
``b`` and ``c`` and only runs where the atom is found in ``b`` are kept.
The retained field is proportional to ``|alpha e^{-i U0 t}> - |alpha>``.

Times and rates are dimensionless (``hbar = 1``).  The atom is stored as the
slow index of the atom-field density matrix with level order ``(b, c)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ._validation import check_dimension, check_finite_scalar, check_nonnegative
from .exceptions import EmptyPostSelectionError
from .fock import (DensityMatrix, FockVector, ModeCutoff, as_cutoff, coherent_amplitudes,
                   coherent_state, default_cutoff)
from .lindblad import IntegratorConfig, integrate, project_physical

__all__ = [
    "PrepParams",
    "PreparedState",
    "ExtractionParams",
    "TwoModeBasis",
    "post_selection_probability",
    "loss_timescale",
    "prepare_ideal",
    "cat_reference",
    "prepare_lossy",
    "atom_field_evolution",
    "extract_mode",
    "extraction_series",
    "ExtractionSnapshot",
    "PI_HALF_PULSE",
]

TWO_PI = 2.0 * math.pi
#: pi/2 pulse in the (b, c) basis: |b> -> (|b> + |c>)/sqrt2, |c> -> (-|b> + |c>)/sqrt2
PI_HALF_PULSE = np.array([[1.0, -1.0], [1.0, 1.0]]) / math.sqrt(2.0)
#: guard on the two-mode extraction basis
EXTRACTION_MAX_DIMENSION = 4096


@dataclass(frozen=True)
class PrepParams:
    """Preparation settings; ``cutoff`` defaults to the policy for ``|alpha|^2``."""

    alpha: complex
    U0: float = 1.0
    t: float = math.pi
    kappa: float = 0.0
    cutoff: ModeCutoff | int | None = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_finite_scalar(self.alpha, "alpha", complex_ok=True))
        object.__setattr__(self, "U0", check_finite_scalar(self.U0, "U0"))
        object.__setattr__(self, "t", check_nonnegative(self.t, "t"))
        object.__setattr__(self, "kappa", check_nonnegative(self.kappa, "kappa"))
        cut = default_cutoff(abs(self.alpha) ** 2) if self.cutoff is None else as_cutoff(self.cutoff)
        object.__setattr__(self, "cutoff", cut)

    @property
    def phase(self) -> float:
        """The dispersive phase ``U0 t``."""
        return self.U0 * self.t

    @property
    def n_alpha(self) -> float:
        return abs(self.alpha) ** 2


@dataclass(frozen=True)
class PreparedState:
    light: FockVector | DensityMatrix
    success_probability: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def is_pure(self) -> bool:
        return isinstance(self.light, FockVector)

    def density(self) -> DensityMatrix:
        return self.light.to_density() if self.is_pure else self.light


@dataclass(frozen=True)
class ExtractionParams:
    """Cavity-to-propagating-mode transfer at rate ``kappa_T`` for ``tau``,
    with mirror absorption ``kappa_tilde``."""

    kappa_T: float
    tau: float
    kappa_tilde: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kappa_T", check_finite_scalar(self.kappa_T, "kappa_T"))
        object.__setattr__(self, "tau", check_nonnegative(self.tau, "tau"))
        object.__setattr__(self, "kappa_tilde", check_nonnegative(self.kappa_tilde, "kappa_tilde"))


def post_selection_probability(alpha: complex, phase: float) -> float:
    """Closed-form probability of finding the atom in ``b``."""
    n = abs(alpha) ** 2
    return 0.5 * (1.0 - math.exp(n * (math.cos(phase) - 1.0)) * math.cos(n * math.sin(phase)))


def loss_timescale(kappa: float, U0: float, n_alpha: float) -> float:
    """Time ``tau`` solving ``kappa tau (U0 tau)^2 n_alpha = 1``."""
    denom = kappa * U0 ** 2 * n_alpha
    return math.inf if denom == 0 else denom ** (-1.0 / 3.0)


def _phase_is_trivial(phase: float, tol: float = 1e-12) -> bool:
    r = math.fmod(abs(phase), TWO_PI)
    return min(r, TWO_PI - r) <= tol


def _coherent_coefficients(params: PrepParams) -> np.ndarray:
    return coherent_state(params.alpha, params.cutoff).amplitudes


def prepare_ideal(params: PrepParams) -> PreparedState:
    """Loss-free preparation followed by post-selection on ``|b>``."""
    phase = params.phase
    if _phase_is_trivial(phase):
        raise EmptyPostSelectionError(f"U0 t = {phase!r} is a multiple of 2 pi: "
                                      "empty post-selection")
    n = np.arange(params.cutoff.dim)
    kept = -1j * np.exp(-0.5j * n * phase) * np.sin(0.5 * n * phase) * _coherent_coefficients(params)
    prob = float(np.vdot(kept, kept).real)
    if prob <= 1e-300:
        raise EmptyPostSelectionError("empty post-selection: the |b> outcome has zero weight")
    light = FockVector(kept / math.sqrt(prob), (params.cutoff,))
    return PreparedState(light, prob, {"phase": phase})


def cat_reference(params: PrepParams) -> FockVector:
    """Normalized ``|alpha e^{-i U0 t}> - |alpha>`` from two coherent states."""
    phase = params.phase
    if _phase_is_trivial(phase):
        raise EmptyPostSelectionError("the two coherent components coincide")
    rotated = coherent_amplitudes(params.alpha * np.exp(-1j * phase), params.cutoff.n_max)
    plain = coherent_amplitudes(params.alpha, params.cutoff.n_max)
    diff = rotated - plain
    nrm = np.linalg.norm(diff)
    if nrm < 1e-12:
        raise EmptyPostSelectionError("zero-norm coherent-state difference")
    return FockVector(diff / nrm, (params.cutoff,))


def _project_on_b(rho_atom_field: np.ndarray, d: int):
    """Apply the pi/2 pulse and keep the ``b`` outcome; returns the unnormalized field block."""
    blocks = rho_atom_field.reshape(2, d, 2, d)
    r = PI_HALF_PULSE[0]
    return np.einsum("x,xiyj,y->ij", r, blocks, r.conj())


def atom_field_evolution(params: PrepParams, integrator: IntegratorConfig | None = None,
                         observer=None):
    """Evolve ``|+><+| (x) |alpha><alpha|`` for ``params.t`` before the pulse.

    Uses ``H = U0 |b><b| (x) a^dag a`` and the decaying dissipator
    ``kappa (2 a rho a^dag - {a^dag a, rho})``, so the mean photon number
    falls as ``exp(-2 kappa t)``.  ``observer`` is passed to the integrator.
    """
    cut = params.cutoff
    d = cut.dim
    n_op = sparse.diags(np.arange(d, dtype=float))
    a_op = sparse.diags(np.sqrt(np.arange(1, d, dtype=float)), 1)
    proj_b = sparse.csr_matrix(([1.0], ([0], [0])), shape=(2, 2))
    H = params.U0 * sparse.kron(proj_b, n_op, format="csr")
    jumps = []
    if params.kappa > 0:
        jumps.append(math.sqrt(2.0 * params.kappa) * sparse.kron(sparse.identity(2), a_op, format="csr"))

    atom = np.array([1.0, 1.0]) / math.sqrt(2.0)
    psi0 = np.kron(atom, _coherent_coefficients(params))
    rho0 = np.outer(psi0, psi0.conj())
    rate = max(abs(params.U0) * cut.n_max, params.kappa * cut.n_max, 1e-12)
    return integrate(rho0, H, jumps, params.t, rate, integrator, observer)


def prepare_lossy(params: PrepParams, integrator: IntegratorConfig | None = None) -> PreparedState:
    """Atom-field master equation with cavity loss, then pulse and post-selection."""
    d = params.cutoff.dim
    evo = atom_field_evolution(params, integrator)
    field_b = _project_on_b(evo.rho, d)
    prob = float(np.trace(field_b).real)
    if prob <= 1e-300:
        raise EmptyPostSelectionError("empty post-selection: the |b> outcome has zero weight")
    field_b, clipped = project_physical(field_b / prob)
    light = DensityMatrix(field_b, (params.cutoff,), "field")
    diag = {"phase": params.phase, "clipped_weight": clipped, **evo.diagnostics()}
    return PreparedState(light, prob, diag)


class TwoModeBasis:
    """Number basis ``|n, m>`` of two modes, optionally limited to ``n + m <= max_total``."""

    def __init__(self, cutoff_a, cutoff_b, max_total=None):
        self.cutoffs = (as_cutoff(cutoff_a), as_cutoff(cutoff_b))
        na, nb = (c.n_max for c in self.cutoffs)
        n, m = np.meshgrid(np.arange(na + 1), np.arange(nb + 1), indexing="ij")
        n, m = n.ravel(), m.ravel()
        if max_total is not None:
            keep = n + m <= max_total
            n, m = n[keep], m[keep]
        self.n, self.m = n, m
        self.max_total = max_total
        self.dim = n.size
        self._index = {(int(i), int(j)): k for k, (i, j) in enumerate(zip(n, m))}

    def index(self, n, m):
        return self._index.get((n, m))

    def _ladder(self, which):
        rows, cols, vals = [], [], []
        for k, (n, m) in enumerate(zip(self.n, self.m)):
            src = (n - 1, m) if which == "a" else (n, m - 1)
            count = n if which == "a" else m
            if count == 0:
                continue
            j = self.index(int(src[0]), int(src[1]))
            if j is not None:
                rows.append(j)
                cols.append(k)
                vals.append(math.sqrt(count))
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim), dtype=complex)

    def annihilation_a(self):
        return self._ladder("a")

    def annihilation_b(self):
        return self._ladder("b")

    def embed_product(self, rho_a: np.ndarray) -> np.ndarray:
        """``rho_a (x) |0><0|_b`` in this basis."""
        d = rho_a.shape[0]
        idx = np.array([self.index(i, 0) for i in range(d)])
        if np.any(idx == None):  # noqa: E711
            raise ValueError("basis cannot hold the cavity state with an empty second mode")
        idx = idx.astype(int)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        out[np.ix_(idx, idx)] = rho_a
        return out

    def trace_out_a(self, rho: np.ndarray) -> np.ndarray:
        db = self.cutoffs[1].dim
        out = np.zeros((db, db), dtype=complex)
        for n_val in np.unique(self.n):
            sel = np.nonzero(self.n == n_val)[0]
            ms = self.m[sel]
            out[np.ix_(ms, ms)] += rho[np.ix_(sel, sel)]
        return out


@dataclass(frozen=True, eq=False)
class ExtractionSnapshot:
    tau: float
    state: DensityMatrix
    diagnostics: dict


def _extraction_setup(prepared, params, truncate_total, max_dimension):
    rho_a = prepared.density()
    if rho_a.structure != "field":
        raise ValueError("extraction needs a single-mode prepared state")
    cut = rho_a.cutoffs[0]
    basis = TwoModeBasis(cut, cut, cut.n_max if truncate_total else None)
    check_dimension(basis.dim, max_dimension)
    a = basis.annihilation_a()
    b = basis.annihilation_b()
    H = 1j * params.kappa_T * (b.conj().T @ a - a.conj().T @ b)
    jumps = [math.sqrt(2.0 * params.kappa_tilde) * a] if params.kappa_tilde > 0 else []
    rate = max(abs(params.kappa_T) * cut.n_max, params.kappa_tilde * cut.n_max, 1e-12)
    return cut, basis, basis.embed_product(rho_a.matrix), H, jumps, rate


def extraction_series(prepared: PreparedState, params: ExtractionParams, taus,
                      integrator: IntegratorConfig | None = None, *,
                      truncate_total: bool = True,
                      max_dimension: int = EXTRACTION_MAX_DIMENSION) -> list:
    """Propagating-mode states at every transfer time in ``taus``.

    One run covers the whole series: the evolution is continued from one
    requested time to the next.  ``params.tau`` is ignored.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or np.any(taus < 0) or np.any(np.diff(taus) < 0):
        raise ValueError("taus must be a nondecreasing sequence of times >= 0")
    cut, basis, rho, H, jumps, rate = _extraction_setup(prepared, params, truncate_total,
                                                        max_dimension)
    out, now, drift = [], 0.0, 0.0
    for tau in taus:
        evo = integrate(rho, H, jumps, tau - now, rate, integrator)
        rho, now = evo.rho, tau
        drift += evo.trace_drift
        reduced, clipped = project_physical(basis.trace_out_a(rho))
        diag = {**evo.diagnostics(), "trace_drift": drift, "clipped_weight": clipped,
                "basis_dimension": basis.dim}
        out.append(ExtractionSnapshot(float(tau), DensityMatrix(reduced, (cut,), "field"), diag))
    return out


def extract_mode(prepared: PreparedState, params: ExtractionParams,
                 integrator: IntegratorConfig | None = None, *,
                 truncate_total: bool = True,
                 max_dimension: int = EXTRACTION_MAX_DIMENSION) -> DensityMatrix:
    """Transfer the cavity field into a propagating mode and return that mode.

    The cavity mode ``a`` and the initially empty propagating mode ``b``
    evolve under ``H = i kappa_T (b^dag a - a^dag b)`` with mirror absorption
    ``kappa_tilde (2 a rho a^dag - {a^dag a, rho})``.  The propagating mode's
    phase reference is chosen so that ``kappa_T tau = pi/2`` maps the cavity
    state onto ``b`` without any photon-number-dependent phase.

    With ``truncate_total`` the basis keeps only ``n + m <= n_max``; the
    transfer conserves ``n + m`` and absorption lowers it, so no population
    leaves this subspace.
    """
    snap = extraction_series(prepared, params, [params.tau], integrator,
                             truncate_total=truncate_total, max_dimension=max_dimension)
    return snap[0].state
