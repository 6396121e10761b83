"""Fixed-step RK4 integration of Lindblad master equations.

The generator is

    d rho / dt = -i [H, rho] + sum_k (L_k rho L_k^dag - {L_k^dag L_k, rho} / 2)

with ``hbar = 1``.  Operators may be dense arrays or scipy sparse matrices;
``rho`` is kept dense.  Every ``check_every`` steps a step-doubling (Richardson)
estimate of the local error is compared with ``error_tolerance`` per unit
time; a failing estimate halves the step and restarts, up to ``max_retries``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .exceptions import IntegrationError

__all__ = ["IntegratorConfig", "Evolution", "LindbladGenerator", "integrate", "project_physical"]


@dataclass(frozen=True)
class IntegratorConfig:
    """Step and tolerance settings.

    The step is ``step_scale / rate_scale`` where the caller supplies
    ``rate_scale`` as the fastest frequency of the problem.
    """

    step_scale: float = 0.05
    trace_tolerance: float = 1e-6
    error_tolerance: float = 1e-8
    max_retries: int = 4
    check_every: int = 200

    def __post_init__(self):
        if not self.step_scale > 0:
            raise ValueError("step_scale must be positive")
        if not self.trace_tolerance > 0:
            raise ValueError("trace_tolerance must be positive")
        if self.max_retries < 0 or self.check_every < 1:
            raise ValueError("max_retries must be >= 0 and check_every >= 1")

    def to_dict(self):
        return {"step_scale": self.step_scale, "trace_tolerance": self.trace_tolerance,
                "error_tolerance": self.error_tolerance, "max_retries": self.max_retries,
                "check_every": self.check_every}


@dataclass(frozen=True)
class Evolution:
    rho: np.ndarray
    step: float
    n_steps: int
    trace_drift: float
    error_estimate: float
    retries: int

    def diagnostics(self):
        return {"step": self.step, "n_steps": self.n_steps, "trace_drift": self.trace_drift,
                "error_estimate": self.error_estimate, "retries": self.retries}


def _as_operator(op):
    if sparse.issparse(op):
        return sparse.csr_matrix(op, dtype=complex)
    return np.asarray(op, dtype=complex)


class LindbladGenerator:
    """Right-hand side of the master equation for Hermitian ``rho``."""

    def __init__(self, hamiltonian, jump_operators=()):
        self.H = _as_operator(hamiltonian)
        self.jumps = [_as_operator(L) for L in jump_operators]
        self.decay = None
        for L in self.jumps:
            K = (L.conj().T @ L) * 0.5
            self.decay = K if self.decay is None else self.decay + K

    def __call__(self, rho):
        # -i [H, rho] - {K, rho} with K = sum L^dag L / 2; rho is Hermitian so
        # rho X = (X rho)^dag for Hermitian X.
        G = -1j * (self.H @ rho)
        if self.decay is not None:
            G = G - self.decay @ rho
        out = G + G.conj().T
        for L in self.jumps:
            Lr = L @ rho
            out += L @ Lr.conj().T
        return out


def _rk4_step(f, rho, h):
    k1 = f(rho)
    k2 = f(rho + 0.5 * h * k1)
    k3 = f(rho + 0.5 * h * k2)
    k4 = f(rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(rho0, hamiltonian, jump_operators, duration, rate_scale,
              config: IntegratorConfig | None = None, observer=None) -> Evolution:
    """Evolve ``rho0`` for ``duration``.

    ``observer(step_index, time, rho)`` is called after every accepted step
    (and at ``t = 0``) when given; it must not modify ``rho``.
    """
    config = config or IntegratorConfig()
    rho0 = np.array(rho0, dtype=complex)
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if duration == 0:
        if observer is not None:
            observer(0, 0.0, rho0)
        return Evolution(rho0, 0.0, 0, 0.0, 0.0, 0)
    f = LindbladGenerator(hamiltonian, jump_operators)
    tr0 = np.trace(rho0).real
    h_max = config.step_scale / max(rate_scale, 1e-12)
    n_steps = max(1, math.ceil(duration / h_max - 1e-9))

    for attempt in range(config.max_retries + 1):
        h = duration / n_steps
        rho = rho0.copy()
        drift = 0.0
        worst_err = 0.0
        if observer is not None:
            observer(0, 0.0, rho)
        rejected = False
        for k in range(n_steps):
            nxt = _rk4_step(f, rho, h)
            if k % config.check_every == 0:
                half = _rk4_step(f, _rk4_step(f, rho, 0.5 * h), 0.5 * h)
                err = np.max(np.abs(nxt - half)) / 15.0 / h
                worst_err = max(worst_err, err)
                if err > config.error_tolerance:
                    rejected = True
                    break
            rho = nxt
            drift = max(drift, abs(np.trace(rho).real - tr0))
            if drift > config.trace_tolerance:
                raise IntegrationError(f"trace drift {drift:.3g} exceeds "
                                       f"{config.trace_tolerance:.3g} at t = {(k + 1) * h:.6g}")
            if observer is not None:
                observer(k + 1, (k + 1) * h, rho)
        if not rejected:
            return Evolution(rho, h, n_steps, drift, worst_err, attempt)
        n_steps *= 2
    raise IntegrationError(f"step rejected after {config.max_retries} retries "
                           f"(error estimate {worst_err:.3g} per unit time)")


def project_physical(rho, tolerance: float = 1e-7):
    """Hermitize, clip small negative eigenvalues and renormalize.

    Integrator round-off leaves eigenvalues of order ``-1e-10``; anything more
    negative than ``-tolerance`` is a real failure and raises.  Returns the
    projected matrix and the clipped negative weight.
    """
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    lam, vec = np.linalg.eigh(rho)
    if lam[0] < -tolerance * max(tr, 1e-300):
        raise IntegrationError(f"evolved state has eigenvalue {lam[0]:.3g}")
    clipped = float(-lam[lam < 0].sum())
    if clipped == 0.0:
        return rho, 0.0
    lam = np.clip(lam, 0.0, None)
    out = (vec * lam) @ vec.conj().T
    return out * (tr / lam.sum()), clipped
