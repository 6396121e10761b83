import math

import numpy as np
import pytest
from scipy.linalg import expm

from cavitymzi.exceptions import NoPreferredDirectionError
from cavitymzi.fisher import overlap_deficit
from cavitymzi.fock import DensityMatrix, FockVector, ModeCutoff, coherent_state, number_state, vacuum
from cavitymzi.interferometer import InterferometerInput
from cavitymzi.wigner import (PhaseGrid, WignerMap, default_grid, gradient_direction,
                              shifted_overlap, wigner, wigner_at, wigner_overlap)

from conftest import SQRT10, random_density, random_ket


def parity_oracle(rho, alpha, big=70):
    """(2/pi) Tr[rho D Pi D^dag] with D from a matrix exponential in a larger space."""
    a = np.diag(np.sqrt(np.arange(1, big)), 1)
    D = expm(alpha * a.T - np.conj(alpha) * a)
    P = np.diag((-1.0) ** np.arange(big))
    rho_big = np.zeros((big, big), dtype=complex)
    d = rho.shape[0]
    rho_big[:d, :d] = rho
    return (2 / math.pi) * np.trace(rho_big @ D @ P @ D.conj().T).real


def cat(alpha, sign=1, cutoff=40):
    v = coherent_state(alpha, cutoff).amplitudes + sign * coherent_state(-alpha, cutoff).amplitudes
    return FockVector(v / np.linalg.norm(v), (ModeCutoff(cutoff),))


class TestGrid:
    def test_default_extent(self):
        g = default_grid(10)
        assert g.re_max == pytest.approx(SQRT10 + 4) and g.im_min == pytest.approx(-SQRT10 - 4)
        assert g.points().shape == (201, 201)

    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            PhaseGrid(1, -1, -1, 1)
        with pytest.raises(ValueError):
            PhaseGrid(-1, 1, -1, 1, 1)

    def test_rows_order(self):
        wmap = wigner(vacuum(2), PhaseGrid(-1, 1, -2, 2, 3))
        rows = list(wmap.rows())
        assert rows[0][:2] == (-1.0, -2.0) and rows[1][:2] == (0.0, -2.0)


class TestValues:
    def test_vacuum_origin(self):
        assert wigner_at(vacuum(5), 0) == pytest.approx(2 / math.pi)

    def test_coherent_gaussian(self):
        a0 = 1.3 - 0.4j
        pts = np.array([0, 1, 1j, a0, 2 + 2j])
        got = wigner_at(coherent_state(a0, 40), pts)
        assert np.allclose(got, 2 / math.pi * np.exp(-2 * np.abs(pts - a0) ** 2), atol=1e-12)

    def test_matches_parity_oracle(self, rng):
        rho = random_density(rng, 9)
        state = DensityMatrix(rho, (ModeCutoff(8),))
        for alpha in (0, 0.3, -0.7j, 1.1 + 0.5j, -1.5 + 1.2j):
            assert wigner_at(state, alpha) == pytest.approx(parity_oracle(rho, alpha), abs=1e-10)

    def test_number_state_origin(self):
        for n in range(6):
            assert wigner_at(number_state(n, 6), 0) == pytest.approx((-1) ** n * 2 / math.pi)

    def test_parity_identity(self, rng):
        psi = random_ket(rng, 12)
        parity = np.sum((-1.0) ** np.arange(12) * np.abs(psi) ** 2)
        assert wigner_at(FockVector(psi, (ModeCutoff(11),)), 0) == pytest.approx(2 / math.pi * parity)

    def test_cat_negativity(self, cat_states):
        for key in ("pi/2", "pi"):
            assert wigner(cat_states[key]).values.min() < -0.1
        # U0 t = pi leaves an odd cat: W(0) = -2/pi
        assert wigner_at(cat_states["pi"], 0) == pytest.approx(-2 / math.pi, abs=1e-10)

    def test_coherent_nonnegative(self):
        # the grid corners reach |alpha| ~ 10, so the cutoff must cover them
        assert wigner(coherent_state(SQRT10, 60), default_grid(10)).values.min() >= -1e-10

    def test_normalized(self, cat_states):
        assert wigner(cat_states["pi/2"]).integral() == pytest.approx(1, abs=1e-6)

    def test_mixed_linearity(self, rng):
        r1, r2 = random_density(rng, 6), random_density(rng, 6)
        grid = PhaseGrid(-3, 3, -3, 3, 21)
        w1 = wigner(DensityMatrix(r1, (ModeCutoff(5),)), grid).values
        w2 = wigner(DensityMatrix(r2, (ModeCutoff(5),)), grid).values
        mix = wigner(DensityMatrix(0.3 * r1 + 0.7 * r2, (ModeCutoff(5),)), grid).values
        assert np.allclose(mix, 0.3 * w1 + 0.7 * w2, atol=1e-14)

    def test_rejects_two_mode(self):
        from cavitymzi.fock import tensor_product
        with pytest.raises(ValueError):
            wigner_at(tensor_product(vacuum(2), vacuum(2)), 0)


class TestOverlap:
    def test_matches_trace(self):
        grid = PhaseGrid(-7, 7, -7, 7, 201)
        for seed in range(10):
            r = np.random.default_rng(seed)
            a = DensityMatrix(random_density(r, 13, 2), (ModeCutoff(12),))
            b = FockVector(random_ket(r, 13), (ModeCutoff(12),))
            exact = np.vdot(b.amplitudes, a.matrix @ b.amplitudes).real
            got = wigner_overlap(wigner(a, grid), wigner(b, grid))
            assert got == pytest.approx(exact, rel=1e-2)

    def test_distant_coherent(self):
        grid = default_grid(10)
        plus = wigner(coherent_state(SQRT10, 40), grid)
        minus = wigner(coherent_state(-SQRT10, 40), grid)
        assert wigner_overlap(plus, minus) < 1e-6
        assert wigner_overlap(plus, plus) == pytest.approx(1, abs=1e-6)

    def test_grid_mismatch(self):
        a = wigner(vacuum(2), PhaseGrid(-1, 1, -1, 1, 5))
        b = wigner(vacuum(2), PhaseGrid(-1, 1, -1, 1, 7))
        with pytest.raises(ValueError):
            wigner_overlap(a, b)

    def test_shifted_coherent(self):
        # |<a|D(d)|a>|^2 = exp(-|d|^2)
        got = shifted_overlap(coherent_state(1.0, 30), 0.8 - 0.3j, default_grid(1))
        assert got == pytest.approx(math.exp(-0.73), rel=1e-6)


class TestDisplacementPicture:
    """A weak rotation against a strong real beam displaces port a by ``beta dtheta / 2``."""

    beta, dtheta = 10.0, 1e-2

    def test_half_pi(self, cat_states):
        state = cat_states["pi/2"]
        full = overlap_deficit(InterferometerInput(state, self.beta), 0.0, self.dtheta)
        approx = 1 - shifted_overlap(state, self.beta * self.dtheta / 2)
        assert approx == pytest.approx(full, rel=0.05)

    @pytest.mark.parametrize("key", ["pi/2", "pi"])
    def test_with_beam_term(self, cat_states, key):
        # the beam picks up n_a dtheta^2 / 4 from port a in turn
        state = cat_states[key]
        full = overlap_deficit(InterferometerInput(state, self.beta), 0.0, self.dtheta)
        approx = 1 - shifted_overlap(state, self.beta * self.dtheta / 2) \
            + state.mean_photon_number() * self.dtheta ** 2 / 4
        assert approx == pytest.approx(full, rel=1e-2)


class TestGradient:
    @pytest.mark.parametrize("phi", [0.0, math.pi / 4, math.pi / 2])
    def test_cat_fringes(self, phi):
        # fringes run perpendicular to the line joining the two blobs
        angle = gradient_direction(wigner(cat(SQRT10 * np.exp(1j * phi)), default_grid(10)))
        d = (angle - (phi + math.pi / 2)) % math.pi
        assert min(d, math.pi - d) < 0.02

    @pytest.mark.parametrize("key,expected", [("pi", math.pi / 2), ("pi/2", 3 * math.pi / 4)])
    def test_prepared_states(self, cat_states, key, expected):
        # the best beam phase is this angle modulo pi (pi/2 and -pi/4)
        assert gradient_direction(wigner(cat_states[key])) == pytest.approx(expected, abs=1e-6)

    def test_isotropic_raises(self):
        for state in (vacuum(10), coherent_state(1.0, 20)):
            with pytest.raises(NoPreferredDirectionError):
                gradient_direction(wigner(state, default_grid(1)))

    def test_flat_raises(self):
        grid = PhaseGrid(-1, 1, -1, 1, 5)
        with pytest.raises(NoPreferredDirectionError):
            gradient_direction(WignerMap(grid, np.zeros((5, 5))))
