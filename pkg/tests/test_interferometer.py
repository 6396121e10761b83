import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from cavitymzi.fock import (DensityMatrix, FockVector, ModeCutoff, coherent_state, fidelity,
                            number_state, tensor_product, vacuum)
from cavitymzi.interferometer import (InterferometerInput, OutputDistribution, blur_distribution,
                                      distribution_and_derivative, fixed_total_slice,
                                      mzi_transform, output_distribution, polar_slice,
                                      rotate_state)
from cavitymzi.preparation import PrepParams, prepare_ideal, prepare_lossy
from cavitymzi.exceptions import DimensionError

from conftest import SQRT10, random_density, random_ket


DATA = Path(__file__).parent / "data"


def amp(state, n, m):
    return state.amplitudes[n * state.dims[1] + m]


@pytest.fixture(scope="module")
def lossy_small():
    return prepare_lossy(PrepParams(1.2, 1.0, math.pi / 2, kappa=0.05, cutoff=8)).light


class TestTransform:
    def test_identity_at_zero(self, cat_states):
        inp = InterferometerInput(cat_states["pi/2"], SQRT10)
        out = mzi_transform(inp, 0.0)
        assert fidelity(out, inp.two_mode_state()) == pytest.approx(1, abs=1e-12)

    def test_single_photon_block(self):
        # 2x2 block oracle: exp(-i pi Jy) on |1,0> with Jy restricted to {|1,0>, |0,1>}
        inp = InterferometerInput(number_state(1, 1), 0.0, beta_cutoff=1)
        out = mzi_transform(inp, math.pi)
        block = np.array([[0, 0.5j], [-0.5j, 0]])   # rows/cols (|0,1>, |1,0>)
        ref = expm(-1j * math.pi * block) @ np.array([0, 1])
        assert abs(amp(out, 1, 0)) ** 2 == pytest.approx(abs(ref[1]) ** 2, abs=1e-12)
        assert amp(out, 0, 1) == pytest.approx(ref[0], abs=1e-12)

    def test_coherent_total_number(self):
        c = coherent_state(SQRT10, 40)
        inp = InterferometerInput(c, SQRT10)
        for theta in (0.2, 1.3, 3.0):
            assert mzi_transform(inp, theta).mean_photon_number() == pytest.approx(20, abs=1e-8)

    def test_matches_expm_pure_and_mixed(self, lossy_small):
        ket = prepare_ideal(PrepParams(1.2, 1.0, math.pi / 2, cutoff=8)).light
        for port_a in (ket, lossy_small):
            inp = InterferometerInput(port_a, 0.7 + 0.3j, beta_cutoff=8)
            U = expm(-0.4j * inp.jy.dense())
            out = mzi_transform(inp, 0.4)
            start = inp.two_mode_state()
            if isinstance(out, FockVector):
                assert np.allclose(out.amplitudes, U @ start.amplitudes, atol=1e-13)
            else:
                assert np.allclose(out.matrix, U @ start.matrix @ U.conj().T, atol=1e-13)

    def test_unitarity_random_inputs(self):
        for seed in range(20):
            r = np.random.default_rng(seed)
            port = FockVector(random_ket(r, 7), (ModeCutoff(6),))
            mixed = DensityMatrix(random_density(r, 7, 3), (ModeCutoff(6),))
            beta = complex(*r.normal(size=2))
            theta = r.uniform(-math.pi, math.pi)
            out = mzi_transform(InterferometerInput(port, beta, 8), theta)
            assert abs(out.norm() - 1) < 1e-10
            out = mzi_transform(InterferometerInput(mixed, beta, 8), theta)
            assert abs(out.trace() - 1) < 1e-10

    def test_rotate_state_density_matches_vector(self, rng):
        psi = FockVector(random_ket(rng, 16), (ModeCutoff(3), ModeCutoff(3)))
        a = rotate_state(psi, 0.9)
        b = rotate_state(psi.to_density(), 0.9)
        assert np.allclose(a.to_density().matrix, b.matrix, atol=1e-13)

    def test_dimension_guard(self):
        with pytest.raises(DimensionError):
            InterferometerInput(vacuum(40), 0.0, beta_cutoff=40, max_dimension=1000)

    def test_rejects_two_mode_port(self):
        with pytest.raises(ValueError):
            InterferometerInput(tensor_product(vacuum(2), vacuum(2)), 0.0)


class TestDistribution:
    def test_vacuum(self):
        inp = InterferometerInput(vacuum(3), 0.0, beta_cutoff=3)
        dist = output_distribution(inp, 1.1)
        assert dist.probs[0, 0] == pytest.approx(1)

    def test_normalized_and_nonnegative(self, cat_states, lossy_small):
        for port in (cat_states["pi"], lossy_small):
            dist = output_distribution(InterferometerInput(port, 2.0), 0.37)
            assert np.all(dist.probs >= 0)
            assert abs(dist.total() - 1) < 1e-9

    def test_analytic_derivative(self):
        # central difference with h = 1e-4 on a 10-photon case
        port = prepare_ideal(PrepParams(math.sqrt(5), 1.0, math.pi / 2, cutoff=20)).light
        inp = InterferometerInput(port, math.sqrt(5), beta_cutoff=20)
        h = 1e-4
        p_plus = distribution_and_derivative(inp, 0.3 + h)[0]
        p_minus = distribution_and_derivative(inp, 0.3 - h)[0]
        d = distribution_and_derivative(inp, 0.3)[1]
        assert np.max(np.abs(d - (p_plus - p_minus) / (2 * h))) < 1e-6

    def test_mixed_derivative(self, lossy_small):
        inp = InterferometerInput(lossy_small, 0.8, beta_cutoff=8)
        h = 1e-5
        fd = (distribution_and_derivative(inp, 1.0 + h)[0]
              - distribution_and_derivative(inp, 1.0 - h)[0]) / (2 * h)
        assert np.max(np.abs(distribution_and_derivative(inp, 1.0)[1] - fd)) < 1e-8

    def test_rows(self):
        inp = InterferometerInput(vacuum(1), 0.0, beta_cutoff=1)
        rows = list(output_distribution(inp, 0.5).rows())
        assert rows[0] == (0.5, 0, 0, 1.0) and len(rows) == 4

    def test_lossy_washes_out_slice(self):
        ideal = prepare_ideal(PrepParams(SQRT10, 1.0, math.pi)).light
        lossy = prepare_lossy(PrepParams(SQRT10, 1.0, math.pi, kappa=1e-2)).light
        thetas = np.linspace(0, 2 * math.pi, 60, endpoint=False)

        def contrast(port):
            tab = polar_slice(InterferometerInput(port, SQRT10), 20, thetas)
            p = tab.probs / tab.mass()[:, None]
            return np.std(p)
        assert contrast(lossy) < contrast(ideal)


class TestBlur:
    def test_zero_sigma_identity(self, cat_states):
        dist = output_distribution(InterferometerInput(cat_states["pi"], 1.0), 0.2)
        assert blur_distribution(dist, 0.0) is dist

    def test_point_mass(self):
        probs = np.zeros((11, 11))
        probs[5, 5] = 1.0
        out = blur_distribution(OutputDistribution(0.0, probs), 1.0)
        assert out.total() == pytest.approx(1)
        # oracle: separable discrete Gaussian on counts 0..16, support cut at 6 sigma
        n = np.arange(17)
        assert out.probs.shape == (17, 17)
        g = np.where(np.abs(n - 5) <= 6, np.exp(-(n - 5) ** 2 / 2.0), 0.0)
        ref = np.outer(g, g) / np.outer(g, g).sum()
        assert np.allclose(out.probs, ref, atol=1e-15)
        assert np.allclose(out.probs, out.probs.T)
        assert out.blurred and out.sigma == 1.0

    def test_blur_of_derivative_consistent(self, cat_states):
        inp = InterferometerInput(cat_states["pi/2"], SQRT10)
        h = 1e-5
        plus = output_distribution(inp, 0.2 + h, 2.0).probs
        minus = output_distribution(inp, 0.2 - h, 2.0).probs
        d = output_distribution(inp, 0.2, 2.0, with_derivative=True).derivative
        assert np.max(np.abs(d - (plus - minus) / (2 * h))) < 1e-7

    @settings(max_examples=20, deadline=None)
    @given(sigma=st.floats(0.1, 6.0))
    def test_mass_one(self, sigma):
        probs = np.random.default_rng(0).random((6, 7))
        probs /= probs.sum()
        out = blur_distribution(OutputDistribution(0.0, probs), sigma)
        assert abs(out.total() - 1) < 1e-12 and np.all(out.probs >= 0)


class TestSlices:
    def test_vacuum(self):
        inp = InterferometerInput(vacuum(12), 0.0, beta_cutoff=12)
        dist = output_distribution(inp, 0.3)
        assert fixed_total_slice(dist, 0).mass()[0] == pytest.approx(1)
        assert fixed_total_slice(dist, 20).mass()[0] == 0

    def test_completeness(self, cat_states):
        dist = output_distribution(InterferometerInput(cat_states["pi/2"], SQRT10), 0.7)
        total = sum(fixed_total_slice(dist, N).mass()[0] for N in range(sum(dist.probs.shape) - 1))
        assert total == pytest.approx(1, abs=1e-9)

    def test_polar_matches_distributions(self, cat_states):
        inp = InterferometerInput(cat_states["pi/2"], SQRT10)
        thetas = [0.0, 0.5, 2.0]
        tab = polar_slice(inp, 20, thetas)
        ref = fixed_total_slice([output_distribution(inp, t) for t in thetas], 20)
        assert np.allclose(tab.probs, ref.probs, atol=1e-13)
        assert np.array_equal(tab.delta_n, ref.delta_n)
        assert tab.delta_n[0] == -20 and tab.delta_n[-1] == 20

    def test_fine_structure(self, cat_states):
        tab = polar_slice(InterferometerInput(cat_states["pi/2"], SQRT10), 20,
                          np.linspace(0, math.pi, 37))
        assert tab.probs.max() > 0
        assert np.count_nonzero(tab.probs > 1e-6 * tab.probs.max()) > 100

    def test_golden_slice(self):
        # regression: N = 20 slice of the U0 t = pi/2 cat, cutoff 40
        golden = np.loadtxt(DATA / "slice_N20_half_pi.csv", delimiter=",", skiprows=1)
        light = prepare_ideal(PrepParams(SQRT10, 1.0, math.pi / 2, cutoff=40)).light
        tab = polar_slice(InterferometerInput(light, SQRT10), 20, np.linspace(0, 2 * math.pi, 13))
        rows = np.array([(th, dn, p) for th, dn, p in tab.rows()])
        assert np.allclose(rows[:, :2], golden[:, :2])
        assert np.allclose(rows[:, 2], golden[:, 2], rtol=1e-8, atol=1e-14)

    def test_out_of_range(self):
        inp = InterferometerInput(vacuum(3), 0.0, beta_cutoff=3)
        with pytest.raises(ValueError):
            polar_slice(inp, 7, [0.0])
