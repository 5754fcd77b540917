from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import random_packet
from oracles import GOLDEN_STANDARD_PACKET_IP, em_contraction_by_raising, richardson_trapezoid
from shellfield.shell import (
    BivectorTestFunction,
    KernelKind,
    QuadratureError,
    ShellConfig,
    classical_ip,
    commutator_kernel,
    em_integrand,
    em_integrand_oracle,
    em_ip,
    pairing_with_error,
    quantum_ip,
    shell_nodes,
)
from shellfield.testfn import DimensionError, bump, conjugate, fourier, packet, time_reverse


def _radial_reference(d: int, m: float) -> float:
    """quantum_ip of the unit isotropic packet, reduced to one radial integral."""
    n_sp = d - 1
    area = 2 * np.pi if n_sp == 2 else 4 * np.pi
    radial = quad(
        lambda r: r ** (n_sp - 1) * np.exp(-(m * m + 2 * r * r)) / np.sqrt(m * m + r * r),
        0,
        20,
        limit=200,
        epsabs=0,
        epsrel=1e-13,
    )[0]
    return (2 * np.pi) ** d / (2 * np.pi) ** n_sp * area / 2 * radial


class TestConfig:
    def test_defaults(self):
        cfg = ShellConfig()
        assert (cfg.mass, cfg.hbar, cfg.dimension, cfg.nodes) == (1.0, 1.0, 2, 24)

    @pytest.mark.parametrize(
        "changes",
        [{"nodes": 8}, {"mass": -1.0}, {"dimension": 5}, {"cutoff": 3.0}, {"rule": "simpson"}, {"angular_nodes": 7}],
    )
    def test_rejects_invalid(self, changes):
        with pytest.raises(ValueError):
            ShellConfig(**changes)

    def test_with_returns_copy(self):
        cfg = ShellConfig()
        assert cfg.with_(mass=2.0).mass == 2.0 and cfg.mass == 1.0


class TestNodes:
    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_antipodal_symmetry_is_exact(self, d):
        cfg = ShellConfig(dimension=d)
        nodes = shell_nodes(cfg, [packet([0.0] * d)])
        kv = nodes.kvec
        order = np.lexsort(kv.T[::-1])
        flipped = np.lexsort((-kv).T[::-1])
        assert np.array_equal(kv[order], -kv[flipped])
        assert np.all(np.linalg.norm(kv, axis=1) > 0)

    def test_weights_integrate_measure(self):
        # sum of weights * 2w (2pi) equals the box length for d = 2
        cfg = ShellConfig(cutoff=10.0)
        nodes = shell_nodes(cfg)
        assert np.sum(nodes.weights * 2 * nodes.omega * 2 * np.pi) == pytest.approx(20.0, rel=1e-13)

    def test_explicit_cutoff_below_extent(self):
        f = packet([0, 0], [0.2, 0.2], [0.0, 5.0])
        with pytest.raises(QuadratureError):
            quantum_ip(f, f, ShellConfig(cutoff=6.0))

    def test_tail_check_fires(self):
        b = bump([0, 0], 1.0, 33)
        with pytest.raises(QuadratureError, match="not negligible"):
            quantum_ip(b, b, ShellConfig(grid_cutoff=6.0))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            quantum_ip(packet([0, 0, 0]), packet([0, 0, 0]), ShellConfig(dimension=2))


class TestScalarPairings:
    def test_golden_standard_packet(self):
        f = packet([0, 0], [1, 1])
        assert quantum_ip(f, f, ShellConfig()).real == pytest.approx(GOLDEN_STANDARD_PACKET_IP, rel=1e-13)

    def test_golden_constant_matches_oracle(self):
        assert richardson_trapezoid() == pytest.approx(GOLDEN_STANDARD_PACKET_IP, rel=1e-13)

    def test_golden_constant_matches_mpmath(self):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 30
        val = mp.quad(lambda k: mp.pi / mp.sqrt(1 + k * k) * mp.exp(-(1 + 2 * k * k)), [-mp.inf, 0, mp.inf])
        assert float(val) == pytest.approx(GOLDEN_STANDARD_PACKET_IP, rel=1e-15)

    @pytest.mark.parametrize("d,m", [(3, 1.0), (4, 1.0), (3, 0.0), (4, 0.0), (4, 2.5)])
    def test_higher_dimensions_radial_reference(self, d, m):
        f = packet([0.0] * d, [1.0] * d)
        cfg = ShellConfig(mass=m, dimension=d)
        assert quantum_ip(f, f, cfg).real == pytest.approx(_radial_reference(d, m), rel=1e-12)

    def test_d3_against_cartesian_sum(self):
        rng = np.random.default_rng(11)
        cfg = ShellConfig(dimension=3)
        f, g = random_packet(rng, d=3), random_packet(rng, d=3)
        h = 0.05
        ax = np.arange(-12 + h / 2, 12, h)
        kx, ky = np.meshgrid(ax, ax, indexing="ij")
        kv = np.stack([kx.ravel(), ky.ravel()], axis=1)
        w = np.sqrt(1.0 + np.sum(kv**2, axis=1))
        pts = np.concatenate([w[:, None], kv], axis=1)
        brute = np.sum(np.conj(fourier(f)(pts)) * fourier(g)(pts) / w) * h * h / ((2 * np.pi) ** 2 * 2)
        assert abs(quantum_ip(f, g, cfg) - brute) <= 1e-10 * abs(brute)

    @given(st.integers(0, 2**31))
    def test_hermitian_and_positive(self, seed):
        rng = np.random.default_rng(seed)
        cfg = ShellConfig()
        f, g = random_packet(rng), random_packet(rng)
        for kind in (KernelKind.QUANTUM, KernelKind.CLASSICAL):
            ip = quantum_ip if kind is KernelKind.QUANTUM else classical_ip
            assert ip(f, g, cfg) == pytest.approx(np.conj(ip(g, f, cfg)), rel=1e-12, abs=1e-15)
            assert ip(f, f, cfg).real > 0
            assert abs(ip(f, f, cfg).imag) <= 1e-14 * ip(f, f, cfg).real

    def test_classical_is_average_of_sheets(self, rng):
        cfg = ShellConfig()
        f, g = random_packet(rng), random_packet(rng)
        two_sheets = 0.5 * (quantum_ip(f, g, cfg) + quantum_ip(time_reverse(f), time_reverse(g), cfg))
        assert classical_ip(f, g, cfg) == pytest.approx(two_sheets, rel=1e-13)

    def test_real_function_kernels_agree_on_diagonal(self):
        f = packet([0.3, 0.1], [0.8, 1.1])
        cfg = ShellConfig()
        assert quantum_ip(f, f, cfg) == pytest.approx(classical_ip(f, f, cfg), rel=1e-13)

    def test_converged_in_nodes_and_rule(self, rng):
        f, g = random_packet(rng), random_packet(rng)
        ref = quantum_ip(f, g, ShellConfig(nodes=40))
        assert quantum_ip(f, g, ShellConfig()) == pytest.approx(ref, rel=1e-12)
        trap = quantum_ip(f, g, ShellConfig(rule="trapezoid", nodes=64, panel_width=1.0))
        assert trap == pytest.approx(ref, rel=1e-8)

    def test_error_estimate_is_small(self):
        f = packet([0.2, 0.1], [1.0, 0.8], [1.5, 0.5], 1 - 1j)
        value, err = pairing_with_error(f, f, KernelKind.QUANTUM, ShellConfig())
        assert err <= 1e-10 * abs(value)

    def test_hbar_scales_linearly(self, rng):
        f = random_packet(rng)
        assert quantum_ip(f, f, ShellConfig(hbar=2.5)) == pytest.approx(2.5 * quantum_ip(f, f, ShellConfig()), rel=1e-14)

    def test_bump_pairing_converged(self):
        b = bump([0, 0], 1.0, 129)
        cfg = ShellConfig()
        ref = quantum_ip(b, b, cfg.with_(nodes=32))
        assert quantum_ip(b, b, cfg) == pytest.approx(ref, rel=1e-10)


class TestCommutatorKernel:
    def test_antisymmetric(self, rng):
        cfg = ShellConfig()
        f, g = random_packet(rng), random_packet(rng)
        assert commutator_kernel(f, g, KernelKind.QUANTUM, cfg) == pytest.approx(
            -commutator_kernel(g, f, KernelKind.QUANTUM, cfg), rel=1e-12
        )

    def test_classical_vanishes(self, rng):
        cfg = ShellConfig()
        f, g = random_packet(rng), random_packet(rng)
        scale = max(abs(classical_ip(conjugate(f), f, cfg)), abs(classical_ip(conjugate(g), g, cfg)))
        assert abs(commutator_kernel(f, g, KernelKind.CLASSICAL, cfg)) <= 1e-13 * scale

    def test_quantum_nonzero_for_timelike_packets(self):
        cfg = ShellConfig()
        f = packet([0, 0], [0.5, 0.5])
        g = packet([2.0, 0.0], [0.5, 0.5])
        assert abs(commutator_kernel(f, g, KernelKind.QUANTUM, cfg)) > 1e-3

    def test_rejects_em_kernel(self):
        with pytest.raises(ValueError):
            commutator_kernel(packet([0, 0]), packet([0, 0]), KernelKind.EM_QUANTUM, ShellConfig())


class TestElectromagnetic:
    @pytest.fixture
    def em_cfg(self):
        return ShellConfig(mass=0.0, dimension=4)

    def _random_bivector_spectra(self, rng, n):
        a = rng.normal(size=(n, 4, 4)) + 1j * rng.normal(size=(n, 4, 4))
        return a - np.swapaxes(a, -1, -2)

    def test_integrand_matches_index_loops(self):
        rng = np.random.default_rng(5)
        kv = rng.normal(size=(50, 3))
        k = np.concatenate([np.linalg.norm(kv, axis=1)[:, None], kv], axis=1)
        fk, gk = self._random_bivector_spectra(rng, 50), self._random_bivector_spectra(rng, 50)
        fast = em_integrand(fk, gk, k)
        for i in range(50):
            assert fast[i] == pytest.approx(em_integrand_oracle(fk[i], gk[i], k[i]), rel=1e-12)
            assert fast[i] == pytest.approx(em_contraction_by_raising(fk[i], gk[i], k[i]), rel=1e-12)

    def test_integrand_nonnegative_on_null_shell(self):
        rng = np.random.default_rng(6)
        kv = rng.normal(size=(200, 3))
        k = np.concatenate([np.linalg.norm(kv, axis=1)[:, None], kv], axis=1)
        fk = self._random_bivector_spectra(rng, 200)
        vals = em_integrand(fk, fk, k)
        assert np.all(vals.real >= -1e-12 * np.abs(vals).max())
        assert np.all(np.abs(vals.imag) <= 1e-12 * np.abs(vals).max())

    def test_bivector_antisymmetry(self):
        e = [packet([0.0] * 4, carrier=[0, i, 0, 0]) for i in range(3)]
        biv = BivectorTestFunction.electric(e)
        spec = biv.spectrum(np.array([[1.0, 0.3, 0.4, 0.5]]))
        assert np.allclose(spec, -np.swapaxes(spec, -1, -2))
        assert biv.component(1, 0)[0] == -1.0

    def test_pure_gauge_is_null(self, em_cfg):
        h = packet([0.0] * 4, [1.0] * 4)
        gauge = BivectorTestFunction.pure_gauge(h, [0.3, 1.0, -0.5, 0.2])
        control = BivectorTestFunction.electric([packet([0.0] * 4, [1.0, 1.2, 0.9, 1.1], [0, 0.5 * i, 0, 0]) for i in range(3)])
        c = em_ip(control, control, em_cfg)
        assert c.real > 0
        assert abs(em_ip(gauge, gauge, em_cfg)) <= 1e-8 * c.real
        assert abs(em_ip(control, gauge, em_cfg)) <= 1e-8 * c.real

    def test_requires_massless_four_dimensions(self):
        biv = BivectorTestFunction.electric([packet([0.0] * 4)] * 3)
        with pytest.raises(ValueError):
            em_ip(biv, biv, ShellConfig(mass=1.0, dimension=4))
        flat = BivectorTestFunction.electric([packet([0.0] * 3)] * 2)
        with pytest.raises(DimensionError):
            em_ip(flat, flat, ShellConfig(mass=0.0, dimension=3))

    def test_invalid_component(self):
        with pytest.raises(ValueError):
            BivectorTestFunction(4, {(2, 1): ((packet([0.0] * 4), None),)})
