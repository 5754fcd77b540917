from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import random_packet
from shellfield import rf
from shellfield.fock import ip
from shellfield.rf import (
    BLOCK_SIZE,
    CSV_COLUMNS,
    ModeSet,
    PSDError,
    compare_to_fock,
    empirical_moments,
    gram,
    sample,
)
from shellfield.shell import KernelKind, ShellConfig
from shellfield.testfn import conjugate, packet

CFG = ShellConfig()


@pytest.fixture
def real_modes():
    return ModeSet.of(
        [packet([0, 0], [1, 1]), packet([0.2, 0.8], [0.9, 1.1]), packet([-0.5, -0.3], [1.2, 0.7])],
        ["a", "b", "c"],
    )


@pytest.fixture
def complex_modes(rng):
    return ModeSet.of([random_packet(rng), random_packet(rng)], ["u", "v"])


class TestModeSet:
    def test_unique_ids(self):
        with pytest.raises(ValueError):
            ModeSet(("a", "a"), (packet([0, 0]), packet([0, 0])))

    def test_default_ids(self):
        assert ModeSet.of([packet([0, 0], name="p"), packet([1, 0])]).ids == ("p", "m1")


class TestGram:
    @pytest.mark.parametrize("kind", [KernelKind.QUANTUM, KernelKind.CLASSICAL])
    def test_real_modes(self, real_modes, kind):
        gm = gram(real_modes, kind, CFG)
        assert np.allclose(gm.matrix, gm.matrix.conj().T, atol=0)
        f, g = real_modes.functions[0], real_modes.functions[1]
        assert gm.matrix[0, 1] == pytest.approx(ip(conjugate(f), g, kind, CFG), rel=1e-12)
        assert gm.min_eigenvalue() >= -1e-10 * gm.trace
        assert not gm.complex_modes

    def test_complex_modes_use_split_covariance(self, complex_modes):
        gm = gram(complex_modes, KernelKind.CLASSICAL, CFG)
        assert gm.complex_modes and gm.covariance.shape == (4, 4)
        assert gm.min_eigenvalue() >= -1e-10 * gm.trace

    def test_rejects_em_kernel(self, real_modes):
        with pytest.raises(ValueError):
            gram(real_modes, KernelKind.EM_QUANTUM, CFG)

    def test_psd_guard(self):
        with pytest.raises(PSDError):
            rf._check_psd(np.array([[1.0, 0.0], [0.0, -0.5]]))


class TestSampling:
    def test_shape_and_metadata(self, real_modes):
        batch = sample(gram(real_modes, KernelKind.CLASSICAL, CFG), 1000, seed=3)
        assert batch.draws.shape == (1000, 3)
        assert batch.metadata["generator"] == rf.GENERATOR
        assert not np.any(batch.draws.imag)

    def test_reproducible_across_workers(self, real_modes):
        gm = gram(real_modes, KernelKind.CLASSICAL, CFG)
        n = 3 * BLOCK_SIZE + 17
        a = sample(gm, n, seed=42)
        b = sample(gm, n, seed=42, workers=4)
        c = sample(gm, n, seed=42, workers=2)
        assert np.array_equal(a.draws, b.draws) and np.array_equal(a.draws, c.draws)
        assert not np.array_equal(a.draws, sample(gm, n, seed=43).draws)

    def test_prefix_stability(self, real_modes):
        gm = gram(real_modes, KernelKind.CLASSICAL, CFG)
        small = sample(gm, BLOCK_SIZE, seed=9)
        big = sample(gm, 2 * BLOCK_SIZE, seed=9)
        assert np.array_equal(small.draws, big.draws[:BLOCK_SIZE])

    def test_invalid_arguments(self, real_modes):
        gm = gram(real_modes, KernelKind.CLASSICAL, CFG)
        with pytest.raises(ValueError):
            sample(gm, -1, seed=0)
        with pytest.raises(ValueError):
            sample(gm, 10, seed=-5)
        assert sample(gm, 0, seed=0).draws.shape == (0, 3)

    def test_empirical_covariance(self, real_modes):
        gm = gram(real_modes, KernelKind.CLASSICAL, CFG)
        x = sample(gm, 100_000, seed=1).draws.real
        emp = x.T @ x / len(x)
        # standard error of a Gaussian second moment is about sqrt(2/n) * variance
        assert np.all(np.abs(emp - gm.covariance) <= 5 * np.sqrt(2.0 / len(x)) * np.max(np.diag(gm.covariance)))

    def test_complex_second_moments(self, complex_modes):
        gm = gram(complex_modes, KernelKind.CLASSICAL, CFG)
        z = sample(gm, 100_000, seed=2).draws
        emp = z.T @ z / len(z)  # E[phi_f phi_g] = ip(f*, g)
        tol = 5 * np.sqrt(2.0 / len(z)) * np.trace(gm.covariance)
        assert np.all(np.abs(emp - gm.matrix) <= tol)

    def test_csv(self, real_modes):
        batch = sample(gram(real_modes, KernelKind.CLASSICAL, CFG), 3, seed=0)
        lines = batch.to_csv().strip().splitlines()
        assert lines[0].split(",")[:2] == ["a.re", "a.im"] and len(lines) == 4


class TestMoments:
    def test_jackknife_standard_error(self):
        x = np.random.default_rng(0).normal(size=50_000)
        batch = rf.SampleBatch(x.size, 0, x.astype(complex)[:, None], ("x",), {})
        (m2,) = empirical_moments(batch, "x", [2])
        assert m2.value == pytest.approx(1.0, abs=4 * m2.stderr)
        assert m2.stderr == pytest.approx(np.std(x**2) / np.sqrt(x.size), rel=0.15)

    def test_order_limit(self):
        batch = rf.SampleBatch(10, 0, np.ones((10, 1), dtype=complex), ("x",), {})
        with pytest.raises(ValueError):
            empirical_moments(batch, 0, [9])

    def test_warns_on_noisy_estimate(self):
        x = np.random.default_rng(1).normal(size=(50, 1)).astype(complex)
        batch = rf.SampleBatch(50, 0, x, ("x",), {})
        with pytest.warns(RuntimeWarning, match="increase n"):
            empirical_moments(batch, 0, [8], predicted=[105.0])


class TestCompare:
    def test_report_passes(self, real_modes):
        report = compare_to_fock(real_modes, [2, 4], 50_000, seed=7, cfg=CFG)
        assert report.passed
        assert report.to_csv().splitlines()[0] == ",".join(CSV_COLUMNS)
        data = json.loads(report.to_json())
        assert data["metadata"]["seed"] == 7 and len(data["rows"]) == 6
        assert all(r["pass"] for r in report.factor_rows)

    def test_retry_uses_next_seed(self, real_modes):
        report = compare_to_fock(real_modes, [2], 200, seed=1, cfg=CFG, z_max=0.0)
        assert report.metadata["retried"] and report.metadata["retry_seed"] == 2
        assert not report.passed
