import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arhgof.estimate import (
    default_k_n,
    eigen_decompose,
    empirical_cov_operator,
    estimate_autocorrelation,
    innovation_cov_h0,
    operator_error,
)
from arhgof.grid import FunctionalSeries, Grid, GridFunction, KernelMatrix, operator_norm, trace_norm
from arhgof.simulate import RngStream, simulate_arh1


def series_of(grid, values):
    return FunctionalSeries(grid, np.asarray(values, dtype=float))


def projector(phi, w):
    """Plain-convention matrix of the orthogonal projection on span(phi)."""
    return phi.T @ (phi * w)


class TestEmpiricalCov:
    def test_zero_rows(self, grid):
        C = empirical_cov_operator(series_of(grid, np.zeros((4, 71))), 0)
        assert C.symmetric and not np.any(C.entries)

    def test_pair_f_minus_f(self, grid, rng):
        f = rng.standard_normal(71)
        C = empirical_cov_operator(series_of(grid, [f, -f]), 0)
        for a in range(0, 71, 7):
            for b in range(0, 71, 5):
                assert C.entries[a, b] == pytest.approx(f[a] * f[b], rel=1e-14)

    def test_lag1_definition(self, grid, rng):
        Y = rng.standard_normal((5, 71))
        D = empirical_cov_operator(series_of(grid, Y), 1)
        assert not D.symmetric
        expected = sum(np.outer(Y[i], Y[i + 1]) for i in range(4)) / 4
        np.testing.assert_allclose(D.entries, expected, rtol=0, atol=1e-14)

    def test_requires_two_rows(self, grid):
        with pytest.raises(ValueError):
            empirical_cov_operator(series_of(grid, np.ones((1, 71))), 0)
        with pytest.raises(ValueError):
            empirical_cov_operator(series_of(grid, np.ones((3, 71))), 2)

    def test_white_noise_consistency(self, dgp, eps_kernel):
        series = simulate_arh1(dgp.to_spec(n=2000), RngStream(2, ("series",)))
        C = empirical_cov_operator(series, 0)
        rel = np.linalg.norm(C.entries - eps_kernel.entries) / np.linalg.norm(eps_kernel.entries)
        assert rel < 0.10

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 30), st.integers(0, 2**32 - 1))
    def test_lag0_psd(self, n, seed):
        grid = Grid.uniform(71)
        Y = np.random.default_rng(seed).standard_normal((n, 71)) * 10.0 ** np.random.default_rng(seed).integers(-3, 3)
        C = empirical_cov_operator(series_of(grid, Y), 0)
        s = np.sqrt(grid.weights)
        lowest = np.linalg.eigvalsh(C.entries * np.outer(s, s))[0]
        assert lowest >= -1e-10 * max(1.0, np.max(np.diag(C.entries)))


class TestEigenDecompose:
    def test_isotropic(self, grid):
        K = KernelMatrix(grid, 0.3 * np.diag(1 / grid.weights), symmetric=True)
        np.testing.assert_allclose(eigen_decompose(K).eigenvalues, 0.3, rtol=1e-12)

    def test_rank_one(self, grid, rng):
        f = GridFunction(grid, rng.standard_normal(71))
        eig = eigen_decompose(KernelMatrix(grid, np.outer(f.values, f.values), symmetric=True))
        assert eig.eigenvalues[0] == pytest.approx(f.norm() ** 2, rel=1e-12)
        assert np.all(eig.eigenvalues[1:] < 1e-12 * eig.eigenvalues[0])
        phi = eig.eigenfunctions[0]
        target = f.values / f.norm()
        target = target if target[0] > 0 else -target
        np.testing.assert_allclose(phi, target, atol=1e-10)

    def test_trace_identity(self, eps_kernel):
        eig = eigen_decompose(eps_kernel)
        assert abs(eig.eigenvalues.sum() - trace_norm(eps_kernel)) < 1e-10
        assert abs(eig.eigenvalues.sum() - 0.01) < 1e-10

    def test_orthonormal_and_reconstructs(self, grid, eps_kernel):
        eig = eigen_decompose(eps_kernel)
        gram = grid.inner(eig.eigenfunctions, eig.eigenfunctions)
        np.testing.assert_allclose(gram, np.eye(71), atol=1e-8)
        back = eig.reconstruct()
        assert np.linalg.norm(back - eps_kernel.entries) / np.linalg.norm(eps_kernel.entries) < 1e-6
        assert np.all(np.diff(eig.eigenvalues) <= 0) and np.all(eig.eigenvalues >= 0)

    def test_sign_convention(self, eps_kernel):
        for row in eigen_decompose(eps_kernel).eigenfunctions:
            first = row[np.abs(row) > 1e-12 * np.abs(row).max()][0]
            assert first > 0

    def test_asymmetric_rejected(self, h1, grid):
        with pytest.raises(ValueError):
            eigen_decompose(KernelMatrix(grid, np.triu(np.ones((71, 71)))))


class TestEstimateAutocorrelation:
    def test_white_noise_estimate_is_at_noise_level(self, dgp, h1, eps_kernel):
        # for white noise each coefficient has variance lam_l / (lam_j n), so
        # E||estimate||_HS^2 = sum_l lam_l * sum_j 1/lam_j / n
        n, k = 2000, 3
        lam = eigen_decompose(eps_kernel).eigenvalues[:k]
        noise = np.sqrt(lam.sum() * (1 / lam).sum() / n)
        series = simulate_arh1(dgp.to_spec(n=n), RngStream(3, ("series",)))
        est = estimate_autocorrelation(series, k_n=k)
        hs = np.linalg.norm(est.operator.entries)  # uniform weights: HS norm
        assert hs < 2 * noise
        assert hs < 0.2 * np.linalg.norm(h1.entries)

    def test_fixed_point_series(self, grid, rng):
        f = rng.standard_normal(71)
        series = series_of(grid, np.tile(f, (6, 1)))
        est = estimate_autocorrelation(series, k_n=1)
        phi = est.basis.eigenfunctions[0]
        assert np.sqrt(grid.inner(est.operator.entries @ phi - phi, est.operator.entries @ phi - phi)) < 1e-8
        with pytest.raises(ValueError, match="eigenvalue 2"):
            estimate_autocorrelation(series, k_n=2)

    def test_range_in_span(self, dgp, h1, grid):
        series = simulate_arh1(dgp.to_spec(n=300, gamma=h1), RngStream(5, ("series",)))
        est = estimate_autocorrelation(series)
        phi = est.basis.eigenfunctions[: est.k_n]
        Q = np.eye(71) - projector(phi, grid.weights)
        assert np.linalg.norm(Q @ est.operator.entries) < 1e-8
        assert np.linalg.norm(est.operator.entries @ Q) < 1e-8

    def test_known_basis_sign_equivariance(self, dgp, h1, eps_kernel):
        series = simulate_arh1(dgp.to_spec(n=300, gamma=h1), RngStream(6, ("series",)))
        basis = eigen_decompose(eps_kernel)
        signs = np.where(np.arange(71) % 3 == 0, -1.0, 1.0)
        a = estimate_autocorrelation(series, k_n=4, basis=basis)
        b = estimate_autocorrelation(series, k_n=4, basis=basis.flip_signs(signs))
        np.testing.assert_allclose(a.operator.entries, b.operator.entries, rtol=0, atol=1e-12)

    def test_known_basis_uses_empirical_eigenvalues(self, dgp, eps_kernel):
        series = simulate_arh1(dgp.to_spec(n=100), RngStream(6, ("series",)))
        basis = eigen_decompose(eps_kernel)
        est = estimate_autocorrelation(series, k_n=2, basis=basis)
        scores = series.grid.inner(series.values, basis.eigenfunctions[:2])
        np.testing.assert_allclose(est.eigenvalues_used, np.mean(scores**2, axis=0), rtol=1e-12)

    def test_empirical_coefficients_match_direct_formula(self, dgp, h1):
        series = simulate_arh1(dgp.to_spec(n=40, gamma=h1), RngStream(7, ("series",)))
        est = estimate_autocorrelation(series, k_n=3)
        grid, Y, n = series.grid, series.values, series.n
        phi, lam = est.basis.eigenfunctions, est.basis.eigenvalues
        f = np.sin(np.pi * grid.nodes)
        direct = np.zeros(71)
        for l in range(3):
            g = 0.0
            for i in range(n - 1):
                for j in range(3):
                    g += (np.sum(grid.weights * f * phi[j]) * np.sum(grid.weights * Y[i] * phi[j])
                          * np.sum(grid.weights * Y[i + 1] * phi[l]) / lam[j])
            direct += g / (n - 1) * phi[l]
        np.testing.assert_allclose(est.operator.entries @ f, direct, atol=1e-12)

    @pytest.mark.parametrize("n", [60, 300, 1000])
    def test_norm_bound(self, dgp, h1, n):
        series = simulate_arh1(dgp.to_spec(n=n, gamma=h1), RngStream(8, (n,)))
        est = estimate_autocorrelation(series)
        assert operator_norm(est.operator) <= est.lag1_norm * np.max(1 / est.eigenvalues_used) * (1 + 1e-9)

    def test_default_k_n(self):
        lam = np.array([1.0, 0.5, 0.1, 1e-7, 1e-8, 0, 0, 0, 0])
        assert default_k_n(100, lam) == 3  # floor(log 100) = 4, floored at 1e-6
        assert default_k_n(2, lam) == 1
        assert default_k_n(5000, np.ones(5)) == 5

    def test_consistency_trend(self, dgp, h1):
        medians = []
        for n in (100, 400, 1600):
            spec = dgp.to_spec(n=n, gamma=h1)
            errs = [
                operator_error(estimate_autocorrelation(simulate_arh1(spec, RngStream(31, (n, r)))), h1)
                for r in range(20)
            ]
            medians.append(np.median(errs))
        assert medians[0] > medians[1] > medians[2]


class TestInnovationCov:
    def test_zero_gamma0_gives_sample_cov(self, dgp, grid):
        series = simulate_arh1(dgp.to_spec(n=50), RngStream(1, ("series",)))
        C = innovation_cov_h0(series, KernelMatrix.zeros(grid, symmetric=False))
        np.testing.assert_array_equal(C.entries, empirical_cov_operator(series, 0).entries)

    def test_zero_series(self, grid, h1):
        C = innovation_cov_h0(series_of(grid, np.zeros((3, 71))), h1)
        assert not np.any(C.entries)

    def test_consistent_under_h0(self, dgp, h1):
        series = simulate_arh1(dgp.to_spec(n=2000, gamma=h1), RngStream(2, ("series",)))
        C = innovation_cov_h0(series, h1)
        assert C.symmetric
        assert abs(trace_norm(C) - 0.01) / 0.01 < 0.15

    def test_psd_after_clamping(self, grid, rng):
        series = series_of(grid, rng.standard_normal((3, 71)))
        big = KernelMatrix(grid, 3.0 * np.eye(71))
        C = innovation_cov_h0(series, big)
        s = np.sqrt(grid.weights)
        assert np.linalg.eigvalsh(C.entries * np.outer(s, s))[0] > -1e-12
