import numpy as np
import pytest

from gsmimo import channel, codec, detectors, linalg, modem
from gsmimo.channel import ChannelRealization
from gsmimo.complexity import OpCount, predict_gs
from gsmimo.detectors import DetectorConfig
from gsmimo.errors import InvalidInputError, SingularMatrixError

from helpers import gauss_inverse, random_hpd, random_system


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def objective(W, y_bar, x):
    return 0.5 * np.real(x.conj() @ W @ x) - np.real(x.conj() @ y_bar)


def system_batch(n, N=128, K=16, snr_db=12.0, seed=0):
    rng = np.random.default_rng(seed)
    H = channel.complex_normal(rng, (n, N, K))
    s = modem.qam(64).points[rng.integers(0, 64, (n, K))]
    sigma2 = channel.sigma2_from_snr(snr_db, K)
    y = np.einsum("tnk,tk->tn", H, s) + channel.complex_normal(rng, (n, N), sigma2)
    G = linalg.gram(H)
    W = linalg.regularize(G, sigma2)
    return H, G, W, detectors.matched_filter(H, y), sigma2


class TestMatchedFilter:
    def test_identity(self, rng):
        y = channel.complex_normal(rng, 4)
        np.testing.assert_array_equal(detectors.matched_filter(np.eye(4), y), y)

    def test_zero(self, rng):
        assert not detectors.matched_filter(channel.complex_normal(rng, (6, 3)), np.zeros(6)).any()

    def test_loop_oracle(self, rng):
        H = channel.complex_normal(rng, (10, 4))
        y = channel.complex_normal(rng, 10)
        ref = [sum(np.conj(H[n, k]) * y[n] for n in range(10)) for k in range(4)]
        assert rel(detectors.matched_filter(H, y), np.array(ref)) < 1e-12

    def test_mismatch(self):
        with pytest.raises(InvalidInputError):
            detectors.matched_filter(np.ones((4, 2)), np.ones(3))


class TestMmseExact:
    def test_zero_forcing_limit(self, rng):
        Q, _ = np.linalg.qr(channel.complex_normal(rng, (4, 4)))
        y = channel.complex_normal(rng, 4)
        G = linalg.gram(Q)
        sigma2 = 1e-12
        out = detectors.mmse_exact(linalg.regularize(G, sigma2), G, Q.conj().T @ y, sigma2)
        np.testing.assert_allclose(out.s_hat, Q.conj().T @ y, atol=1e-10)
        np.testing.assert_allclose(out.mu, 1, atol=1e-10)
        assert np.all(out.nu2 > 0) and np.all(out.nu2 < 1e-10)

    def test_explicit_inverse_oracle(self, rng):
        H = channel.complex_normal(rng, (8, 2))
        y = channel.complex_normal(rng, 8)
        G = linalg.gram(H)
        W = linalg.regularize(G, 0.3)
        out = detectors.mmse_exact(W, G, H.conj().T @ y, 0.3)
        assert rel(out.s_hat, gauss_inverse(W) @ H.conj().T @ y) < 1e-10

    def test_scalar_closed_form(self, rng):
        h = channel.complex_normal(rng, (5, 1))
        g = float(np.sum(np.abs(h) ** 2))
        sigma2 = 0.4
        G = np.array([[g]], complex)
        out = detectors.mmse_exact(linalg.regularize(G, sigma2), G, np.array([2.0 + 1j]), sigma2)
        assert out.s_hat[0] == pytest.approx((2 + 1j) / (g + sigma2))
        assert out.mu[0] == pytest.approx(g / (g + sigma2))
        assert out.nu2[0] == pytest.approx(sigma2 * g / (g + sigma2) ** 2)


class TestGsInit:
    def test_zero(self):
        assert not detectors.gs_init("zero", np.ones(3), np.ones(3)).any()

    def test_identity_diag(self, rng):
        y = channel.complex_normal(rng, 5)
        np.testing.assert_array_equal(detectors.gs_init("diagonal", np.ones(5), y), y)

    def test_exact_for_diagonal_w(self, rng):
        d = rng.uniform(1, 5, 6)
        y = channel.complex_normal(rng, 6)
        s0 = detectors.gs_init("diagonal", 1 / d, y)
        np.testing.assert_allclose(linalg.cholesky_solve(np.diag(d), y), s0, rtol=1e-14)

    def test_unknown(self):
        with pytest.raises(InvalidInputError):
            detectors.gs_init("random", np.ones(2), np.ones(2))


class TestGsIterate:
    def test_identity_matrix(self, rng):
        y = channel.complex_normal(rng, 4)
        s = linalg.split_dlu(np.eye(4, dtype=complex))
        np.testing.assert_allclose(detectors.gs_iterate(s, y, np.zeros(4), 1), y)

    def test_converges_to_cholesky(self, rng):
        _, _, W, _ = random_system(rng)
        y = channel.complex_normal(rng, 16)
        x = detectors.gs_iterate(linalg.split_dlu(W), y, np.zeros(16), 50)
        assert rel(x, linalg.cholesky_solve(W, y)) < 1e-10

    def test_zero_diagonal(self):
        s = linalg.MatrixSplit(diag=np.array([1.0, 0.0]), lower=np.zeros((2, 2), complex))
        with pytest.raises(SingularMatrixError):
            detectors.gs_iterate(s, np.ones(2), np.zeros(2), 1)

    def test_uses_freshest_values(self, rng):
        W = random_hpd(rng, 4)
        y = channel.complex_normal(rng, 4)
        s0 = channel.complex_normal(rng, 4)
        trace = []
        detectors.gs_iterate(linalg.split_dlu(W), y, s0, 1, trace=trace)
        assert [m for m, _ in trace] == [0, 1, 2, 3]
        # hand-rolled single sweep with sequential element updates
        x = s0.copy()
        for m in range(4):
            np.testing.assert_allclose(trace[m][1][:, 0], x, atol=1e-14)
            x[m] = (y[m] - sum(W[m, k] * x[k] for k in range(4) if k != m)) / W[m, m].real
        # the last element sees the freshly updated first three
        jacobi_last = (y[3] - sum(W[3, k] * s0[k] for k in range(3))) / W[3, 3].real
        assert not np.isclose(x[3], jacobi_last)

    def test_objective_monotone(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            _, _, W, _ = random_system(rng, N=rng.integers(16, 160), K=16, snr_db=rng.uniform(0, 20))
            y = channel.complex_normal(rng, 16, 16.0)
            split = linalg.split_dlu(W)
            x = np.zeros(16, complex)
            f = objective(W, y, x)
            for _ in range(8):
                x = detectors.gs_iterate(split, y, x, 1)
                f_new = objective(W, y, x)
                assert f_new <= f + 1e-12 * abs(f)
                f = f_new

    def test_convergence_on_1000_instances(self):
        _, _, W, y_bar, _ = system_batch(1000, seed=2)
        split = linalg.split_dlu(W)
        exact = linalg.cholesky_solve(W, y_bar)
        s1 = detectors.gs_iterate(split, y_bar, np.zeros_like(y_bar), 1)
        s20 = detectors.gs_iterate(split, y_bar, np.zeros_like(y_bar), 20)
        e1 = np.linalg.norm(s1 - exact, axis=-1)
        e20 = np.linalg.norm(s20 - exact, axis=-1)
        assert np.all(e20 * 10 <= e1)

    def test_diagonal_init_beats_zero_init(self):
        _, _, W, y_bar, _ = system_batch(500, seed=3)
        split = linalg.split_dlu(W)
        D_inv = linalg.diag_inverse(split.diag)
        exact = linalg.cholesky_solve(W, y_bar)
        for i in (1, 2, 3):
            zero = detectors.gs_iterate(split, y_bar, np.zeros_like(y_bar), i, D_inv)
            diag = detectors.gs_iterate(split, y_bar, D_inv * y_bar, i, D_inv)
            e_zero = np.median(np.linalg.norm(zero - exact, axis=-1))
            e_diag = np.median(np.linalg.norm(diag - exact, axis=-1))
            assert e_diag <= e_zero

    def test_sweep_count(self, rng):
        _, _, W, _ = random_system(rng)
        ops = OpCount()
        detectors.gs_iterate(linalg.split_dlu(W), np.ones(16), np.zeros(16), 3, ops=ops)
        assert ops.complex_mults == 3 * 16 * 16


class TestMatrixInverseEstimate:
    def test_identity(self):
        s = linalg.split_dlu(np.eye(3, dtype=complex))
        est = detectors.gs_matrix_inverse_estimate(s, np.ones(3), 1)
        np.testing.assert_array_equal(est.W_inv_hat, np.eye(3))
        assert est.iterations_used == 1

    def test_diagonal(self):
        d = np.array([2.0, 4.0, 5.0])
        s = linalg.split_dlu(np.diag(d).astype(complex))
        est = detectors.gs_matrix_inverse_estimate(s, 1 / d, 1)
        np.testing.assert_allclose(est.W_inv_hat, np.diag(1 / d))

    def test_converges(self, rng):
        _, _, W, _ = random_system(rng)
        s = linalg.split_dlu(W)
        est = detectors.gs_matrix_inverse_estimate(s, 1 / s.diag, 50)
        ref = gauss_inverse(W)
        assert np.linalg.norm(est.W_inv_hat - ref) / np.linalg.norm(ref) < 1e-8


class TestLlrStats:
    def test_exact_inverse_matches_mmse(self, rng):
        _, G, W, sigma2 = random_system(rng)
        y_bar = channel.complex_normal(rng, 16)
        ref = detectors.mmse_exact(W, G, y_bar, sigma2)
        mu, nu2 = detectors.exact_llr_stats(np.linalg.inv(W), G, sigma2)
        np.testing.assert_allclose(mu, ref.mu, rtol=1e-12)
        np.testing.assert_allclose(nu2, ref.nu2, rtol=1e-9)

    def test_noiseless_unit_gain(self, rng):
        W = random_hpd(rng, 5)
        mu, nu2 = detectors.exact_llr_stats(np.linalg.inv(W), W, 0.0)
        np.testing.assert_allclose(mu, 1, atol=1e-12)
        # interference vanishes, leaving only the positivity floor
        np.testing.assert_allclose(nu2, detectors.NU2_FLOOR, rtol=1e-6)

    def test_direct_formula(self, rng):
        _, G, W, sigma2 = random_system(rng, N=12, K=4, snr_db=5)
        A = gauss_inverse(W)
        E = A @ G
        U = A @ G @ A
        mu_ref = [E[k, k].real for k in range(4)]
        nu_ref = [sum(abs(E[k, m]) ** 2 for m in range(4) if m != k) + U[k, k].real * sigma2 for k in range(4)]
        mu, nu2 = detectors.exact_llr_stats(A, G, sigma2)
        np.testing.assert_allclose(mu, mu_ref, rtol=1e-10)
        np.testing.assert_allclose(nu2, nu_ref, rtol=1e-10)

    def test_approx_diagonal_w(self):
        g = np.array([3.0, 5.0, 2.0])
        sigma2 = 0.5
        G = np.diag(g).astype(complex)
        D_inv = 1 / (g + sigma2)
        mu, nu2 = detectors.approx_llr_stats(D_inv, G, sigma2)
        np.testing.assert_allclose(mu, g * D_inv)
        np.testing.assert_allclose(nu2, sigma2 * g * D_inv**2)

    def test_approx_scalar(self):
        mu, nu2 = detectors.approx_llr_stats(np.array([1 / 2.5]), np.array([[2.0 + 0j]]), 0.5)
        assert mu[0] == pytest.approx(2 / 2.5)
        assert nu2[0] == pytest.approx(0.5 * 2 / 2.5**2)

    def test_approx_row_scaling(self, rng):
        _, G, W, sigma2 = random_system(rng)
        d = linalg.real_diagonal(W)
        mu, nu2 = detectors.approx_llr_stats(1 / d, G, sigma2)
        E = G / d[:, None]
        np.testing.assert_allclose(mu, np.diagonal(E).real, rtol=1e-14)
        # user k is column k of E
        inter = np.sum(np.abs(E) ** 2, axis=0) - np.abs(np.diagonal(E)) ** 2
        np.testing.assert_allclose(nu2, inter + sigma2 * np.diagonal(G).real / d**2, rtol=1e-12)


class TestNeumann:
    def test_diagonal_w(self, rng):
        d = rng.uniform(1, 3, 5)
        y = channel.complex_normal(rng, 5)
        for i in (1, 3, 7):
            np.testing.assert_allclose(detectors.neumann_detect(np.diag(d), 1 / d, y, i), y / d)

    def test_single_term(self, rng):
        _, _, W, _ = random_system(rng)
        d = linalg.real_diagonal(W)
        y = channel.complex_normal(rng, 16)
        np.testing.assert_array_equal(detectors.neumann_detect(W, 1 / d, y, 1), y / d)

    def test_converges_at_jacobi_rate(self):
        # I - D^-1 W is similar to a Hermitian matrix, so in the D-norm every
        # extra term shrinks the error by the spectral radius rho; converting
        # back to the 2-norm costs at most sqrt(cond D)
        for seed in range(50):
            rng = np.random.default_rng(seed)
            _, _, W, _ = random_system(rng)
            d = linalg.real_diagonal(W)
            rho = np.max(np.abs(np.linalg.eigvals(np.eye(16) - W / d[:, None])))
            assert rho < 1
            y = channel.complex_normal(rng, 16)
            exact = linalg.cholesky_solve(W, y)
            e20 = rel(detectors.neumann_detect(W, 1 / d, y, 20), exact)
            e40 = rel(detectors.neumann_detect(W, 1 / d, y, 40), exact)
            assert e40 <= np.sqrt(d.max() / d.min()) * rho**20 * e20
            assert rel(detectors.neumann_detect(W, 1 / d, y, 80), exact) < 1e-6

    @pytest.mark.parametrize("i", [1, 2, 3, 4, 6])
    def test_explicit_series_matches_horner(self, rng, i):
        _, _, W, _ = random_system(rng)
        s = linalg.split_dlu(W)
        y = channel.complex_normal(rng, 16)
        A = detectors.neumann_inverse(s, 1 / s.diag, i)
        np.testing.assert_allclose(A @ y, detectors.neumann_detect(W, 1 / s.diag, y, i), rtol=1e-12)

    def test_divergence_warning(self, caplog):
        W = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, 0.9], [0.9, 0.9, 1.0]], complex)
        with caplog.at_level("WARNING"):
            detectors.neumann_detect(W, np.ones(3), np.ones(3), 6)
        assert "diverging" in caplog.text


class TestMl:
    def test_noiseless(self, rng):
        c = modem.qam(4)
        H = channel.complex_normal(rng, (6, 3))
        s = c.points[rng.integers(0, 4, 3)]
        np.testing.assert_array_equal(detectors.ml_detect(H, H @ s, c), s)

    def test_scalar_nearest_symbol(self, rng):
        c = modem.qam(16)
        h = channel.complex_normal(rng, (4, 1))
        for _ in range(20):
            y = channel.complex_normal(rng, 4)
            z = (h[:, 0].conj() @ y) / np.sum(np.abs(h) ** 2)
            nearest = c.points[np.argmin(np.abs(z - c.points))]
            assert detectors.ml_detect(h, y, c)[0] == nearest

    def test_guardrail(self):
        with pytest.raises(InvalidInputError):
            detectors.detect(
                DetectorConfig("ml_bruteforce"),
                ChannelRealization(np.ones((16, 16), complex), 1.0),
                np.ones(16),
                modem.qam(64),
            )


class TestDetect:
    def test_gs_count(self, rng):
        H = channel.complex_normal(rng, (128, 16))
        out = detectors.detect(
            DetectorConfig("gauss_seidel", 3), ChannelRealization(H, 1.0), np.ones(128), modem.qam(64)
        )
        assert out.op_count.complex_mults == 1088 == predict_gs(16, 3)
        assert out.llrs.shape == (16, 6)

    def test_gs_matches_mmse_hard_decisions(self):
        c = modem.qam(64)
        for seed in range(100):
            rng = np.random.default_rng(seed)
            H = channel.complex_normal(rng, (128, 16))
            sigma2 = channel.sigma2_from_snr(12.0, 16)
            s = c.points[rng.integers(0, 64, 16)]
            y = H @ s + channel.complex_normal(rng, 128, sigma2)
            ch = ChannelRealization(H, sigma2)
            a = detectors.detect(DetectorConfig("mmse_cholesky", llr_mode="exact"), ch, y, c)
            b = detectors.detect(DetectorConfig("gauss_seidel", 50), ch, y, c)
            np.testing.assert_array_equal(modem.hard_demap(a.s_hat, c), modem.hard_demap(b.s_hat, c))

    @pytest.mark.parametrize(
        "config",
        [
            DetectorConfig("mmse_cholesky", llr_mode="exact"),
            DetectorConfig("mmse_cholesky"),
            DetectorConfig("gauss_seidel", 3, "zero", "exact"),
            DetectorConfig("gauss_seidel", 2),
            DetectorConfig("neumann", 3),
            DetectorConfig("neumann", 3, llr_mode="exact"),
            DetectorConfig("ml_bruteforce"),
        ],
        ids=lambda c: c.label,
    )
    def test_zero_noise_end_to_end(self, config):
        rng = np.random.default_rng(6)
        c = modem.qam(4) if config.method == "ml_bruteforce" else modem.qam(64)
        N, K = (8, 2) if config.method == "ml_bruteforce" else (128, 16)
        H = channel.complex_normal(rng, (N, K))
        info = rng.integers(0, 2, (K, 60)).astype(np.uint8)
        coded = codec.conv_encode(info)
        pad = (-coded.shape[-1]) % c.bits_per_symbol
        coded = np.pad(coded, ((0, 0), (0, pad)))
        s = modem.map_symbols(coded, c)  # (K, T)
        y = (H @ s).T
        out = detectors.detect(config, ChannelRealization(H, 1e-9), y, c)
        llrs = out.llrs.reshape(y.shape[0], K, -1).transpose(1, 0, 2).reshape(K, -1)
        decoded = codec.viterbi_soft_decode(llrs[:, : llrs.shape[1] - pad])
        np.testing.assert_array_equal(decoded, info)

    def test_exact_path_at_50_iterations(self):
        H, G, W, y_bar, sigma2 = system_batch(50, seed=9)
        ref = detectors.mmse_exact(W, G, y_bar, sigma2)
        s = linalg.split_dlu(W)
        est = detectors.gs_matrix_inverse_estimate(s, 1 / s.diag, 50)
        mu, nu2 = detectors.exact_llr_stats(est, G, sigma2)
        np.testing.assert_allclose(mu, ref.mu, rtol=1e-6)
        np.testing.assert_allclose(nu2, ref.nu2, rtol=1e-6)


class TestConfig:
    def test_labels(self):
        assert DetectorConfig("gauss_seidel", 3).label == "gs_i3_diagonal_approximated"
        assert DetectorConfig("neumann", 2).label == "neumann_i2_approximated"

    @pytest.mark.parametrize("kw", [dict(method="qr"), dict(method="gauss_seidel", iterations=0),
                                    dict(method="gauss_seidel", init="ones"), dict(method="neumann", llr_mode="full")])
    def test_invalid(self, kw):
        with pytest.raises(InvalidInputError):
            DetectorConfig(**kw)
