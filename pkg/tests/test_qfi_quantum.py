import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdlidar.errors import DomainError
from qdlidar.qfi_quantum import (
    Regime,
    advantage_ratio,
    classify_regime,
    figure2_profile,
    figure3_grid,
    log_advantage_ratio,
    log_cosh2,
    log_sinh2,
    mean_energy,
    pulse_duration_sq,
    qfi_quantum,
    regime_of,
    restricted_qfi,
    signal_photon_number,
    thread_count,
)
from qdlidar.spectral import SpectralParams


def brute_force(xi, K, bw=0.01, omega0=1.0, mu=1.0, dps=40):
    """Direct high-precision summation of the QFI series and its resources."""
    with mp.workdps(dps):
        K = mp.mpf(K)
        # K = (1 + q^2) / (1 - q^2)
        q = mp.sqrt((K - 1) / (K + 1))
        r0 = mp.sqrt(2 / (K + 1))

        def r(n):
            if n < 0:
                return mp.mpf(0)
            return r0 * q ** n

        z_w = z_s = n_s = nw = mp.mpf(0)
        n = 0
        while True:
            s2 = mp.sinh(xi * r(n)) ** 2
            c = lambda m: mp.cosh(xi * r(m)) ** 2
            z_w += s2 * (n * c(n - 1) + (n + 1) * c(n + 1))
            z_s += s2 * (n * (n - 1) * c(n - 2) + (n + 1) * (n + 2) * c(n + 2))
            n_s += s2
            nw += n * s2
            if n > 10 and s2 * (n + 3) ** 2 < mp.mpf(10) ** (-dps + 5) * z_s:
                break
            n += 1
        p = SpectralParams.from_schmidt_number(float(K), bw, omega0=omega0)
        se = mp.mpf(p.sigma_epsilon)
        j = (omega0 ** 2 / se) * (z_w + se / omega0 ** 2 * z_s) / mu ** 2
        dt2 = (2 / se) * (nw / n_s + mp.mpf(1) / 2)
        jc = omega0 ** 2 * dt2 * n_s / mu ** 2
        return dict(z_w=z_w, z_s=z_s, n_s=n_s, j_q=j, dt2=dt2, ratio=j / jc)


def params(xi, K, bw=0.01, mu=1.0):
    return SpectralParams.from_schmidt_number(K, bw, xi=xi, mu=mu)


class TestLogHyperbolics:
    def test_values(self):
        x = np.array([0.0, 1e-8, 0.5, 19.99, 20.0, 400.0])
        with np.errstate(divide="ignore"):
            ref_s = [-math.inf] + [2 * float(mp.log(mp.sinh(v))) for v in x[1:]]
        np.testing.assert_allclose(log_sinh2(x), ref_s, rtol=1e-14)
        ref_c = [2 * float(mp.log(mp.cosh(v))) for v in x]
        np.testing.assert_allclose(log_cosh2(x), ref_c, rtol=1e-14, atol=1e-15)
        assert abs(log_cosh2(x)[0]) < 1e-15


class TestSeriesAgainstDirectSum:
    @pytest.mark.parametrize("xi,K", [(0.05, 10), (0.5, 3), (2.0, 1.0), (3.0, 25), (8.0, 4), (1.0, 200)])
    def test_matches_high_precision_sum(self, xi, K):
        ref = brute_force(xi, K)
        b = qfi_quantum(params(xi, K))
        assert b.z_omega == pytest.approx(float(ref["z_w"]), rel=1e-11)
        assert b.z_sigma == pytest.approx(float(ref["z_s"]), rel=1e-11)
        assert b.j_q == pytest.approx(float(ref["j_q"]), rel=1e-11)
        p = params(xi, K)
        assert signal_photon_number(p) == pytest.approx(float(ref["n_s"]), rel=1e-11)
        assert pulse_duration_sq(p) == pytest.approx(float(ref["dt2"]), rel=1e-11)
        assert advantage_ratio(p) == pytest.approx(float(ref["ratio"]), rel=1e-11)

    def test_tail_bound_reported(self):
        b = qfi_quantum(params(3.0, 50))
        assert 0.0 <= b.tail_bound < 1e-12

    def test_extreme_squeezing_stays_finite_in_log(self):
        b = qfi_quantum(params(1e4, 2.0))
        assert math.isfinite(b.log_j_q)
        assert b.j_q == math.inf
        assert math.isfinite(log_advantage_ratio(params(1e4, 2.0)))


class TestNoEntanglement:
    @pytest.mark.parametrize("xi", [0.01, 0.3, 2.0, 10.0])
    def test_ratio_is_one_plus_bandwidth_term(self, xi):
        p = params(xi, 1.0)
        expected = 1 + 2 * p.sigma ** 2 / p.omega0 ** 2
        assert advantage_ratio(p) == pytest.approx(expected, rel=1e-12)

    def test_photon_number(self):
        assert signal_photon_number(params(1.3, 1.0)) == pytest.approx(math.sinh(1.3) ** 2, rel=1e-14)

    def test_duration(self):
        p = params(0.7, 1.0)
        assert pulse_duration_sq(p) == pytest.approx(1 / p.sigma_epsilon, rel=1e-13)


class TestHighEntanglement:
    @pytest.mark.parametrize("K", [10.0, 100.0])
    def test_small_xi_closed_form(self, K):
        xi = 0.01
        p = params(xi, K)
        se = p.sigma_epsilon
        closed = xi ** 2 * (K / (K + 1)) * ((K + 1) / se + K * K + K + 1 + 2 / K)
        assert qfi_quantum(p).j_q == pytest.approx(closed, rel=2e-3)

    def test_photon_number_expansion(self):
        xi, K = 0.02, 7.0
        expansion = xi ** 2 * (1 + xi ** 2 / (3 * K) + 2 / 45 * 4 * xi ** 4 / (3 * K * K + 1))
        assert signal_photon_number(params(xi, K)) == pytest.approx(expansion, rel=1e-9)

    def test_duration_approaches_K(self):
        p = params(1e-3, 100.0)
        assert pulse_duration_sq(p) * p.sigma_epsilon == pytest.approx(100.0, rel=1e-4)


class TestResources:
    def test_zero_squeezing(self):
        p = params(0.0, 5.0)
        assert signal_photon_number(p) == 0.0
        assert qfi_quantum(p).j_q == 0.0
        assert mean_energy(p) == 0.0
        with pytest.raises(DomainError):
            pulse_duration_sq(p)
        with pytest.raises(DomainError):
            log_advantage_ratio(p)

    def test_energy(self):
        p = params(0.8, 4.0, mu=0.5)
        assert mean_energy(p) == pytest.approx(0.5 * (2 + 1) * signal_photon_number(p), rel=1e-14)

    def test_per_mode_photons_sum(self):
        b = qfi_quantum(params(2.0, 9.0))
        assert b.per_mode_photons.sum() == pytest.approx(math.exp(b.log_n_s), rel=1e-12)

    def test_bandwidth_share_small(self):
        assert qfi_quantum(params(5.0, 20.0)).bandwidth_share < 1e-2


class TestRestrictedQfi:
    def test_full_occupation_matches_series(self):
        p = params(1.5, 3.0)
        b = qfi_quantum(p)
        photons = b.per_mode_photons
        with_bw = restricted_qfi(photons, p, include_bandwidth=True)
        assert with_bw == pytest.approx(b.j_q, rel=1e-9)

    def test_two_mode_pure_case(self):
        p = params(1.0, 3.0)
        n0, n1 = 1e3, 1e2
        expected = (2 * n0 * n1 + n0 + 3 * n1) / p.sigma_epsilon
        assert restricted_qfi([n0, n1], p) == pytest.approx(expected, rel=1e-14)


class TestRegimes:
    def test_classification_table(self):
        assert regime_of(5.0, 1.0) is Regime.NO_ENTANGLEMENT
        assert regime_of(0.05, 10.0) is Regime.HIGH_ENTANGLEMENT
        assert regime_of(2000.0, 10.0) is Regime.HIGH_SQUEEZING
        assert regime_of(100.0, 100.0) is Regime.MIXED
        assert regime_of(100.0, 30.0) is Regime.INDETERMINATE

    def test_boundaries_inclusive(self):
        K = 16.0
        assert regime_of(math.sqrt(K) / 10, K) is Regime.HIGH_ENTANGLEMENT
        assert regime_of(10 * K ** 1.5, K) is Regime.HIGH_SQUEEZING
        assert regime_of(10 * 100.0, 10_000.0) is Regime.MIXED

    def test_high_squeezing_needs_some_entanglement(self):
        assert regime_of(1e6, 1.2) is not Regime.HIGH_SQUEEZING

    def test_rejects_bad_domain(self):
        with pytest.raises(DomainError):
            regime_of(-1.0, 2.0)
        with pytest.raises(DomainError):
            regime_of(1.0, 0.5)

    def test_high_entanglement_report(self):
        r = classify_regime(0.5, 400.0)
        assert r.regime is Regime.HIGH_ENTANGLEMENT
        assert abs(r.relative_gap) < 1e-3

    def test_mixed_report_within_twenty_percent(self):
        r = classify_regime(100.0, 100.0)
        assert r.regime is Regime.MIXED
        assert abs(r.relative_gap) < 0.2

    def test_high_squeezing_prefactor(self):
        # the exact ratio tends to (1/2)(4 N_S)^q; the 1/3 form is low by 3/2
        r = classify_regime(3e4, 10.0)
        assert r.regime is Regime.HIGH_SQUEEZING
        assert r.log_exact_ratio - r.log_asymptotic_ratio == pytest.approx(math.log(1.5), abs=1e-6)

    def test_indeterminate_has_no_asymptote(self):
        r = classify_regime(100.0, 30.0)
        assert r.asymptotic_ratio is None and r.relative_gap is None


class TestProperties:
    @given(st.floats(0.01, 50.0), st.floats(1.0, 300.0))
    def test_sigma_epsilon_swap_invariance(self, xi, K):
        p = params(xi, K)
        a, b = qfi_quantum(p), qfi_quantum(p.swapped())
        assert a.log_j_q == pytest.approx(b.log_j_q, rel=1e-14, abs=1e-14)
        assert signal_photon_number(p) == signal_photon_number(p.swapped())

    @given(st.floats(0.01, 30.0), st.floats(1.0, 100.0), st.floats(0.2, 5.0))
    def test_inverse_square_mu_scaling(self, xi, K, mu):
        a = qfi_quantum(params(xi, K)).log_j_q
        b = qfi_quantum(params(xi, K, mu=mu)).log_j_q
        assert b - a == pytest.approx(-2 * math.log(mu), abs=1e-12)

    @given(st.floats(0.05, 30.0), st.floats(1.0, 100.0))
    def test_quantum_never_worse_than_classical(self, xi, K):
        assert log_advantage_ratio(params(xi, K)) >= -1e-12

    @given(st.floats(0.01, 20.0), st.floats(1.0, 100.0))
    def test_monotone_in_squeezing(self, xi, K):
        assert qfi_quantum(params(xi * 1.1, K)).log_j_q > qfi_quantum(params(xi, K)).log_j_q


class TestSqueezingProfile:
    def test_corrected_normalization_tends_to_one(self):
        K = 10.0
        xi = np.array([50 * K ** 1.5, 100 * K ** 1.5])
        prof = figure2_profile(K, xi)
        np.testing.assert_allclose(prof.norm_freq_corrected, 1.0, atol=0.05)
        assert np.all(prof.norm_bw_corrected < 1e-6)

    def test_rejects_bad_grid(self):
        with pytest.raises(DomainError):
            figure2_profile(10.0, [2.0, 1.0])
        with pytest.raises(DomainError):
            figure2_profile(1.0, [1.0, 2.0])


class TestMap:
    def test_shape_and_orientation(self):
        g = figure3_grid([1.0, 100.0], [2.0, 100.0])
        assert g.values.shape == (2, 2)
        assert g.values[1, 1] == pytest.approx(0.963, abs=5e-3)
        # strong squeezing at low K sits far below the plateau
        assert g.values[1, 0] < 1e-20

    def test_thread_count_independence(self):
        xs = np.linspace(1, 100, 7)
        ks = np.linspace(1, 100, 5)
        a = figure3_grid(xs, ks, threads=1).log_values
        b = figure3_grid(xs, ks, threads=4).log_values
        np.testing.assert_array_equal(a, b)

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv("QDLIDAR_THREADS", "3")
        assert thread_count() == 3
        assert thread_count(2) == 2
        monkeypatch.delenv("QDLIDAR_THREADS")
        assert thread_count() == 1
