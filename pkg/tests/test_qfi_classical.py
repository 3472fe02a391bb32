import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdlidar.errors import DomainError
from qdlidar.qfi_classical import (
    CoherentProbe,
    envelope_duration_sq,
    envelope_norm,
    gaussian_probe,
    qfi_coherent_general,
    qfi_coherent_narrowband,
    raised_cosine_probe,
)


def time_domain_duration_sq(probe, n_t=2**16):
    """Duration from the FFT intensity profile, independent of the f'^2 identity."""
    a, b = probe.window
    w = np.linspace(a, b, n_t, endpoint=False)
    dw = w[1] - w[0]
    g = np.fft.fftshift(np.fft.fft(probe.envelope(w)))
    t = np.fft.fftshift(np.fft.fftfreq(n_t, d=dw)) * 2 * math.pi
    p = np.abs(g) ** 2
    p /= p.sum()
    mean = (t * p).sum()
    return ((t - mean) ** 2 * p).sum()


class TestEnvelopes:
    @pytest.mark.parametrize("probe", [gaussian_probe(1.0, 3.0, 0.05), raised_cosine_probe(1.0, 3.0, 400.0)])
    def test_normalized(self, probe):
        assert envelope_norm(probe) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_duration(self):
        p = gaussian_probe(1.0, 2.0, 0.04)
        assert envelope_duration_sq(p) == pytest.approx(1 / (2 * 0.04 ** 2), rel=1e-11)
        assert time_domain_duration_sq(p) == pytest.approx(1 / (2 * 0.04 ** 2), rel=1e-6)

    def test_raised_cosine_duration(self):
        p = raised_cosine_probe(1.0, 2.0, 250.0)
        assert envelope_duration_sq(p) == pytest.approx(250.0, rel=1e-10)
        assert time_domain_duration_sq(p) == pytest.approx(250.0, rel=1e-3)


class TestCoherentQfi:
    def test_gaussian_exact_offset(self):
        # for a real Gaussian the general result exceeds the narrowband one by exactly dw^2 / w_c^2
        n_c, w_c, dw, mu = 1e4, 1.0, 0.01, 1.0
        dt2 = 1 / (2 * dw ** 2)
        gen = qfi_coherent_general(gaussian_probe(n_c, w_c, dw), mu)
        nb = qfi_coherent_narrowband(n_c, w_c, dt2, mu)
        assert gen / nb - 1 == pytest.approx(dw ** 2 / w_c ** 2, rel=1e-6)

    @pytest.mark.parametrize("ratio", [10.0, 100.0])
    def test_gaussian_closed_form(self, ratio):
        n_c, w_c, mu = 37.0, 2.0, 0.8
        dw = w_c / ratio
        expected = 2 * n_c / mu ** 2 * (1 + w_c ** 2 / dw ** 2)
        assert qfi_coherent_general(gaussian_probe(n_c, w_c, dw), mu) == pytest.approx(expected, rel=1e-10)

    def test_raised_cosine_against_gaussian(self):
        # same duration, same carrier: both sit within dw^2/w_c^2 of the narrowband value
        dt2 = 5000.0
        g = qfi_coherent_general(gaussian_probe(10.0, 1.0, math.sqrt(1 / (2 * dt2))), 1.0)
        rc = qfi_coherent_general(raised_cosine_probe(10.0, 1.0, dt2), 1.0)
        assert rc / g == pytest.approx(1.0, rel=1e-3)

    def test_finite_difference_fallback_warns(self):
        base = gaussian_probe(5.0, 1.0, 0.02)
        probe = CoherentProbe(5.0, base.envelope, None, base.center, base.width)
        with pytest.warns(RuntimeWarning):
            val = qfi_coherent_general(probe, 1.0)
        assert val == pytest.approx(qfi_coherent_general(base, 1.0), rel=1e-7)

    def test_rejects_unnormalized(self):
        base = gaussian_probe(1.0, 1.0, 0.02)
        probe = CoherentProbe(1.0, lambda w: 2 * base.envelope(w), base.derivative, 1.0, 0.02)
        with pytest.raises(DomainError):
            qfi_coherent_general(probe, 1.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            gaussian_probe(-1.0, 1.0, 0.1)
        with pytest.raises(DomainError):
            qfi_coherent_narrowband(1.0, 1.0, 1.0, 0.0)
        with pytest.raises(DomainError):
            qfi_coherent_general(gaussian_probe(1.0, 1.0, 0.1), -1.0)

    def test_zero_photons(self):
        assert qfi_coherent_general(gaussian_probe(0.0, 1.0, 0.1), 1.0) == 0.0

    @given(st.floats(1.0, 1e6), st.floats(0.5, 10.0), st.floats(1e-3, 2e-2), st.floats(0.3, 3.0))
    def test_linear_in_photons_and_inverse_square_in_mu(self, n_c, w_c, rel_dw, mu):
        dw = rel_dw * w_c
        p1 = gaussian_probe(1.0, w_c, dw)
        pn = gaussian_probe(n_c, w_c, dw)
        base = qfi_coherent_general(p1, 1.0)
        assert qfi_coherent_general(pn, mu) == pytest.approx(n_c * base / mu ** 2, rel=1e-10)

    @given(st.floats(1e-3, 2e-2))
    def test_narrowband_limit(self, rel_dw):
        dw = rel_dw
        gen = qfi_coherent_general(gaussian_probe(1.0, 1.0, dw), 1.0)
        nb = qfi_coherent_narrowband(1.0, 1.0, 1 / (2 * dw ** 2), 1.0)
        assert abs(gen / nb - 1) <= 1.01 * dw ** 2
