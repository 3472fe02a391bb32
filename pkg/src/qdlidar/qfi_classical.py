"""Coherent-state benchmark: QFI of a classical pulse reflected off the target."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericalError

WINDOW_WIDTHS = 12.0
FALLBACK_STEP = 1e-6
NORM_TOL = 1e-8


@dataclass(frozen=True)
class CoherentProbe:
    """A coherent pulse with real spectral envelope f (normalized in L2).

    ``width`` sets the integration window centre +- 12 width; for compact
    envelopes pass ``support`` instead.  ``derivative`` may be None, in which
    case a central difference is used with a warning.
    """

    amplitude_sq: float
    envelope: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray] | None
    center: float
    width: float
    support: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.amplitude_sq >= 0:
            raise DomainError(f"photon number must be non-negative, got {self.amplitude_sq!r}")
        if not self.width > 0:
            raise DomainError(f"width must be positive, got {self.width!r}")

    @property
    def window(self) -> tuple[float, float]:
        if self.support is not None:
            return self.support
        return (self.center - WINDOW_WIDTHS * self.width, self.center + WINDOW_WIDTHS * self.width)

    def envelope_derivative(self, omega):
        if self.derivative is not None:
            return self.derivative(omega)
        h = FALLBACK_STEP * self.width
        return (self.envelope(omega + h) - self.envelope(omega - h)) / (2.0 * h)


def gaussian_probe(n_c: float, omega_c: float, delta_omega: float) -> CoherentProbe:
    """Gaussian envelope exp(-(w - w_c)^2 / (2 dw^2)), L2-normalized.

    Its intensity |f|^2 has standard deviation dw/sqrt(2), so the pulse
    duration squared is 1/(2 dw^2).
    """
    norm = (math.pi * delta_omega ** 2) ** -0.25

    def f(w):
        x = (np.asarray(w, dtype=float) - omega_c) / delta_omega
        return norm * np.exp(-0.5 * x * x)

    def df(w):
        x = (np.asarray(w, dtype=float) - omega_c) / delta_omega
        return -x / delta_omega * norm * np.exp(-0.5 * x * x)

    return CoherentProbe(n_c, f, df, omega_c, delta_omega)


def raised_cosine_probe(n_c: float, omega_c: float, delta_t_sq: float) -> CoherentProbe:
    """cos^2 envelope on [w_c - W, w_c + W] with half-width chosen to give
    the requested squared pulse duration (W = pi / sqrt(3 dT^2))."""
    half = math.pi / math.sqrt(3.0 * delta_t_sq)
    amp = math.sqrt(4.0 / (3.0 * half))
    k = math.pi / (2.0 * half)

    def f(w):
        x = np.asarray(w, dtype=float) - omega_c
        return np.where(np.abs(x) <= half, amp * np.cos(k * x) ** 2, 0.0)

    def df(w):
        x = np.asarray(w, dtype=float) - omega_c
        return np.where(np.abs(x) <= half, -amp * k * np.sin(2.0 * k * x), 0.0)

    return CoherentProbe(n_c, f, df, omega_c, half, support=(omega_c - half, omega_c + half))


def _quad(fn, a, b, points=None):
    val, err = integrate.quad(fn, a, b, points=points, limit=400, epsabs=0.0, epsrel=1e-12)
    if not math.isfinite(val) or err > 1e-8 * max(abs(val), 1e-300):
        raise NumericalError(f"quadrature did not converge (value {val!r}, error {err!r})")
    return val


def envelope_norm(probe: CoherentProbe) -> float:
    a, b = probe.window
    return _quad(lambda w: float(probe.envelope(w)) ** 2, a, b, points=[probe.center])


def envelope_duration_sq(probe: CoherentProbe) -> float:
    """Squared pulse duration, i.e. the integral of f'^2 for a real envelope."""
    a, b = probe.window
    return _quad(lambda w: float(probe.envelope_derivative(w)) ** 2, a, b, points=[probe.center])


def qfi_coherent_general(probe: CoherentProbe, mu: float) -> float:
    """(4 N_c / mu^2) * integral of (f/2 + w f')^2 over the envelope window."""
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    if probe.derivative is None:
        warnings.warn("envelope derivative not supplied; using a central difference",
                      RuntimeWarning, stacklevel=2)
    norm = envelope_norm(probe)
    if abs(norm - 1.0) > NORM_TOL:
        raise DomainError(f"envelope is not normalized: integral of f^2 = {norm!r}")
    if probe.amplitude_sq == 0.0:
        return 0.0
    a, b = probe.window

    def integrand(w):
        return (0.5 * float(probe.envelope(w)) + w * float(probe.envelope_derivative(w))) ** 2

    return 4.0 * probe.amplitude_sq / mu ** 2 * _quad(integrand, a, b, points=[probe.center])


def qfi_coherent_narrowband(n_c: float, omega_c: float, delta_t_sq: float, mu: float) -> float:
    """4 w_c^2 N_c dT^2 / mu^2."""
    if n_c < 0 or omega_c < 0 or delta_t_sq < 0:
        raise DomainError("photon number, carrier and duration must be non-negative")
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu!r}")
    return 4.0 * omega_c ** 2 * n_c * delta_t_sq / mu ** 2
