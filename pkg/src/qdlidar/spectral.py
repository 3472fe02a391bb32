"""Hermite functions, the double-Gaussian joint spectral amplitude and its
Schmidt decomposition, and Doppler-parameter kinematics.

Frequencies are plain floats in whatever unit the caller picks; nothing here
assumes omega0 == 1, although the CLI works in units where it is.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

HERMITE_MAX_ORDER = 10_000
DEFAULT_TAIL_TOL = 1e-12
MAX_SCHMIDT_MODES = 4096
NARROWBAND_RATIO = 10.0

_LOG_PI_QUARTER = 0.25 * math.log(math.pi)
_RESCALE_AT = 1e150


@dataclass(frozen=True)
class SpectralParams:
    """Physical configuration of the twin-beam probe.

    Attributes
    ----------
    omega0 : pump carrier frequency.
    sigma : energy-conservation width (pump bandwidth).
    epsilon : phase-matching width.
    xi : squeezing parameter.
    mu : Doppler parameter of the target.
    """

    omega0: float
    sigma: float
    epsilon: float
    xi: float = 0.0
    mu: float = 1.0

    def __post_init__(self):
        for name in ("omega0", "sigma", "epsilon", "mu"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be finite and positive, got {val!r}")
        if not (math.isfinite(self.xi) and self.xi >= 0):
            raise DomainError(f"xi must be finite and non-negative, got {self.xi!r}")

    @classmethod
    def from_schmidt_number(
        cls,
        K: float,
        bandwidth: float,
        *,
        omega0: float = 1.0,
        xi: float = 0.0,
        mu: float = 1.0,
        wide: str = "sigma",
    ) -> "SpectralParams":
        """Build parameters from the Schmidt number and the relative bandwidth
        sqrt(sigma*epsilon)/omega0.

        ``wide`` names the width that is the larger of the two; the other
        choice only flips the sign pattern of the Schmidt coefficients.
        """
        if not (K >= 1.0 and math.isfinite(K)):
            raise DomainError(f"Schmidt number must be >= 1, got {K!r}")
        if not (bandwidth > 0 and math.isfinite(bandwidth)):
            raise DomainError(f"bandwidth must be positive, got {bandwidth!r}")
        # sigma/epsilon = t solves (t + 1/t)/2 = K
        t = K + math.sqrt(max(K * K - 1.0, 0.0))
        g = bandwidth * omega0
        big, small = g * math.sqrt(t), g / math.sqrt(t)
        if wide == "sigma":
            return cls(omega0, big, small, xi, mu)
        if wide == "epsilon":
            return cls(omega0, small, big, xi, mu)
        raise DomainError(f"wide must be 'sigma' or 'epsilon', got {wide!r}")

    def replace(self, **changes) -> "SpectralParams":
        vals = dict(omega0=self.omega0, sigma=self.sigma, epsilon=self.epsilon,
                    xi=self.xi, mu=self.mu)
        vals.update(changes)
        return SpectralParams(**vals)

    def swapped(self) -> "SpectralParams":
        """Same probe with sigma and epsilon exchanged."""
        return self.replace(sigma=self.epsilon, epsilon=self.sigma)

    @property
    def sigma_epsilon(self) -> float:
        return self.sigma * self.epsilon

    @property
    def schmidt_number(self) -> float:
        return (self.sigma ** 2 + self.epsilon ** 2) / (2.0 * self.sigma * self.epsilon)

    @property
    def decay_ratio(self) -> float:
        """|sigma - epsilon| / (sigma + epsilon), the geometric ratio of r_n."""
        return abs(self.sigma - self.epsilon) / (self.sigma + self.epsilon)

    @property
    def bandwidth(self) -> float:
        """sqrt(sigma*epsilon)/omega0."""
        return math.sqrt(self.sigma_epsilon) / self.omega0

    @property
    def mode_scale(self) -> float:
        """Argument scale s of the Schmidt modes psi_n(x) = sqrt(s) phi_n(s x)."""
        return math.sqrt(2.0 / self.sigma_epsilon)

    @property
    def is_narrowband(self) -> bool:
        return min(self.omega0 / self.sigma, self.omega0 / self.epsilon) >= NARROWBAND_RATIO

    def warn_if_broadband(self) -> None:
        if not self.is_narrowband:
            warnings.warn(
                "omega0 is less than 10x the spectral widths; narrowband "
                "approximations may be inaccurate",
                RuntimeWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class SchmidtBasis:
    """Truncated Schmidt decomposition of the double-Gaussian amplitude.

    ``coefficients`` are the non-negative r_n; ``signs`` carries the
    alternating pattern that appears when epsilon > sigma.
    """

    coefficients: np.ndarray
    schmidt_number: float
    truncation_index: int
    tail_mass: float
    decay_ratio: float
    signs: np.ndarray = field(repr=False)

    def coefficient(self, n) -> np.ndarray:
        """r_n for any n >= 0, including indices past the truncation."""
        n = np.asarray(n)
        r0 = math.sqrt(2.0 / (self.schmidt_number + 1.0))
        with np.errstate(under="ignore"):
            return r0 * np.power(self.decay_ratio, n, dtype=float)

    def schmidt_number_from_coefficients(self) -> float:
        """(sum r_n^4)^-1 with the geometric tail beyond truncation added back."""
        r = self.coefficients
        q4 = self.decay_ratio ** 4
        tail = 0.0 if q4 == 0.0 else float(self.coefficient(self.truncation_index)) ** 4 / (1.0 - q4)
        return 1.0 / (float(np.sum(r ** 4)) + tail)


def truncation_index(q: float, tail_tol: float = DEFAULT_TAIL_TOL) -> int:
    """Smallest N with discarded Schmidt mass q^(2N) below tail_tol."""
    if q == 0.0:
        return 1
    n = max(int(math.floor(math.log(tail_tol) / (2.0 * math.log(q)))), 1)
    while n > 1 and q ** (2 * (n - 1)) < tail_tol:
        n -= 1
    while q ** (2 * n) >= tail_tol:
        n += 1
    return n


def schmidt_basis(
    params: SpectralParams,
    tail_tol: float = DEFAULT_TAIL_TOL,
    max_modes: int = MAX_SCHMIDT_MODES,
) -> SchmidtBasis:
    """Schmidt coefficients truncated once the discarded mass drops below tail_tol."""
    if not 0.0 < tail_tol < 1.0:
        raise DomainError(f"tail_tol must lie in (0, 1), got {tail_tol!r}")
    K = params.schmidt_number
    q = params.decay_ratio
    n_max = truncation_index(q, tail_tol)
    if n_max > max_modes:
        warnings.warn(
            f"Schmidt truncation capped at {max_modes} modes; tail mass exceeds tolerance",
            RuntimeWarning,
            stacklevel=2,
        )
        n_max = max_modes
    n = np.arange(n_max)
    r0 = math.sqrt(2.0 / (K + 1.0))
    with np.errstate(under="ignore"):
        r = r0 * q ** n.astype(float)
    sign = -1.0 if params.epsilon > params.sigma else 1.0
    signs = sign ** n
    tail = 0.0 if q == 0.0 else q ** (2 * n_max)
    r.setflags(write=False)
    signs.setflags(write=False)
    return SchmidtBasis(r, K, n_max, tail, q, signs)


def hermite_fn(n: int, y):
    """Normalized Hermite function phi_n(y).

    Uses the three-term recurrence with running rescaling, so large orders
    and large |y| neither overflow nor underflow prematurely.
    """
    n = int(n)
    if n < 0 or n > HERMITE_MAX_ORDER:
        raise DomainError(f"order must lie in [0, {HERMITE_MAX_ORDER}], got {n}")
    y = np.asarray(y, dtype=float)
    log_scale = -0.5 * y * y - _LOG_PI_QUARTER
    prev = np.zeros_like(y)
    cur = np.ones_like(y)
    for k in range(n):
        prev, cur = cur, math.sqrt(2.0 / (k + 1)) * y * cur - math.sqrt(k / (k + 1)) * prev
        big = np.abs(cur) > _RESCALE_AT
        if np.any(big):
            factor = np.where(big, 1.0 / _RESCALE_AT, 1.0)
            prev = prev * factor
            cur = cur * factor
            log_scale = log_scale - np.log(factor)
    with np.errstate(under="ignore", divide="ignore"):
        return np.sign(cur) * np.exp(np.log(np.abs(cur)) + log_scale)


def hermite_all(n_max: int, y) -> np.ndarray:
    """Stack of phi_0..phi_{n_max} evaluated at y; shape (n_max + 1,) + shape(y)."""
    n_max = int(n_max)
    if n_max < 0 or n_max > HERMITE_MAX_ORDER:
        raise DomainError(f"order must lie in [0, {HERMITE_MAX_ORDER}], got {n_max}")
    y = np.asarray(y, dtype=float)
    # values are stored as mantissa * exp(log_scale), scale shared across orders
    log_scale = -0.5 * y * y - _LOG_PI_QUARTER
    mant = np.empty((n_max + 1,) + y.shape)
    prev = np.zeros_like(y)
    cur = np.ones_like(y)
    mant[0] = cur
    rescales = []
    for k in range(n_max):
        nxt = math.sqrt(2.0 / (k + 1)) * y * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
        mant[k + 1] = cur
        big = np.abs(cur) > _RESCALE_AT
        if np.any(big):
            factor = np.where(big, 1.0 / _RESCALE_AT, 1.0)
            prev = prev * factor
            cur = cur * factor
            rescales.append((k + 1, np.log(factor)))
    # orders computed after a rescale carry the accumulated shrink factor
    shift = np.zeros((n_max + 1,) + y.shape)
    for k, logf in rescales:
        shift[k + 1:] += logf
    with np.errstate(under="ignore", divide="ignore"):
        return np.sign(mant) * np.exp(np.log(np.abs(mant)) + log_scale - shift)


def hermite_derivative(n: int, y):
    """phi_n'(y) from the ladder relation between neighbouring orders."""
    phis = hermite_all(n + 1, y)
    up = -math.sqrt((n + 1) / 2.0) * phis[n + 1]
    if n == 0:
        return up
    return up + math.sqrt(n / 2.0) * phis[n - 1]


def schmidt_mode(n: int, x, params: SpectralParams):
    """psi_n(x) with x measured from omega0/2."""
    s = params.mode_scale
    return math.sqrt(s) * hermite_fn(n, s * np.asarray(x, dtype=float))


def jsa(omega, omega_tilde, params: SpectralParams):
    """Double-Gaussian joint spectral amplitude f(omega, omega_tilde)."""
    omega = np.asarray(omega, dtype=float)
    omega_tilde = np.asarray(omega_tilde, dtype=float)
    s, e = params.sigma, params.epsilon
    norm = math.sqrt(2.0 / (math.pi * s * e))
    u = omega + omega_tilde - params.omega0
    v = omega - omega_tilde
    return norm * np.exp(-u * u / (2 * s * s) - v * v / (2 * e * e))


def jsa_doppler(omega, omega_tilde, params: SpectralParams, mu: float | None = None):
    """Amplitude after reflection off the moving target: -sqrt(mu) f(mu omega, omega_tilde)."""
    mu = params.mu if mu is None else mu
    return -math.sqrt(mu) * jsa(mu * np.asarray(omega, dtype=float), omega_tilde, params)


def jsa_from_modes(x, y, params: SpectralParams, basis: SchmidtBasis | None = None):
    """Reconstruct f from its truncated Schmidt sum; x, y are offsets from omega0/2."""
    basis = schmidt_basis(params) if basis is None else basis
    s = params.mode_scale
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = basis.truncation_index - 1
    px = hermite_all(n, s * x)
    py = hermite_all(n, s * y)
    w = (basis.coefficients * basis.signs).reshape((-1,) + (1,) * x.ndim)
    return s * np.sum(w * px * py, axis=0)


@dataclass(frozen=True)
class DopplerKinematics:
    velocity: float
    speed_of_light: float
    mu: float
    dmu_dv: float


def doppler_mu(v: float, c: float = 1.0) -> DopplerKinematics:
    """Doppler parameter of a target receding at velocity v."""
    if not c > 0:
        raise DomainError(f"speed of light must be positive, got {c!r}")
    beta = v / c
    if not abs(beta) < 1.0:
        raise DomainError(f"|v| must be below c, got v={v!r}, c={c!r}")
    mu = (1.0 - beta) / (1.0 + beta)
    dmu = -(2.0 / c) / (1.0 + beta) ** 2
    return DopplerKinematics(v, c, mu, dmu)


def qfi_velocity(j_mu: float, kin: DopplerKinematics) -> float:
    """Propagate a Fisher information in mu to one in velocity."""
    if j_mu < 0:
        raise DomainError(f"Fisher information must be non-negative, got {j_mu!r}")
    return kin.dmu_dv ** 2 * j_mu
