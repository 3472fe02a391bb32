"""Frequency-resolved photon counting in the single-pair sector.

With a detected pair (w, wt) the likelihood is mu f^2(mu w, wt).  In the
rotated variables u = mu w + wt - w0 and v = mu w - wt this factorizes into
two independent Gaussians with variances sigma^2/2 and eps^2/2, which makes
exact sampling and Gauss-Hermite Fisher information straightforward.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import optimize, stats

from .errors import DomainError, NumericalError
from .qfi_quantum import thread_count
from .spectral import SpectralParams, jsa

TWO_PHOTON_XI_MAX = 0.1
MLE_XTOL = 1e-10
GAUSS_HERMITE_ORDER = 40


@dataclass(frozen=True)
class DetectionEvent:
    omega: float
    omega_tilde: float


@dataclass(frozen=True)
class PhaseConfig:
    """Squeezing phase, signal and idler phases; ``path_length`` adds a
    frequency-linear signal phase (propagation to and from the target)."""

    zeta: float = 0.0
    varphi: float = 0.0
    vartheta: float = 0.0
    path_length: float = 0.0


@dataclass(frozen=True)
class EstimationRun:
    M: int
    seed: int | None
    mu_true: float | None
    mu_hat: float
    fisher_info: float
    at_bracket_edge: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _check_regime(params: SpectralParams) -> None:
    if params.xi > TWO_PHOTON_XI_MAX:
        warnings.warn(
            f"xi = {params.xi} is outside the two-photon regime (xi <= {TWO_PHOTON_XI_MAX})",
            RuntimeWarning,
            stacklevel=3,
        )


def joint_spectrum_pdf(omega, omega_tilde, mu: float, params: SpectralParams):
    """Probability density of detecting one photon pair at (omega, omega_tilde)."""
    _check_regime(params)
    f = jsa(mu * np.asarray(omega, dtype=float), omega_tilde, params)
    return mu * params.xi ** 2 * f * f


def conditional_pdf(omega, omega_tilde, mu: float, params: SpectralParams):
    """Density of (omega, omega_tilde) given that a pair was detected."""
    f = jsa(mu * np.asarray(omega, dtype=float), omega_tilde, params)
    return mu * f * f


def log_likelihood(mu: float, omega, omega_tilde, params: SpectralParams):
    """Per-event log of the conditional density."""
    omega = np.asarray(omega, dtype=float)
    omega_tilde = np.asarray(omega_tilde, dtype=float)
    s, e = params.sigma, params.epsilon
    u = mu * omega + omega_tilde - params.omega0
    v = mu * omega - omega_tilde
    return math.log(mu * 2.0 / (math.pi * s * e)) - u * u / (s * s) - v * v / (e * e)


def score(mu: float, omega, omega_tilde, params: SpectralParams):
    """d/dmu of the per-event log-likelihood."""
    omega = np.asarray(omega, dtype=float)
    omega_tilde = np.asarray(omega_tilde, dtype=float)
    s, e = params.sigma, params.epsilon
    u = mu * omega + omega_tilde - params.omega0
    v = mu * omega - omega_tilde
    return 1.0 / mu - 2.0 * omega * (u / (s * s) + v / (e * e))


def pdf_mu_derivative(omega, omega_tilde, mu: float, params: SpectralParams):
    """Analytic d p / d mu of the unconditional pair density."""
    return joint_spectrum_pdf(omega, omega_tilde, mu, params) * score(mu, omega, omega_tilde, params)


def _uv_to_frequencies(u, v, mu, omega0):
    return (u + v + omega0) / (2.0 * mu), (u - v + omega0) / 2.0


@dataclass(frozen=True)
class FisherResult:
    value: float
    error_estimate: float
    per_pair: float


def fisher_info_counting(mu: float, params: SpectralParams, order: int = GAUSS_HERMITE_ORDER) -> FisherResult:
    """Fisher information of frequency-resolved counting, including the xi^2 pair weight.

    ``per_pair`` is the information carried by one detected pair, which is
    what enters the Cramer-Rao bound for M detected pairs.
    """
    _check_regime(params)

    def per_pair(n):
        x, w = np.polynomial.hermite.hermgauss(n)
        # u ~ N(0, sigma^2/2): u = sigma * x under weight exp(-x^2)
        uu, vv = np.meshgrid(params.sigma * x, params.epsilon * x, indexing="ij")
        ww = np.outer(w, w) / math.pi
        om, omt = _uv_to_frequencies(uu, vv, mu, params.omega0)
        return float(np.sum(ww * score(mu, om, omt, params) ** 2))

    a = per_pair(order)
    b = per_pair(order + 20)
    err = abs(a - b)
    if err > 1e-10 * abs(b):
        raise NumericalError(f"Gauss-Hermite Fisher information unstable (change {err:.3e})")
    return FisherResult(params.xi ** 2 * b, params.xi ** 2 * err, b)


def fisher_info_closed_form(mu: float, params: SpectralParams) -> float:
    """(xi^2/mu^2)(w0^2 K/(sigma eps) + K^2 + 1)."""
    K = params.schmidt_number
    return params.xi ** 2 / mu ** 2 * (params.omega0 ** 2 * K / params.sigma_epsilon + K * K + 1.0)


def binned_fisher_info(
    mu: float,
    params: SpectralParams,
    bins: int = 32,
    sub: int = 8,
    half_widths: float = 6.0,
) -> float:
    """Per-pair Fisher information after coarse-graining onto a bins x bins grid
    in (omega, omega_tilde); each bin is integrated on a sub x sub midpoint grid."""
    s, e = params.sigma, params.epsilon
    # marginal spreads of omega and omega_tilde under the pair density
    sd_w = math.sqrt(s * s + e * e) / (2.0 * math.sqrt(2.0) * mu)
    sd_wt = math.sqrt(s * s + e * e) / (2.0 * math.sqrt(2.0))
    c_w = params.omega0 / (2.0 * mu)
    c_wt = params.omega0 / 2.0
    n = bins * sub
    hw, hwt = 2 * half_widths * sd_w / n, 2 * half_widths * sd_wt / n
    gw = c_w - half_widths * sd_w + hw * (np.arange(n) + 0.5)
    gwt = c_wt - half_widths * sd_wt + hwt * (np.arange(n) + 0.5)
    W, WT = np.meshgrid(gw, gwt, indexing="ij")
    p = conditional_pdf(W, WT, mu, params) * hw * hwt
    dp = p * score(mu, W, WT, params)
    pb = p.reshape(bins, sub, bins, sub).sum(axis=(1, 3))
    dpb = dp.reshape(bins, sub, bins, sub).sum(axis=(1, 3))
    keep = pb > 0
    return float(np.sum(dpb[keep] ** 2 / pb[keep]))


def probe_amplitude(omega, omega_tilde, mu: float, params: SpectralParams, phases: PhaseConfig | None = None):
    """Amplitude <1_w, 1_wt | psi> of the single-pair sector, optionally with phases."""
    amp = params.xi * jsa_amplitude(omega, omega_tilde, mu, params)
    if phases is None:
        return amp
    phase = (phases.zeta + phases.varphi + phases.path_length * np.asarray(omega, dtype=float)
             + phases.vartheta)
    return amp * np.exp(1j * phase)


def jsa_amplitude(omega, omega_tilde, mu, params):
    return -math.sqrt(mu) * jsa(mu * np.asarray(omega, dtype=float), omega_tilde, params)


@dataclass(frozen=True)
class PhaseReport:
    max_deviation: float
    amplitudes_real: bool
    n_configs: int

    @property
    def passed(self) -> bool:
        return self.max_deviation < 1e-12 and self.amplitudes_real


def verify_phase_insensitivity(
    mu: float,
    params: SpectralParams,
    phases: list[PhaseConfig],
    grid_points: int = 41,
) -> PhaseReport:
    """Compare counting probabilities with and without phases on a frequency grid.

    The deviation is measured relative to the peak probability density.
    """
    s = math.sqrt(params.sigma ** 2 + params.epsilon ** 2)
    w = params.omega0 / (2 * mu) + np.linspace(-3, 3, grid_points) * s / mu
    wt = params.omega0 / 2 + np.linspace(-3, 3, grid_points) * s
    W, WT = np.meshgrid(w, wt, indexing="ij")
    base_amp = probe_amplitude(W, WT, mu, params)
    base = joint_spectrum_pdf(W, WT, mu, params)
    peak = float(np.max(base))
    dev = float(np.max(np.abs(np.abs(base_amp) ** 2 - base))) / peak
    for ph in phases:
        a = probe_amplitude(W, WT, mu, params, ph)
        dev = max(dev, float(np.max(np.abs(np.abs(a) ** 2 - base))) / peak)
    is_real = bool(np.isrealobj(base_amp) or np.all(np.imag(base_amp) == 0))
    return PhaseReport(dev, is_real, len(phases))


def _generator(seed: int, stream: int) -> np.random.Generator:
    # one independent Philox stream per replication index
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


def sample_uv(mu: float, params: SpectralParams, M: int, seed: int, stream: int = 0):
    if M < 1:
        raise DomainError(f"need at least one pair, got M={M}")
    rng = _generator(seed, stream)
    u = rng.normal(0.0, params.sigma / math.sqrt(2.0), M)
    v = rng.normal(0.0, params.epsilon / math.sqrt(2.0), M)
    return _uv_to_frequencies(u, v, mu, params.omega0)


def sample_photon_pairs(mu: float, params: SpectralParams, M: int, seed: int, stream: int = 0) -> list[DetectionEvent]:
    """M independent detected pairs; reproducible for fixed (seed, stream)."""
    om, omt = sample_uv(mu, params, M, seed, stream)
    return [DetectionEvent(float(a), float(b)) for a, b in zip(om, omt)]


def events_to_arrays(events) -> tuple[np.ndarray, np.ndarray]:
    if not len(events):
        raise DomainError("no events")
    om = np.fromiter((e.omega for e in events), float, len(events))
    omt = np.fromiter((e.omega_tilde for e in events), float, len(events))
    return om, omt


def mle_closed_form(omega, omega_tilde, params: SpectralParams) -> float:
    """Root of the likelihood equation, a quadratic in mu for this family."""
    omega = np.asarray(omega, dtype=float)
    omega_tilde = np.asarray(omega_tilde, dtype=float)
    s2, e2 = params.sigma ** 2, params.epsilon ** 2
    a = float(np.sum(omega ** 2)) * (1.0 / s2 + 1.0 / e2)
    b = float(np.sum(omega * ((params.omega0 - omega_tilde) / s2 + omega_tilde / e2)))
    m = omega.size
    return (2.0 * b + math.sqrt(4.0 * b * b + 8.0 * a * m)) / (4.0 * a)


def mle_estimate(
    omega,
    omega_tilde,
    params: SpectralParams,
    mu_bracket: tuple[float, float],
    *,
    mu_true: float | None = None,
    seed: int | None = None,
) -> EstimationRun:
    """Maximum-likelihood mu by bounded Brent search over mu_bracket."""
    omega = np.asarray(omega, dtype=float)
    omega_tilde = np.asarray(omega_tilde, dtype=float)
    if omega.size == 0:
        raise DomainError("no events")
    lo, hi = mu_bracket
    if not 0 < lo < hi:
        raise DomainError(f"invalid bracket {mu_bracket!r}")

    def neg(mu):
        return -float(np.sum(log_likelihood(mu, omega, omega_tilde, params)))

    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                   options={"xatol": MLE_XTOL, "maxiter": 500})
    if not res.success:
        raise NumericalError(f"likelihood maximization failed: {res.message}")
    mu_hat = float(res.x)
    # bounded Brent keeps at least sqrt(eps)|x| + xatol/3 away from either bound
    edge_tol = 4.0 * (math.sqrt(np.finfo(float).eps) * max(1.0, abs(mu_hat)) + MLE_XTOL)
    edge = min(mu_hat - lo, hi - mu_hat) < edge_tol
    if edge:
        warnings.warn("likelihood maximum sits on the bracket edge", RuntimeWarning, stacklevel=2)
    per_pair = fisher_info_counting(mu_hat, params.replace(xi=max(params.xi, 1e-300))).per_pair
    return EstimationRun(int(omega.size), seed, mu_true, mu_hat, per_pair, bool(edge))


@dataclass(frozen=True)
class CrbReport:
    mu_true: float
    M: int
    replications: int
    seed: int
    fisher_info: float
    mean_mu_hat: float
    mean_standard_error: float
    variance: float
    normalized_variance: float
    band: tuple[float, float]
    chi2_lower_quantile: float
    chi2_statistic: float
    edge_hits: int
    mu_hats: tuple[float, ...]

    @property
    def in_band(self) -> bool:
        lo, hi = self.band
        return lo <= self.normalized_variance <= hi

    @property
    def sub_crb_significant(self) -> bool:
        """One-sided chi-square test of variance below 1/(M F) at 99% confidence."""
        return self.chi2_statistic < self.chi2_lower_quantile

    @property
    def unbiased(self) -> bool:
        return abs(self.mean_mu_hat - self.mu_true) <= 3.0 * self.mean_standard_error

    @property
    def passed(self) -> bool:
        return self.in_band and not self.sub_crb_significant and self.edge_hits == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("mu_hats")
        d["band"] = list(self.band)
        d.update(in_band=self.in_band, sub_crb_significant=self.sub_crb_significant,
                 unbiased=self.unbiased, passed=self.passed)
        return d


def crb_monte_carlo(
    mu: float,
    params: SpectralParams,
    M: int,
    replications: int,
    seed: int,
    *,
    bracket_half_width: float | None = None,
    band: tuple[float, float] = (0.9, 1.1),
    threads: int | None = None,
) -> CrbReport:
    """Repeat sampling + MLE and compare Var(mu_hat) with 1/(M F)."""
    if M < 1 or replications < 2:
        raise DomainError("need M >= 1 and at least two replications")
    f_pair = fisher_info_counting(mu, params.replace(xi=max(params.xi, 1e-300))).per_pair
    sd = 1.0 / math.sqrt(M * f_pair)
    half = bracket_half_width if bracket_half_width is not None else 50.0 * sd
    bracket = (mu - half, mu + half)

    def one(rep):
        om, omt = sample_uv(mu, params, M, seed, rep)
        return mle_estimate(om, omt, params, bracket, mu_true=mu, seed=seed)

    n = thread_count(threads)
    if n == 1:
        runs = [one(r) for r in range(replications)]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            runs = list(pool.map(one, range(replications)))
    hats = np.array([r.mu_hat for r in runs])
    var = float(np.var(hats, ddof=1))
    crb = 1.0 / (M * f_pair)
    dof = replications - 1
    return CrbReport(
        mu_true=mu,
        M=M,
        replications=replications,
        seed=seed,
        fisher_info=f_pair,
        mean_mu_hat=float(np.mean(hats)),
        mean_standard_error=math.sqrt(var / replications),
        variance=var,
        normalized_variance=var / crb,
        band=tuple(band),
        chi2_lower_quantile=float(stats.chi2.ppf(0.01, dof)),
        chi2_statistic=dof * var / crb,
        edge_hits=sum(r.at_bracket_edge for r in runs),
        mu_hats=tuple(float(h) for h in hats),
    )
