"""Multimode QFI series of the twin-beam probe, its resource quantities
(photon number, pulse duration, energy), regime classification and the
asymptotic closed forms used for cross-checks.

Every series is summed in log space: at xi ~ 1e4 the photon number alone is
around exp(8500), far past double range.  Float accessors return inf there;
use the ``log_*`` fields for comparisons.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, NumericalError
from .spectral import MAX_SCHMIDT_MODES, SpectralParams, truncation_index

DEFAULT_THRESHOLD = 10.0
HIGH_SQUEEZING_MIN_K = 1.5
NO_ENTANGLEMENT_TOL = 1e-9
BOUNDARY_SLACK = 1e-12
TERM_RATIO_STOP = 1e-14
STOP_RUN = 3
MAX_SERIES_TERMS = 1 << 21

_LOG2 = math.log(2.0)
_LOG_STOP = math.log(TERM_RATIO_STOP)


def log_sinh2(x):
    """log(sinh(x)^2) for x >= 0; -inf at x == 0."""
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -np.inf)
    small = (x > 0) & (x < 20.0)
    big = x >= 20.0
    out[small] = 2.0 * np.log(np.sinh(x[small]))
    xb = x[big]
    out[big] = 2.0 * (xb - _LOG2 + np.log1p(-np.exp(-2.0 * xb)))
    return out


def log_cosh2(x):
    """log(cosh(x)^2) for x >= 0."""
    x = np.asarray(x, dtype=float)
    return 2.0 * (x - _LOG2 + np.log1p(np.exp(-2.0 * x)))


def _safe_exp(v: float) -> float:
    if v > 709.0:
        return math.inf
    return math.exp(v)


@dataclass(frozen=True)
class _SeriesLogs:
    z_omega: float
    z_sigma: float
    n_s: float
    n_weighted: float
    n_terms: int
    tail_bound: float
    log_mode_photons: np.ndarray


def _first_stop(log_terms: np.ndarray, min_terms: int) -> int | None:
    """Number of terms to keep, or None if the run criterion is never met."""
    acc = np.logaddexp.accumulate(log_terms)
    with np.errstate(invalid="ignore"):
        ratio = log_terms - acc
    # nan only arises from -inf - -inf, i.e. nothing accumulated yet
    small = np.where(np.isnan(ratio), True, ratio < _LOG_STOP)
    # stop at the end of the first run of STOP_RUN small ratios past min_terms
    run = np.convolve(small.astype(np.int8), np.ones(STOP_RUN, dtype=np.int8), "valid")
    hits = np.nonzero(run[max(min_terms - 1, 0):] == STOP_RUN)[0]
    if hits.size == 0:
        return None
    return int(hits[0] + max(min_terms - 1, 0) + STOP_RUN)


def _log_terms(xi: float, r0: float, q: float, n_total: int):
    n = np.arange(n_total + 2, dtype=float)
    with np.errstate(under="ignore"):
        r = r0 * np.power(q, n)
    x = xi * r
    ls = log_sinh2(x)
    lc = log_cosh2(x)
    m = n[:n_total]
    ls_n = ls[:n_total]
    lc_prev = np.concatenate(([0.0], lc[: n_total - 1]))
    lc_prev2 = np.concatenate(([0.0, 0.0], lc[: n_total - 2]))[:n_total]
    lc_next = lc[1 : n_total + 1]
    lc_next2 = lc[2 : n_total + 2]
    with np.errstate(divide="ignore"):
        log_n = np.log(m)
        log_nm = np.log(m * (m - 1.0))
        z_w = ls_n + np.logaddexp(log_n + lc_prev, np.log(m + 1.0) + lc_next)
        z_s = ls_n + np.logaddexp(log_nm + lc_prev2, np.log((m + 1.0) * (m + 2.0)) + lc_next2)
        nw = log_n + ls_n
    return z_w, z_s, ls_n, nw


@lru_cache(maxsize=8192)
def _series(xi: float, K: float, q: float) -> _SeriesLogs:
    n_min = min(truncation_index(q), MAX_SCHMIDT_MODES)
    r0 = math.sqrt(2.0 / (K + 1.0))
    if xi == 0.0:
        ninf = -math.inf
        return _SeriesLogs(ninf, ninf, ninf, ninf, n_min, 0.0, np.full(n_min, ninf))

    n_total = max(2 * n_min + 8, 64)
    while True:
        terms = _log_terms(xi, r0, q, n_total)
        stops = [_first_stop(t, n_min) for t in terms]
        if all(s is not None for s in stops):
            break
        if n_total >= MAX_SERIES_TERMS:
            raise NumericalError(f"series did not converge within {MAX_SERIES_TERMS} terms")
        n_total = min(2 * n_total, MAX_SERIES_TERMS)
    n_used = max(stops)
    sums = [float(np.logaddexp.accumulate(t[:n_used])[-1]) for t in terms]

    # beyond n the term ratio is at most q^2 (n+1)/(n-1); geometric tail bound
    rel = 0.0
    if q > 0.0 and n_used >= 3:
        rho = q * q * n_used / (n_used - 2.0)
        if rho >= 1.0:
            rel = math.inf
        else:
            for t, s in zip(terms, sums):
                if s > -math.inf:
                    rel = max(rel, math.exp(t[n_used - 1] - s) * rho / (1.0 - rho))
    photons = terms[2][:n_min].copy()
    photons.setflags(write=False)
    return _SeriesLogs(sums[0], sums[1], sums[2], sums[3], n_used, rel, photons)


def _series_for(params: SpectralParams) -> _SeriesLogs:
    # keyed on symmetric combinations so sigma <-> epsilon is exactly invariant
    return _series(float(params.xi), float(params.schmidt_number), float(params.decay_ratio))


@dataclass(frozen=True)
class QfiBreakdown:
    """J_q assembled from the frequency series and the bandwidth series.

    Values are stored as natural logs.  ``tail_bound`` bounds the relative
    truncation error of every series.
    """

    params: SpectralParams
    log_z_omega: float
    log_z_sigma: float
    log_j_q: float
    log_n_s: float
    n_terms_used: int
    tail_bound: float
    log_per_mode_photons: np.ndarray

    @property
    def z_omega(self) -> float:
        return _safe_exp(self.log_z_omega)

    @property
    def z_sigma(self) -> float:
        return _safe_exp(self.log_z_sigma)

    @property
    def j_q(self) -> float:
        return _safe_exp(self.log_j_q)

    @property
    def per_mode_photons(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_per_mode_photons)

    @property
    def bandwidth_share(self) -> float:
        """Fraction of J_q carried by the bandwidth series."""
        p = self.params
        lb = math.log(p.sigma_epsilon / p.omega0 ** 2) + self.log_z_sigma
        if lb == -math.inf:
            return 0.0
        return math.exp(lb - np.logaddexp(self.log_z_omega, lb))


def log_signal_photon_number(params: SpectralParams) -> float:
    return _series_for(params).n_s


def signal_photon_number(params: SpectralParams) -> float:
    """Mean signal photon number, summed over all Schmidt modes."""
    return _safe_exp(log_signal_photon_number(params))


def pulse_duration_sq(params: SpectralParams) -> float:
    """Squared time duration of the signal pulse."""
    s = _series_for(params)
    if s.n_s == -math.inf:
        raise DomainError("pulse duration is undefined for xi = 0")
    mean_index = math.exp(s.n_weighted - s.n_s) if s.n_weighted > -math.inf else 0.0
    return (2.0 / params.sigma_epsilon) * (mean_index + 0.5)


def mean_energy(params: SpectralParams) -> float:
    """Mean energy of signal plus idler after reflection (hbar = 1)."""
    n_s = signal_photon_number(params)
    if n_s == 0.0:
        return 0.0
    return 0.5 * params.omega0 * (1.0 / params.mu + 1.0) * n_s


def qfi_quantum(params: SpectralParams) -> QfiBreakdown:
    s = _series_for(params)
    se_ratio = params.sigma_epsilon / params.omega0 ** 2
    log_pref = -2.0 * math.log(params.mu) - math.log(se_ratio)
    if s.z_omega == -math.inf and s.z_sigma == -math.inf:
        log_j = -math.inf
    else:
        log_j = log_pref + float(np.logaddexp(s.z_omega, math.log(se_ratio) + s.z_sigma))
    return QfiBreakdown(params, s.z_omega, s.z_sigma, log_j, s.n_s, s.n_terms,
                        s.tail_bound, s.log_mode_photons)


def restricted_qfi(photons, params: SpectralParams, include_bandwidth: bool = False) -> float:
    """J_q for a probe that populates only the listed Schmidt modes.

    ``photons[n]`` is the mean photon number of mode n; all other modes are
    vacuum.  With include_bandwidth False only the frequency series is kept,
    which is what the three-mode loss model resolves.
    """
    ns = np.asarray(photons, dtype=float)
    full = np.concatenate((ns, [0.0, 0.0]))
    z_w = 0.0
    z_s = 0.0
    for n, nn in enumerate(ns):
        c_prev = 1.0 + full[n - 1] if n >= 1 else 1.0
        c_prev2 = 1.0 + full[n - 2] if n >= 2 else 1.0
        z_w += nn * (n * c_prev + (n + 1) * (1.0 + full[n + 1]))
        z_s += nn * (n * (n - 1) * c_prev2 + (n + 1) * (n + 2) * (1.0 + full[n + 2]))
    se_ratio = params.sigma_epsilon / params.omega0 ** 2
    total = z_w + (se_ratio * z_s if include_bandwidth else 0.0)
    return total / (params.mu ** 2 * se_ratio)


def log_classical_matched_qfi(params: SpectralParams) -> float:
    """log J_c for a coherent pulse with the probe's carrier, photon number and duration."""
    s = _series_for(params)
    omega_c = 0.5 * params.omega0
    return (math.log(4.0 * omega_c ** 2) + s.n_s + math.log(pulse_duration_sq(params))
            - 2.0 * math.log(params.mu))


def log_advantage_ratio(params: SpectralParams) -> float:
    if params.xi == 0.0:
        raise DomainError("advantage ratio is undefined for xi = 0")
    return qfi_quantum(params).log_j_q - log_classical_matched_qfi(params)


def advantage_ratio(params: SpectralParams) -> float:
    """J_q / J_c at matched carrier, signal photon number and pulse duration."""
    return _safe_exp(log_advantage_ratio(params))


class Regime(enum.Enum):
    NO_ENTANGLEMENT = "NoEntanglement"
    HIGH_ENTANGLEMENT = "HighEntanglement"
    HIGH_SQUEEZING = "HighSqueezing"
    MIXED = "Mixed"
    INDETERMINATE = "Indeterminate"


def regime_of(xi: float, K: float, threshold: float = DEFAULT_THRESHOLD) -> Regime:
    """Regime of (xi, K); boundaries are inclusive."""
    if xi < 0 or K < 1:
        raise DomainError(f"need xi >= 0 and K >= 1, got xi={xi!r}, K={K!r}")
    lo = 1.0 - BOUNDARY_SLACK
    hi = 1.0 + BOUNDARY_SLACK
    k_sqrt = math.sqrt(K)
    k_three_halves = K * k_sqrt
    if abs(K - 1.0) <= NO_ENTANGLEMENT_TOL:
        return Regime.NO_ENTANGLEMENT
    if xi <= hi * k_sqrt / threshold:
        return Regime.HIGH_ENTANGLEMENT
    if xi >= lo * threshold * k_three_halves and K >= lo * HIGH_SQUEEZING_MIN_K:
        return Regime.HIGH_SQUEEZING
    if lo * threshold * k_sqrt <= xi <= hi * k_three_halves / threshold:
        return Regime.MIXED
    return Regime.INDETERMINATE


def log_asymptotic_advantage(regime: Regime, params: SpectralParams) -> float:
    K = params.schmidt_number
    if regime is Regime.NO_ENTANGLEMENT:
        return 0.0
    if regime is Regime.HIGH_ENTANGLEMENT:
        width = (params.sigma ** 2 + params.epsilon ** 2) / (2.0 * params.omega0 ** 2)
        return math.log1p(width * (1.0 + 1.0 / K ** 2 + 1.0 / (K * (K * K + K))))
    lns = log_signal_photon_number(params)
    if regime is Regime.HIGH_SQUEEZING:
        expo = math.sqrt((K - 1.0) / (K + 1.0))
        return -math.log(3.0) + expo * (math.log(4.0) + lns)
    if regime is Regime.MIXED:
        slope = params.xi / (math.sqrt(2.0) * K * math.sqrt(K))
        return math.log(slope + params.sigma_epsilon / (4.0 * params.omega0 ** 2)) + lns
    raise DomainError("no asymptotic form for an indeterminate regime")


def asymptotic_advantage(regime: Regime, params: SpectralParams) -> float:
    """Closed-form advantage predicted for the given regime."""
    return _safe_exp(log_asymptotic_advantage(regime, params))


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    xi: float
    K: float
    log_asymptotic_ratio: float | None
    log_exact_ratio: float | None

    @property
    def asymptotic_ratio(self) -> float | None:
        return None if self.log_asymptotic_ratio is None else _safe_exp(self.log_asymptotic_ratio)

    @property
    def exact_ratio(self) -> float | None:
        return None if self.log_exact_ratio is None else _safe_exp(self.log_exact_ratio)

    @property
    def relative_gap(self) -> float | None:
        """exact / asymptotic - 1, computed from the logs."""
        if self.log_asymptotic_ratio is None or self.log_exact_ratio is None:
            return None
        d = self.log_exact_ratio - self.log_asymptotic_ratio
        return math.expm1(d) if d < 709.0 else math.inf


def regime_report(params: SpectralParams, threshold: float = DEFAULT_THRESHOLD) -> RegimeReport:
    K = params.schmidt_number
    regime = regime_of(params.xi, K, threshold)
    exact = log_advantage_ratio(params) if params.xi > 0 else None
    asym = None if regime is Regime.INDETERMINATE else log_asymptotic_advantage(regime, params)
    return RegimeReport(regime, params.xi, K, asym, exact)


def classify_regime(
    xi: float,
    K: float,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    bandwidth: float = 0.01,
    omega0: float = 1.0,
    mu: float = 1.0,
) -> RegimeReport:
    params = SpectralParams.from_schmidt_number(K, bandwidth, omega0=omega0, xi=xi, mu=mu)
    return regime_report(params, threshold)


def thread_count(threads: int | None = None) -> int:
    """Worker count: explicit argument, else QDLIDAR_THREADS, else 1."""
    if threads is None:
        env = os.environ.get("QDLIDAR_THREADS", "").strip()
        threads = int(env) if env else 1
    return max(1, int(threads))


def _pmap(fn, items, threads):
    n = thread_count(threads)
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Figure2Profile:
    """Normalized frequency and bandwidth contributions along a xi sweep.

    ``log_norm_freq``/``log_norm_bw`` use the normalization 8 Z/(4 N_S)^q.
    The ``*_corrected`` pair divides by one more power of 4 N_S, which is the
    normalization under which the frequency curve tends to 1.
    """

    K: float
    xi: np.ndarray
    log_norm_freq: np.ndarray
    log_norm_bw: np.ndarray
    log_norm_freq_corrected: np.ndarray
    log_norm_bw_corrected: np.ndarray

    @staticmethod
    def _exp(a):
        with np.errstate(over="ignore"):
            return np.exp(a)

    @property
    def norm_freq(self):
        return self._exp(self.log_norm_freq)

    @property
    def norm_bw(self):
        return self._exp(self.log_norm_bw)

    @property
    def norm_freq_corrected(self):
        return self._exp(self.log_norm_freq_corrected)

    @property
    def norm_bw_corrected(self):
        return self._exp(self.log_norm_bw_corrected)


def figure2_profile(
    K: float,
    xi_grid,
    *,
    bandwidth: float = 0.01,
    omega0: float = 1.0,
    threads: int | None = None,
) -> Figure2Profile:
    if K < HIGH_SQUEEZING_MIN_K:
        raise DomainError(f"profile needs K >= {HIGH_SQUEEZING_MIN_K}, got {K!r}")
    xi = np.asarray(xi_grid, dtype=float)
    if xi.ndim != 1 or np.any(xi <= 0) or np.any(np.diff(xi) <= 0):
        raise DomainError("xi grid must be positive and strictly ascending")
    expo = math.sqrt((K - 1.0) / (K + 1.0))
    base = SpectralParams.from_schmidt_number(K, bandwidth, omega0=omega0)

    def cell(x):
        s = _series_for(base.replace(xi=float(x)))
        norm = math.log(4.0) + s.n_s
        lf = math.log(8.0) + s.z_omega - expo * norm
        lb = math.log(8.0) + s.z_sigma - expo * norm
        return lf, lb, lf - norm, lb - norm

    rows = np.array(_pmap(cell, list(xi), threads))
    return Figure2Profile(K, xi, rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3])


@dataclass(frozen=True)
class Figure3Grid:
    """2 mu^2 sigma eps / omega0^2 * J_q / N_S^2 on a (xi, K) grid; values[i, j] is (xi[i], K[j])."""

    xi: np.ndarray
    K: np.ndarray
    log_values: np.ndarray

    @property
    def values(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_values)


def log_normalized_qfi(params: SpectralParams) -> float:
    b = qfi_quantum(params)
    return (_LOG2 + 2.0 * math.log(params.mu) + math.log(params.sigma_epsilon / params.omega0 ** 2)
            + b.log_j_q - 2.0 * b.log_n_s)


def figure3_grid(
    xi_grid,
    K_grid,
    *,
    bandwidth: float = 0.01,
    omega0: float = 1.0,
    mu: float = 1.0,
    threads: int | None = None,
) -> Figure3Grid:
    xi = np.asarray(xi_grid, dtype=float)
    Ks = np.asarray(K_grid, dtype=float)
    if np.any(xi <= 0) or np.any(Ks < 1):
        raise DomainError("grid needs xi > 0 and K >= 1")
    cells = [(float(x), float(k)) for x in xi for k in Ks]

    def cell(c):
        x, k = c
        p = SpectralParams.from_schmidt_number(k, bandwidth, omega0=omega0, xi=x, mu=mu)
        return log_normalized_qfi(p)

    vals = np.array(_pmap(cell, cells, threads), dtype=float).reshape(len(xi), len(Ks))
    return Figure3Grid(xi, Ks, vals)
