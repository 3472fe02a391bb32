"""Gaussian-state kernel in the ladder basis and the photon-loss pipeline.

Conventions
-----------
Operators are ordered R = (a_1, a_1^dag, a_2, a_2^dag, ...).  The covariance
is Sigma[n, m] = <{dR_m, dR_n^dag}>, so the vacuum has Sigma = I and the
symplectic form is diag(1, -1, 1, -1, ...).  A transform (G, b) acts as
d -> G d + b, Sigma -> G Sigma G^dag.

QFI evaluation
--------------
The QFI is the kappa -> 1 limit of

    1/2 vec(dSigma)^dag M_kappa^-1 vec(dSigma) + 2 dd^dag Sigma^-1 dd,
    M_kappa = kappa conj(Sigma) (x) Sigma - Form (x) Form.

Inverting M_kappa directly is hopeless once modes are pure: M_1 has a large
null space and the dense system is conditioned around 1e18.  Instead the
state is moved to real quadratures and brought to Williamson normal form
V = S diag(nu) S^T.  There the system decouples into 4x4 blocks, one per mode
pair (k, l), each equal to nu_k nu_l I - w (x) w with w the 2x2 symplectic
unit.  Since (w (x) w)^2 = I the block inverts with two projectors, with
denominators nu_k nu_l - 1 and nu_k nu_l + 1.  The limit drops the first
component wherever nu_k nu_l = 1.  For a physical family that component
vanishes identically; its size is reported as ``null_residual``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, NumericalError
from .spectral import SpectralParams

SYMPLECTIC_TOL = 1e-10
PHYSICAL_TOL = 1e-10
NULL_PAIR_TOL = 1e-7
LOSS_MODES = ("a0", "a1", "a2", "b0", "b1", "c0", "c1", "c2")
SIGNAL_IDLER_MODES = LOSS_MODES[:5]

_W = np.array([[0.0, 1.0], [-1.0, 0.0]])
_WW = np.kron(_W, _W)
_P_PLUS = 0.5 * (np.eye(4) + _WW)
_P_MINUS = 0.5 * (np.eye(4) - _WW)


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.diag(np.tile([1.0, -1.0], n_modes))


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    if not np.iscomplexobj(a):
        a = a.astype(float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianState:
    modes: tuple[str, ...]
    d: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        modes = tuple(self.modes)
        if len(set(modes)) != len(modes):
            raise DomainError("mode labels must be unique")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "d", _frozen(self.d))
        object.__setattr__(self, "sigma", _frozen(self.sigma))
        n = 2 * len(modes)
        if self.d.shape != (n,) or self.sigma.shape != (n, n):
            raise DomainError(f"expected d of shape ({n},) and sigma of shape ({n}, {n})")

    @classmethod
    def vacuum(cls, modes: Sequence[str]) -> "GaussianState":
        n = 2 * len(modes)
        return cls(tuple(modes), np.zeros(n), np.eye(n))

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def index(self, label: str) -> int:
        """Row of the annihilation operator of ``label``; the creation operator follows it."""
        try:
            return 2 * self.modes.index(label)
        except ValueError:
            raise DomainError(f"unknown mode {label!r}") from None

    def is_physical(self, tol: float = PHYSICAL_TOL) -> bool:
        return min_physical_eigenvalue(self.sigma) >= -tol * max(1.0, _scale(self.sigma))

    def apply(self, t: "SymplecticTransform") -> "GaussianState":
        if t.modes != self.modes:
            raise DomainError("transform and state are defined on different mode lists")
        G = t.G
        return GaussianState(self.modes, G @ self.d + t.b, G @ self.sigma @ G.conj().T)

    def to_json(self) -> str:
        return dump_matrices(self.modes, d=self.d, sigma=self.sigma)


def _scale(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


def min_physical_eigenvalue(sigma: np.ndarray) -> float:
    n = sigma.shape[0] // 2
    h = sigma + symplectic_form(n)
    return float(np.min(np.linalg.eigvalsh(0.5 * (h + h.conj().T))))


@dataclass(frozen=True)
class SymplecticTransform:
    modes: tuple[str, ...]
    G: np.ndarray
    b: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        n = 2 * len(self.modes)
        b = np.zeros(n) if self.b is None else self.b
        object.__setattr__(self, "G", _frozen(self.G))
        object.__setattr__(self, "b", _frozen(b))
        if self.G.shape != (n, n):
            raise DomainError(f"expected G of shape ({n}, {n})")
        err = symplectic_error(self.G)
        if err > SYMPLECTIC_TOL * max(1.0, _scale(self.G) ** 2):
            raise DomainError(f"matrix is not symplectic (error {err:.3e})")

    def then(self, other: "SymplecticTransform") -> "SymplecticTransform":
        """Apply self first, then other."""
        if other.modes != self.modes:
            raise DomainError("transforms act on different mode lists")
        return SymplecticTransform(self.modes, other.G @ self.G, other.G @ self.b + other.b)

    @classmethod
    def identity(cls, modes: Sequence[str]) -> "SymplecticTransform":
        return cls(tuple(modes), np.eye(2 * len(modes)))


def symplectic_error(G: np.ndarray) -> float:
    F = symplectic_form(G.shape[0] // 2)
    return float(np.max(np.abs(G @ F @ G.conj().T - F)))


def _embed(block: np.ndarray, targets: Sequence[str], modes: Sequence[str], base: float = 1.0) -> np.ndarray:
    modes = tuple(modes)
    idx = []
    for t in targets:
        if t not in modes:
            raise DomainError(f"unknown mode {t!r}")
        k = 2 * modes.index(t)
        idx += [k, k + 1]
    G = base * np.eye(2 * len(modes), dtype=block.dtype)
    G[np.ix_(idx, idx)] = block
    return G


def two_mode_squeezer(r: float, mode_pair: tuple[str, str], modes: Sequence[str]) -> SymplecticTransform:
    """a -> cosh r a - sinh r b^dag, b -> cosh r b - sinh r a^dag."""
    if not math.isfinite(r):
        raise DomainError("squeezing must be finite")
    c, s = math.cosh(r), math.sinh(r)
    block = np.array([
        [c, 0, 0, -s],
        [0, c, -s, 0],
        [0, -s, c, 0],
        [-s, 0, 0, c],
    ])
    return SymplecticTransform(tuple(modes), _embed(block, mode_pair, modes))


def beam_splitter(eta: float, mode_pair: tuple[str, str], modes: Sequence[str]) -> SymplecticTransform:
    """Transmissivity eta between the first mode and the environment mode."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"transmissivity must lie in [0, 1], got {eta!r}")
    t, u = math.sqrt(eta), math.sqrt(1.0 - eta)
    block = np.array([
        [t, 0, u, 0],
        [0, t, 0, u],
        [-u, 0, t, 0],
        [0, -u, 0, t],
    ])
    return SymplecticTransform(tuple(modes), _embed(block, mode_pair, modes))


def partial_trace(state: GaussianState, keep: Sequence[str]) -> GaussianState:
    keep = tuple(keep)
    if not keep:
        raise DomainError("must keep at least one mode")
    idx = []
    for k in keep:
        i = state.index(k)
        idx += [i, i + 1]
    return GaussianState(keep, state.d[idx], state.sigma[np.ix_(idx, idx)])


# -- QFI ---------------------------------------------------------------------

def _ladder_from_quadrature(n_modes: int) -> np.ndarray:
    """U with R = U Q for Q = (x_1, p_1, ...), a = (x + i p)/sqrt(2)."""
    blk = np.array([[1.0, 1.0j], [1.0, -1.0j]]) / math.sqrt(2.0)
    return np.kron(np.eye(n_modes), blk)


def _to_quadrature(sigma: np.ndarray) -> np.ndarray:
    U = _ladder_from_quadrature(sigma.shape[0] // 2)
    v = U.T @ sigma @ U.conj()
    if np.max(np.abs(v.imag)) > 1e-9 * max(1.0, _scale(sigma)):
        raise DomainError("covariance lacks the ladder-basis conjugation symmetry")
    v = v.real
    return 0.5 * (v + v.T)


def _from_quadrature(x: np.ndarray) -> np.ndarray:
    U = _ladder_from_quadrature(x.shape[0] // 2)
    return U.conj() @ x @ U.T


@dataclass(frozen=True)
class WilliamsonForm:
    """V = S diag(nu_1, nu_1, nu_2, nu_2, ...) S^T with S real symplectic."""

    nu: np.ndarray
    S: np.ndarray


def williamson(v: np.ndarray) -> WilliamsonForm:
    n = v.shape[0] // 2
    lam, vec = np.linalg.eigh(v)
    if lam[0] <= 0:
        raise DomainError("covariance is not positive definite")
    vh = (vec * np.sqrt(lam)) @ vec.T
    vhi = (vec / np.sqrt(lam)) @ vec.T
    omega = np.kron(np.eye(n), _W)
    m = vhi @ omega @ vhi
    # i*m is Hermitian with eigenvalues +-1/nu; the positive half gives the frame
    w, e = np.linalg.eigh(1j * 0.5 * (m - m.T))
    w, e = w[n:], e[:, n:]
    cols = np.empty((2 * n, 2 * n))
    cols[:, 0::2] = math.sqrt(2.0) * e.imag
    cols[:, 1::2] = math.sqrt(2.0) * e.real
    # columns ordered (y, x) put each 2x2 block of cols^T m cols in the form w/nu
    nu = 1.0 / w
    S = vh @ cols @ np.diag(np.repeat(np.sqrt(w), 2))
    err = float(np.max(np.abs(S @ omega @ S.T - omega)))
    if err > 1e-6 * max(1.0, float(np.max(nu))):
        raise NumericalError(f"Williamson frame is not symplectic (error {err:.3e})")
    return WilliamsonForm(nu, S)


@dataclass(frozen=True)
class QfiResult:
    value: float
    quadratic_part: float
    displacement_part: float
    null_residual: float
    symplectic_eigenvalues: np.ndarray
    A: np.ndarray


def _regularized_solution(sigma: np.ndarray, dsigma: np.ndarray, null_tol: float):
    """X solving Sigma X Sigma - Form X Form = dSigma with null components dropped."""
    v = _to_quadrature(sigma)
    dv = _to_quadrature(dsigma)
    wf = williamson(v)
    n = len(wf.nu)
    S_inv = np.linalg.inv(wf.S)
    P = S_inv @ dv @ S_inv.T
    Y = np.zeros_like(P)
    null = 0.0
    scale = max(_scale(P), 1e-300)
    for k in range(n):
        for l in range(n):
            p = P[2 * k:2 * k + 2, 2 * l:2 * l + 2].reshape(-1)
            prod = wf.nu[k] * wf.nu[l]
            plus = _P_PLUS @ p
            y = _P_MINUS @ p / (prod + 1.0)
            if prod - 1.0 > null_tol:
                y = y + plus / (prod - 1.0)
            else:
                null = max(null, float(np.max(np.abs(plus))) / scale)
            Y[2 * k:2 * k + 2, 2 * l:2 * l + 2] = y.reshape(2, 2)
    X = S_inv.T @ Y @ S_inv
    return X, dv, wf, null


def gaussian_qfi_from_derivatives(
    sigma: np.ndarray,
    dsigma: np.ndarray,
    d_grad: np.ndarray | None = None,
    *,
    null_tol: float = NULL_PAIR_TOL,
) -> QfiResult:
    """QFI from the covariance, its derivative and the first-moment derivative."""
    sigma = np.asarray(sigma)
    dsigma = np.asarray(dsigma)
    if min_physical_eigenvalue(sigma) < -PHYSICAL_TOL * max(1.0, _scale(sigma)):
        raise DomainError("covariance violates the uncertainty relation")
    X, dv, wf, null = _regularized_solution(sigma, dsigma, null_tol)
    quad = 0.5 * float(np.sum(dv * X))
    lin = 0.0
    if d_grad is not None:
        dd = np.asarray(d_grad)
        lin = 2.0 * float(np.real(dd.conj() @ np.linalg.solve(sigma, dd)))
    if null > 1e-6:
        warnings.warn(
            f"derivative has weight {null:.2e} on pure-mode pairs; QFI may be discontinuous here",
            RuntimeWarning,
            stacklevel=2,
        )
    return QfiResult(quad + lin, quad, lin, null, wf.nu, _from_quadrature(X))


def gaussian_qfi(
    sigma_of: Callable[[float], np.ndarray],
    d_of: Callable[[float], np.ndarray] | None,
    theta0: float,
    *,
    step: float = 1e-6,
    null_tol: float = NULL_PAIR_TOL,
) -> QfiResult:
    """QFI of a parametrized family, with central-difference derivatives."""
    h = step * max(1.0, abs(theta0))
    sigma = np.asarray(sigma_of(theta0))
    dsigma = (np.asarray(sigma_of(theta0 + h)) - np.asarray(sigma_of(theta0 - h))) / (2.0 * h)
    dd = None
    if d_of is not None:
        dd = (np.asarray(d_of(theta0 + h)) - np.asarray(d_of(theta0 - h))) / (2.0 * h)
    return gaussian_qfi_from_derivatives(sigma, dsigma, dd, null_tol=null_tol)


# -- photon-loss pipeline ---------------------------------------------------------

@dataclass(frozen=True)
class LossScenario:
    """Two populated Schmidt pairs sent through a lossy round trip."""

    eta: float
    mu0: float
    n_s0: float
    n_s1: float
    params: SpectralParams

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"transmissivity must lie in [0, 1], got {self.eta!r}")
        if not self.mu0 > 0:
            raise DomainError(f"mu0 must be positive, got {self.mu0!r}")
        if not self.n_s0 >= self.n_s1 >= 0:
            raise DomainError("need n_s0 >= n_s1 >= 0")

    @property
    def coupling(self) -> float:
        """omega0 / (2 mu0 sqrt(sigma eps)): first-order mixing per unit delta."""
        p = self.params
        return p.omega0 / (2.0 * self.mu0 * math.sqrt(p.sigma_epsilon))

    @property
    def prefactor(self) -> float:
        p = self.params
        return p.omega0 ** 2 / (self.mu0 ** 2 * p.sigma_epsilon)


def _shift_generator(coupling: float) -> np.ndarray:
    """Generator of the mode mixing among (a0, a1, a2) per unit delta."""
    g = coupling
    r2 = math.sqrt(2.0) * g
    A = np.zeros((6, 6))
    A[0, 2] = A[1, 3] = g
    A[2, 0] = A[3, 1] = -g
    A[2, 4] = A[3, 5] = r2
    A[4, 2] = A[5, 3] = -r2
    return A


def basis_shift_lambda(delta: float, scenario: LossScenario, modes: Sequence[str] = LOSS_MODES) -> SymplecticTransform:
    """Moment transform for re-expanding the Doppler-shifted modes in the mu0 basis.

    Built as the exponential of the first-order mixing generator, so it is
    exactly symplectic and agrees with the linear expansion to O(delta).
    """
    if abs(delta) > 1e-2 * scenario.mu0:
        warnings.warn("basis shift is only first-order accurate; |delta| is large",
                      RuntimeWarning, stacklevel=2)
    block = expm(delta * _shift_generator(scenario.coupling))
    return SymplecticTransform(tuple(modes), _embed(block, ("a0", "a1", "a2"), modes))


def _prepared_state(scenario: LossScenario) -> GaussianState:
    modes = LOSS_MODES
    state = GaussianState.vacuum(modes)
    for n, photons in ((0, scenario.n_s0), (1, scenario.n_s1)):
        r = math.asinh(math.sqrt(photons))
        state = state.apply(two_mode_squeezer(r, (f"a{n}", f"b{n}"), modes))
    return state


def _loss(eta: float) -> SymplecticTransform:
    t = SymplecticTransform.identity(LOSS_MODES)
    for n in range(3):
        t = t.then(beam_splitter(eta, (f"a{n}", f"c{n}"), LOSS_MODES))
    return t


def lossy_state(scenario: LossScenario, delta: float = 0.0) -> GaussianState:
    """Signal and idler after the shift and the round trip, environment traced out."""
    state = _prepared_state(scenario)
    state = state.apply(basis_shift_lambda(delta, scenario))
    state = state.apply(_loss(scenario.eta))
    return partial_trace(state, SIGNAL_IDLER_MODES)


def lossy_state_derivative(scenario: LossScenario) -> np.ndarray:
    """d Sigma / d delta at delta = 0, from the generator (no differencing)."""
    prepared = _prepared_state(scenario)
    gen = _embed(_shift_generator(scenario.coupling), ("a0", "a1", "a2"), LOSS_MODES, base=0.0)
    sig = prepared.sigma
    dsig = gen @ sig + sig @ gen.T
    B = _loss(scenario.eta).G
    full = B @ dsig @ B.T
    keep = list(range(2 * len(SIGNAL_IDLER_MODES)))
    return full[np.ix_(keep, keep)]


def lossy_qfi_pipeline(scenario: LossScenario) -> float:
    """QFI in mu at mu0 from the full covariance construction."""
    if scenario.n_s0 + scenario.n_s1 == 0 or scenario.eta == 0.0:
        return 0.0
    sigma = lossy_state(scenario).sigma
    dsigma = lossy_state_derivative(scenario)
    return gaussian_qfi_from_derivatives(sigma, dsigma).value


def _lossy_qfi_per_eta(scenario: LossScenario) -> float:
    n0, n1, eta = scenario.n_s0, scenario.n_s1, scenario.eta
    den = 2.0 * (1.0 - eta) * n0 * n1 + n0 + n1
    if den == 0.0:
        return 0.0
    num = n0 ** 2 * (2.0 * n1 + 1.0) + 2.0 * n0 * n1 * ((3.0 - 2.0 * eta) * n1 + 2.0) + 3.0 * n1 ** 2
    return scenario.prefactor * num / den


def lossy_qfi_closed_form(scenario: LossScenario) -> float:
    return scenario.eta * _lossy_qfi_per_eta(scenario)


@dataclass(frozen=True)
class LossAdvantage:
    exact: float
    asymptote: float | None
    j_q: float
    j_c: float


def _classical_per_eta(scenario: LossScenario) -> float:
    n0, n1 = scenario.n_s0, scenario.n_s1
    p = scenario.params
    n_s = n0 + n1
    if n_s == 0.0:
        return 0.0
    dt2 = (2.0 / p.sigma_epsilon) * (n1 / n_s + 0.5)
    return p.omega0 ** 2 * n_s * dt2 / scenario.mu0 ** 2


def lossy_classical_qfi(scenario: LossScenario) -> float:
    """Coherent benchmark with the probe's photon number and duration, attenuated by eta."""
    return scenario.eta * _classical_per_eta(scenario)


def lossy_advantage(scenario: LossScenario) -> LossAdvantage:
    """Exact J_q/J_c and the 1/(1 - eta) asymptote.

    Both QFIs carry an overall factor eta, which is cancelled before
    dividing; at eta = 0 the ratio is therefore the eta -> 0+ limit.
    """
    per_c = _classical_per_eta(scenario)
    exact = _lossy_qfi_per_eta(scenario) / per_c if per_c > 0 else math.nan
    asym = None if scenario.eta >= 1.0 else 1.0 / (1.0 - scenario.eta)
    return LossAdvantage(exact, asym, lossy_qfi_closed_form(scenario), lossy_classical_qfi(scenario))


@dataclass(frozen=True)
class SldDescription:
    """L = dR^dag A dR - tr(Sigma A)/2 + 2 dR^dag Sigma^-1 dd."""

    modes: tuple[str, ...]
    A: np.ndarray
    constant: float
    linear: np.ndarray

    def pair_coefficient(self, x: str, y: str) -> complex:
        """Coefficient of the operator product XY, where labels like 'a0' or 'b1^' (dagger) name operators."""
        ix, iy = self._op(x), self._op(y)
        return complex(self.A[ix ^ 1, iy] + self.A[iy ^ 1, ix])

    def _op(self, label: str) -> int:
        dag = label.endswith("^")
        name = label[:-1] if dag else label
        if name not in self.modes:
            raise DomainError(f"unknown mode {name!r}")
        return 2 * self.modes.index(name) + (1 if dag else 0)

    def mean(self, sigma: np.ndarray) -> float:
        """<L> for a state with this covariance; zero at the true parameter."""
        n = len(self.modes)
        second = 0.5 * (sigma - symplectic_form(n))
        # <dR_i^dag dR_j> = (Sigma_ij - Form_ij)/2
        return float(np.real(np.sum(self.A * second))) + self.constant


def sld_operator_from_derivatives(
    modes: Sequence[str],
    sigma: np.ndarray,
    dsigma: np.ndarray,
    d_grad: np.ndarray | None = None,
    *,
    null_tol: float = NULL_PAIR_TOL,
) -> SldDescription:
    X, _, _, _ = _regularized_solution(np.asarray(sigma), np.asarray(dsigma), null_tol)
    A = _from_quadrature(X)
    const = -0.5 * float(np.real(np.trace(np.asarray(sigma) @ A)))
    lin = np.zeros(sigma.shape[0], dtype=complex)
    if d_grad is not None:
        lin = 2.0 * np.linalg.solve(sigma, np.asarray(d_grad))
    return SldDescription(tuple(modes), A, const, lin)


def sld_operator(scenario: LossScenario) -> SldDescription:
    sigma = lossy_state(scenario).sigma
    return sld_operator_from_derivatives(SIGNAL_IDLER_MODES, sigma, lossy_state_derivative(scenario))


def dump_matrices(modes: Sequence[str], **arrays: np.ndarray) -> str:
    """JSON with the operator order and row-major real/imaginary parts."""
    order = []
    for m in modes:
        order += [m, m + "^"]
    out = {"operator_order": order}
    for name, a in arrays.items():
        a = np.asarray(a)
        out[name] = {"real": np.real(a).tolist(), "imag": np.imag(a).tolist()}
    return json.dumps(out, indent=1)
