"""Quantum and classical Fisher information for the Kerr-evolved coherent state.

Likelihood derivatives are analytic throughout: the output amplitudes are
c_n exp(i theta_n) with theta linear in the anharmonicity, so
d c_n = i g_n c_n where g_n = d theta_n / d(anharmonicity).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from . import dynamics as dyn
from .dynamics import CUBIC, QUARTIC, ProtocolParams
from .errors import GridCoverageError, NormError, ZeroInformation
from .fock import NORM_TOL, FockDensity, FockVector

HOMODYNE = "homodyne"
HETERODYNE = "heterodyne"

COVERAGE_TOL = 1e-8
PDF_FLOOR = 1e-300
RATIO_TOL = 1e-6


# --------------------------------------------------------------------------
# quantum Fisher information

def qfi_pure(psi: FockVector, dpsi: FockVector) -> float:
    """4 (<dpsi|dpsi> - |<dpsi|psi>|^2) for a normalised pure state."""
    if abs(psi.norm - 1.0) > NORM_TOL:
        raise NormError(f"state norm {psi.norm!r} is not 1")
    if psi.dim != dpsi.dim:
        raise ValueError("psi and dpsi dims differ")
    overlap = np.vdot(dpsi.amp, psi.amp)
    val = 4.0 * (np.vdot(dpsi.amp, dpsi.amp).real - abs(overlap) ** 2)
    return max(float(val), 0.0)


def qfi_generator(probs: np.ndarray, gen: np.ndarray) -> float:
    """4 Var(g) for a state whose parameter dependence is exp(i * param * g) on the diagonal."""
    probs = np.asarray(probs, dtype=float)
    mean = np.sum(probs * gen) / np.sum(probs)
    return float(4.0 * np.sum(probs * (gen - mean) ** 2) / np.sum(probs))


def qfi_quartic_closed(lam: float, n_p: float) -> float:
    poly = (16 * n_p ** 7 + 216 * n_p ** 6 + 964 * n_p ** 5 + 1640 * n_p ** 4
            + 952 * n_p ** 3 + 126 * n_p ** 2 + n_p)
    return lam ** 8 * poly


def qfi_cubic_closed(lam: float, n_p: float) -> float:
    poly = 9 * n_p ** 5 + 54 * n_p ** 4 + 84 * n_p ** 3 + 30 * n_p ** 2 + n_p
    return 16.0 / 81.0 * lam ** 6 * poly


def qfi_closed(kind: str, lam: float, n_p: float) -> float:
    return qfi_quartic_closed(lam, n_p) if kind == QUARTIC else qfi_cubic_closed(lam, n_p)


def qfi_leading(kind: str, lam: float, n_p: float) -> float:
    """Large-N_p asymptote: 16 lam^8 N^7 (quartic), 16/9 lam^6 N^5 (cubic)."""
    if kind == QUARTIC:
        return 16.0 * lam ** 8 * n_p ** 7
    return 16.0 / 9.0 * lam ** 6 * n_p ** 5


def output_derivative(params: ProtocolParams, kind: str, strict: bool = False):
    psi, xi = dyn.output_state(params, kind, strict)
    return psi, FockVector(1j * xi.dtheta * psi.amp), xi


def qfi_numeric(params: ProtocolParams, kind: str, strict: bool = False) -> float:
    psi, dpsi, _ = output_derivative(params, kind, strict)
    return qfi_pure(psi, dpsi)


# --------------------------------------------------------------------------
# measurement configuration

@dataclass(frozen=True)
class MeasurementConfig:
    """Outcome grids for homodyne (x) and heterodyne (polar eta) readout.

    Grid extents left as ``None`` follow the field amplitude:
    |x| <= sqrt2 |alpha| + 8 and |eta| <= |alpha| + 8.
    """
    scheme: str = HOMODYNE
    phi: float = np.pi / 2
    x_max: Optional[float] = None
    x_points: int = 4001
    eta_radius: Optional[float] = None
    eta_radial: int = 601
    eta_angular: int = 256

    def __post_init__(self):
        if self.scheme not in (HOMODYNE, HETERODYNE):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.x_points < 3 or self.eta_radial < 3 or self.eta_angular < 4:
            raise ValueError("grids need at least a few points")

    def x_grid(self, alpha: complex) -> np.ndarray:
        xm = self.x_max if self.x_max is not None else np.sqrt(2) * abs(alpha) + 8.0
        return np.linspace(-xm, xm, self.x_points)

    def eta_grid(self, alpha: complex) -> Tuple[np.ndarray, np.ndarray]:
        rm = self.eta_radius if self.eta_radius is not None else abs(alpha) + 8.0
        r = np.linspace(0.0, rm, self.eta_radial)
        ang = np.arange(self.eta_angular) * (2 * np.pi / self.eta_angular)
        return r, ang

    def with_phi(self, phi: float) -> "MeasurementConfig":
        return MeasurementConfig(self.scheme, phi, self.x_max, self.x_points,
                                 self.eta_radius, self.eta_radial, self.eta_angular)


# --------------------------------------------------------------------------
# homodyne

def number_wavefunctions(x, dim: int) -> np.ndarray:
    """psi_m(x) for m < dim as a (dim, len(x)) array.

    Uses psi_m = x sqrt(2/m) psi_{m-1} - sqrt((m-1)/m) psi_{m-2}, which stays
    finite where raw Hermite polynomials overflow.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((dim, x.size))
    out[0] = np.pi ** -0.25 * np.exp(-x ** 2 / 2)
    if dim > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for m in range(2, dim):
        out[m] = x * np.sqrt(2.0 / m) * out[m - 1] - np.sqrt((m - 1) / m) * out[m - 2]
    return out


def homodyne_basis(x, dim: int, phi: float) -> np.ndarray:
    """<x_phi|m> = psi_m(x) e^{-i m phi}, shape (len(x), dim)."""
    w = number_wavefunctions(x, dim).T
    return w * np.exp(-1j * phi * np.arange(dim))[None, :]


def homodyne_pdf_state(x, state, phi: float) -> np.ndarray:
    """Quadrature distribution for a pure or mixed single-mode state."""
    if isinstance(state, FockVector):
        amp = homodyne_basis(x, state.dim, phi) @ state.amp
        return np.abs(amp) ** 2
    basis = homodyne_basis(x, state.dim, phi)
    return np.real(np.einsum("gm,mn,gn->g", basis, state.mat, basis.conj()))


def _homodyne_amplitudes(x, params, kind, phi, strict=False):
    psi, xi = dyn.output_state(params, kind, strict)
    basis = homodyne_basis(x, psi.dim, phi)
    gen = xi.dtheta - np.sum(psi.probabilities() * xi.dtheta)  # global phase is invisible
    s = basis @ psi.amp
    ds = basis @ (1j * gen * psi.amp)
    return s, ds


def homodyne_pdf(x, config: MeasurementConfig, params: ProtocolParams, kind: str,
                 strict: bool = False):
    s, _ = _homodyne_amplitudes(x, params, kind, config.phi, strict)
    p = np.abs(s) ** 2
    return float(p[0]) if np.ndim(x) == 0 else p


def homodyne_pdf_dtheta(x, config: MeasurementConfig, params: ProtocolParams, kind: str,
                        strict: bool = False):
    """Analytic derivative of the homodyne pdf with respect to gamma (or delta)."""
    s, ds = _homodyne_amplitudes(x, params, kind, config.phi, strict)
    dp = 2.0 * np.real(ds * s.conj())
    return float(dp[0]) if np.ndim(x) == 0 else dp


def _fisher_density(p: np.ndarray, dp: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    ok = p > PDF_FLOOR
    out[ok] = dp[ok] ** 2 / p[ok]
    return out


def fisher_homodyne(config: MeasurementConfig, params: ProtocolParams, kind: str,
                    strict: bool = False) -> float:
    x = config.x_grid(params.alpha)
    s, ds = _homodyne_amplitudes(x, params, kind, config.phi, strict)
    p = np.abs(s) ** 2
    mass = simpson(p, x=x)
    if mass < 1.0 - COVERAGE_TOL:
        raise GridCoverageError(f"homodyne grid holds only {mass:.12f} of the probability")
    dp = 2.0 * np.real(ds * s.conj())
    return float(simpson(_fisher_density(p, dp), x=x))


def _golden_max(f, lo, hi, tol=1e-10, max_iter=200):
    """Golden-section maximisation of a unimodal f on [lo, hi]."""
    r = (np.sqrt(5.0) - 1) / 2
    a, b = lo, hi
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while abs(b - a) > tol * max(1.0, abs(a) + abs(b)) and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = f(d)
        it += 1
    if fc >= fd:
        return c, fc, it
    return d, fd, it


def optimize_phase(params: ProtocolParams, kind: str,
                   phi_grid: Optional[Sequence[float]] = None,
                   config: Optional[MeasurementConfig] = None,
                   strict: bool = False) -> Tuple[float, float]:
    """Best homodyne phase: coarse scan over [0, pi) then golden-section refinement."""
    config = config or MeasurementConfig()
    if phi_grid is None:
        phi_grid = np.linspace(0.0, np.pi, 36, endpoint=False)
    phi_grid = np.asarray(phi_grid, dtype=float)
    x = config.x_grid(params.alpha)
    psi, xi = dyn.output_state(params, kind, strict)
    w = number_wavefunctions(x, psi.dim).T
    gen = xi.dtheta - np.sum(psi.probabilities() * xi.dtheta)
    m = np.arange(psi.dim)

    def fi(phi):
        rot = np.exp(-1j * phi * m)
        s = w @ (rot * psi.amp)
        ds = w @ (rot * 1j * gen * psi.amp)
        p = np.abs(s) ** 2
        return float(simpson(_fisher_density(p, 2.0 * np.real(ds * s.conj())), x=x))

    vals = np.array([fi(phi) for phi in phi_grid])
    k = int(np.argmax(vals))  # first maximum wins ties
    if phi_grid.size < 2:
        return float(phi_grid[k]), float(vals[k])
    step = phi_grid[1] - phi_grid[0]
    phi_star, fi_star, _ = _golden_max(fi, phi_grid[k] - step, phi_grid[k] + step)
    if fi_star < vals[k]:
        phi_star, fi_star = phi_grid[k], vals[k]
    return float(phi_star % np.pi if phi_star < 0 else phi_star), float(fi_star)


# --------------------------------------------------------------------------
# heterodyne

def coherent_overlaps(eta, dim: int) -> np.ndarray:
    """<eta|m> = e^{-|eta|^2/2} conj(eta)^m / sqrt(m!), shape (len(eta), dim)."""
    eta = np.atleast_1d(np.asarray(eta, dtype=complex))
    out = np.empty((eta.size, dim), dtype=complex)
    out[:, 0] = np.exp(-np.abs(eta) ** 2 / 2)
    ec = eta.conj()
    for m in range(1, dim):
        out[:, m] = out[:, m - 1] * ec / np.sqrt(m)
    return out


def _heterodyne_amplitudes(eta, params, kind, strict=False):
    psi, xi = dyn.output_state(params, kind, strict)
    basis = coherent_overlaps(eta, psi.dim)
    gen = xi.dtheta - np.sum(psi.probabilities() * xi.dtheta)
    return basis @ psi.amp, basis @ (1j * gen * psi.amp)


def heterodyne_pdf(eta, params: ProtocolParams, kind: str, strict: bool = False):
    """Husimi density |<eta|psi>|^2, normalised as (1/pi) int p d^2 eta = 1."""
    s, _ = _heterodyne_amplitudes(eta, params, kind, strict)
    p = np.abs(s) ** 2
    return float(p[0]) if np.ndim(eta) == 0 else p


def heterodyne_pdf_dtheta(eta, params: ProtocolParams, kind: str, strict: bool = False):
    s, ds = _heterodyne_amplitudes(eta, params, kind, strict)
    dp = 2.0 * np.real(ds * s.conj())
    return float(dp[0]) if np.ndim(eta) == 0 else dp


def _polar_integral(values: np.ndarray, r: np.ndarray, n_ang: int) -> float:
    """(1/pi) int f d^2 eta for f sampled on an (r, angle) grid."""
    ring = values.reshape(r.size, n_ang).mean(axis=1) * 2 * np.pi
    return float(simpson(ring * r, x=r) / np.pi)


def heterodyne_mass(params: ProtocolParams, kind: str,
                    config: Optional[MeasurementConfig] = None) -> float:
    config = config or MeasurementConfig(scheme=HETERODYNE)
    r, ang = config.eta_grid(params.alpha)
    eta = (r[:, None] * np.exp(1j * ang)[None, :]).ravel()
    return _polar_integral(heterodyne_pdf(eta, params, kind), r, ang.size)


def fisher_heterodyne(params: ProtocolParams, kind: str,
                      config: Optional[MeasurementConfig] = None,
                      strict: bool = False) -> float:
    config = config or MeasurementConfig(scheme=HETERODYNE)
    r, ang = config.eta_grid(params.alpha)
    eta = (r[:, None] * np.exp(1j * ang)[None, :]).ravel()
    s, ds = _heterodyne_amplitudes(eta, params, kind, strict)
    p = np.abs(s) ** 2
    mass = _polar_integral(p, r, ang.size)
    if mass < 1.0 - COVERAGE_TOL:
        raise GridCoverageError(f"heterodyne grid holds only {mass:.12f} of the probability")
    dp = 2.0 * np.real(ds * s.conj())
    return _polar_integral(_fisher_density(p, dp), r, ang.size)


# --------------------------------------------------------------------------
# bounds

def cramer_rao(value: float, M: int) -> float:
    """Variance bound 1/(M F)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if not value > 0:
        raise ZeroInformation("Fisher information must be positive")
    return 1.0 / (M * value)


def snr_bound(value: float, qfi: float, M: int) -> float:
    """Upper bound zeta^2 M Q on the signal-to-noise ratio."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return value ** 2 * M * qfi


@dataclass(frozen=True)
class FisherReport:
    parameter_kind: str
    qfi: float
    fi: float
    ratio: float
    crb_var: float
    snr_bound: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ratio > 1.0 + RATIO_TOL:
            raise ValueError(f"classical FI exceeds QFI (ratio {self.ratio})")


def fisher_report(params: ProtocolParams, kind: str,
                  config: Optional[MeasurementConfig] = None, M: int = 1,
                  strict: bool = False) -> FisherReport:
    config = config or MeasurementConfig()
    qfi = qfi_numeric(params, kind, strict)
    if config.scheme == HOMODYNE:
        fi = fisher_homodyne(config, params, kind, strict)
    else:
        fi = fisher_heterodyne(params, kind, config, strict)
    ratio = fi / qfi if qfi > 0 else 0.0
    crb = cramer_rao(fi, M) if fi > 0 else float("inf")
    meta = {"params": asdict(params), "config": asdict(config), "M": M}
    meta["params"]["alpha"] = [params.alpha.real, params.alpha.imag]
    return FisherReport(kind, qfi, fi, ratio, crb,
                        snr_bound(params.strength(kind), qfi, M), meta)
