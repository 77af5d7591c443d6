"""Closed-form first-order dynamics of the four-pulse loop.

Covers the anharmonic mechanical frequency, first-order Heisenberg ladder
operators for quartic and cubic anharmonicity, the diagonal effective Kerr
map acting on the field, mean-field phases and the pulse-loss model.

Units: time in 1/omega_m, every other quantity dimensionless.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import PerturbationError, PerturbationWarning
from .fock import FockDensity, FockVector, OperatorMatrix, annihilation, choose_dim, coherent_vector

QUARTIC = "quartic"
CUBIC = "cubic"
HARMONIC = "harmonic"
KINDS = (QUARTIC, CUBIC)

# every validity flag compares a small quantity against this bound
PERTURBATIVE_BOUND = 0.1


@dataclass(frozen=True)
class ProtocolParams:
    """Physical parameters of one protocol run.

    ``lam`` is the rescaled coupling g/k, ``gamma``/``delta`` the quartic and
    cubic anharmonicities, ``nbar`` the initial thermal occupation, ``alpha``
    the coherent field amplitude and ``epsilon`` the loss per pulse.
    ``amp_sq`` overrides the oscillation amplitude |A|^2 entering the
    frequency shift; by default |A| = lam * N_p.
    """
    lam: float
    gamma: float = 0.0
    delta: float = 0.0
    nbar: float = 0.0
    alpha: complex = 1.0
    omega_m: float = 1.0
    epsilon: float = 0.0
    dim_c: Optional[int] = None
    dim_m: Optional[int] = None
    amp_sq: Optional[float] = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.nbar < 0:
            raise ValueError("nbar must be non-negative")
        if self.omega_m <= 0:
            raise ValueError("omega_m must be positive")
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        object.__setattr__(self, "alpha", complex(self.alpha))

    @property
    def n_photons(self) -> float:
        return abs(self.alpha) ** 2

    @property
    def field_dim(self) -> int:
        return self.dim_c if self.dim_c is not None else choose_dim(self.alpha)

    @property
    def loop_amp_sq(self) -> float:
        if self.amp_sq is not None:
            return self.amp_sq
        return (self.lam * self.n_photons) ** 2

    def strength(self, kind: str) -> float:
        if kind == QUARTIC:
            return self.gamma
        if kind == CUBIC:
            return self.delta
        if kind == HARMONIC:
            return 0.0
        raise ValueError(f"unknown anharmonicity kind {kind!r}")

    def with_strength(self, kind: str, value: float) -> "ProtocolParams":
        if kind == QUARTIC:
            return replace(self, gamma=value)
        if kind == CUBIC:
            return replace(self, delta=value)
        raise ValueError(f"unknown anharmonicity kind {kind!r}")


def validity_flags(params: ProtocolParams) -> Dict[str, float]:
    """Small quantities that must stay well below one for the first-order map."""
    lnp = params.lam * params.n_photons
    return {
        "quartic_amplitude": abs(params.gamma) * lnp ** 2,
        "quartic_phase": abs(params.gamma) * params.lam ** 4 * params.n_photons ** 3,
        "cubic_amplitude": abs(params.delta) * lnp,
        "cubic_phase": abs(params.delta) * params.lam ** 3 * params.n_photons ** 2,
        "thermal_dominance": lnp ** 2 / max(params.nbar, 1e-300),
        "loss_condition": params.epsilon * params.nbar / max(params.n_photons, 1e-300),
    }


def check_validity(params: ProtocolParams, kind: str, strict: bool = False,
                   phase: bool = False) -> Dict[str, float]:
    """Warn (or raise when strict) if the perturbative conditions fail."""
    flags = validity_flags(params)
    bad = []
    if kind == QUARTIC:
        keys = ["quartic_amplitude"] + (["quartic_phase"] if phase else [])
    elif kind == CUBIC:
        keys = ["cubic_amplitude"] + (["cubic_phase"] if phase else [])
    else:
        keys = []
    bad = [k for k in keys if flags[k] >= PERTURBATIVE_BOUND]
    if params.nbar > 0 and flags["thermal_dominance"] <= 1.0 / PERTURBATIVE_BOUND:
        bad.append("thermal_dominance")
    if bad:
        msg = "perturbative conditions violated: " + ", ".join(
            f"{k}={flags[k]:.3g}" for k in bad)
        if strict:
            raise PerturbationError(msg)
        warnings.warn(msg, PerturbationWarning, stacklevel=3)
    return flags


def anharmonic_frequency(omega_m: float, gamma: float, amp_sq: float,
                         strict: bool = False) -> float:
    """omega = omega_m (1 + 3/8 gamma (2 + |A|^2))."""
    if abs(gamma) * amp_sq >= PERTURBATIVE_BOUND:
        msg = f"gamma*|A|^2 = {abs(gamma) * amp_sq:.3g} is not perturbative"
        if strict:
            raise PerturbationError(msg)
        warnings.warn(msg, PerturbationWarning, stacklevel=2)
    return omega_m * (1.0 + 0.375 * gamma * (2.0 + amp_sq))


def loop_frequency(params: ProtocolParams, kind: str, strict: bool = False) -> float:
    """Mechanical frequency used to time the loop (cubic: unshifted)."""
    if kind == QUARTIC:
        return anharmonic_frequency(params.omega_m, params.gamma, params.loop_amp_sq, strict)
    return params.omega_m


# --------------------------------------------------------------------------
# first-order Heisenberg operators

def _ladder(dim: int):
    b = annihilation(dim)
    return b, b.conj().T


def quadrature_correction_quartic(dim_m: int) -> OperatorMatrix:
    """Anti-hermitian deformation b^3 - b+^3 - 3b+ + 3b - 3b+^2 b + 3b+ b^2."""
    if dim_m < 4:
        raise ValueError("dim_m must be >= 4")
    b, bd = _ladder(dim_m)
    d = (b @ b @ b - bd @ bd @ bd - 3 * bd + 3 * b
         - 3 * bd @ bd @ b + 3 * bd @ b @ b)
    return OperatorMatrix(d)


def heisenberg_b_quartic(t: float, params: ProtocolParams, dim: Optional[int] = None,
                         strict: bool = False) -> OperatorMatrix:
    """b(t) to first order in gamma, rotating at the shifted frequency."""
    dim = dim or params.dim_m
    w = anharmonic_frequency(params.omega_m, params.gamma, params.loop_amp_sq, strict)
    b, bd = _ladder(dim)
    e = lambda k: np.exp(1j * k * w * t)
    one = np.eye(dim)
    corr = ((e(-1) - e(3)) * (bd @ bd @ bd) / 4
            + (e(-3) - e(-1)) * (b @ b @ b) / 2
            + (e(-1) - e(1)) * 1.5 * bd @ (one + bd @ b))
    return OperatorMatrix(b * e(-1) + params.gamma / 4 * corr)


def heisenberg_b_cubic(t: float, params: ProtocolParams, dim: Optional[int] = None,
                       strict: bool = False) -> OperatorMatrix:
    """b(t) to first order in delta; the frequency is not shifted at this order."""
    dim = dim or params.dim_m
    if abs(params.delta) * params.lam * params.n_photons >= PERTURBATIVE_BOUND:
        msg = "delta*lam*N_p is not perturbative"
        if strict:
            raise PerturbationError(msg)
        warnings.warn(msg, PerturbationWarning, stacklevel=2)
    w = params.omega_m
    b, bd = _ladder(dim)
    e = lambda k: np.exp(1j * k * w * t)
    one = np.eye(dim)
    corr = ((e(-1) - 1) * (2 * bd @ b + one)
            + (e(-2) - e(-1)) * (b @ b)
            + (e(-1) - e(2)) * (bd @ bd) / 3)
    return OperatorMatrix(b * e(-1) + params.delta / 2 ** 1.5 * corr)


def quadrature(b_t: OperatorMatrix) -> OperatorMatrix:
    """X = (b + b^+)/sqrt2 for a (possibly non-unitarily evolved) b."""
    return OperatorMatrix((b_t.mat + b_t.mat.conj().T) / np.sqrt(2))


def _quarter_times(omega: float):
    tau = 2 * np.pi / omega
    return [0.0, tau / 4, tau / 2, 3 * tau / 4]


def quadratures_quartic_quarter_periods(params: ProtocolParams, dim: Optional[int] = None,
                                        strict: bool = False):
    w = anharmonic_frequency(params.omega_m, params.gamma, params.loop_amp_sq, strict)
    return [quadrature(heisenberg_b_quartic(t, params, dim, strict)) for t in _quarter_times(w)]


def quadratures_cubic_quarter_periods(params: ProtocolParams, dim: Optional[int] = None,
                                      strict: bool = False):
    return [quadrature(heisenberg_b_cubic(t, params, dim, strict))
            for t in _quarter_times(params.omega_m)]


# --------------------------------------------------------------------------
# effective map

@dataclass(frozen=True)
class EffectiveKerrMap:
    """Diagonal unitary exp(i theta_n) on the field.

    ``dtheta`` holds the derivative of theta_n with respect to the
    anharmonicity (gamma or delta); theta is linear in it.
    """
    theta: np.ndarray
    dtheta: np.ndarray
    kind: str

    def __post_init__(self):
        for name in ("theta", "dtheta"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.theta.size

    @property
    def phases(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    def apply(self, state):
        if isinstance(state, FockVector):
            return FockVector(self.phases * state.amp)
        u = self.phases
        return FockDensity(u[:, None] * state.mat * u.conj()[None, :])


def kerr_generator(kind: str, lam: float, dim: int, nbar: float = 0.0) -> np.ndarray:
    """d theta_n / d(anharmonicity)."""
    n = np.arange(dim, dtype=float)
    if kind == QUARTIC:
        return -0.5 * (lam ** 4 * n ** 4 + 3 * lam ** 2 * n ** 2 * nbar)
    if kind == CUBIC:
        return -(2.0 / 9.0) * lam ** 3 * n ** 3
    raise ValueError(f"unknown anharmonicity kind {kind!r}")


def effective_map_quartic(params: ProtocolParams, dim: Optional[int] = None,
                          strict: bool = False) -> EffectiveKerrMap:
    check_validity(params, QUARTIC, strict)
    dim = dim or params.field_dim
    n = np.arange(dim, dtype=float)
    g = kerr_generator(QUARTIC, params.lam, dim, params.nbar)
    return EffectiveKerrMap(params.lam ** 2 * n ** 2 + params.gamma * g, g, QUARTIC)


def effective_map_cubic(params: ProtocolParams, dim: Optional[int] = None,
                        strict: bool = False) -> EffectiveKerrMap:
    check_validity(params, CUBIC, strict)
    dim = dim or params.field_dim
    n = np.arange(dim, dtype=float)
    g = kerr_generator(CUBIC, params.lam, dim)
    return EffectiveKerrMap(params.lam ** 2 * n ** 2 + params.delta * g, g, CUBIC)


def effective_map(params: ProtocolParams, kind: str, dim: Optional[int] = None,
                  strict: bool = False) -> EffectiveKerrMap:
    if kind == QUARTIC:
        return effective_map_quartic(params, dim, strict)
    if kind == CUBIC:
        return effective_map_cubic(params, dim, strict)
    raise ValueError(f"unknown anharmonicity kind {kind!r}")


def output_state(params: ProtocolParams, kind: str, strict: bool = False,
                 threshold: Optional[float] = None) -> Tuple[FockVector, EffectiveKerrMap]:
    """xi_eff |alpha> together with the map that produced it."""
    dim = params.field_dim
    kw = {} if threshold is None else {"threshold": threshold}
    psi0 = coherent_vector(params.alpha, dim, **kw)
    xi = effective_map(params, kind, dim, strict)
    return xi.apply(psi0), xi


def harmonic_mean_field(lam: float, n_photons: float) -> complex:
    """<a>_0 / alpha = exp(i lam^2 - N_p (1 - exp(2 i lam^2)))."""
    return complex(np.exp(1j * lam ** 2 - n_photons * (1 - np.exp(2j * lam ** 2))))


def mean_field_exact(params: ProtocolParams, kind: str,
                     threshold: Optional[float] = None) -> complex:
    """<a> summed over the Fock amplitudes of xi_eff |alpha>."""
    psi, _ = output_state(params, kind, threshold=threshold)
    amp = psi.amp
    return complex(np.sum(amp[:-1].conj() * amp[1:] * np.sqrt(np.arange(1, amp.size))))


def mean_field_approx(params: ProtocolParams, kind: str, strict: bool = False) -> complex:
    """Closed-form <a> = alpha <a>_0 exp(-i phi_anh).

    ``<a>_0`` here is the pure factor exp(i lam^2 - N_p(1 - e^{2i lam^2}))
    with no alpha inside, so alpha * <a>_0 is the full harmonic mean field.
    """
    check_validity(params, kind, strict, phase=True)
    lam, n = params.lam, params.n_photons
    if kind == QUARTIC:
        phase = 0.5 * params.gamma * lam ** 4 * (4 * n ** 3 + 18 * n ** 2 + 10 * n + 1)
    elif kind == CUBIC:
        phase = (2.0 / 9.0) * params.delta * lam ** 3 * (3 * n ** 2 + 3 * n + 1)
    else:
        raise ValueError(f"unknown anharmonicity kind {kind!r}")
    return params.alpha * harmonic_mean_field(lam, n) * np.exp(-1j * phase)


# --------------------------------------------------------------------------
# losses

@dataclass(frozen=True)
class PulseSequence:
    lambdas: Tuple[float, float, float, float]
    tau: float = 2 * np.pi
    times: Tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if len(self.lambdas) != 4:
            raise ValueError("a loop needs exactly four pulses")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        object.__setattr__(self, "times", tuple(k * self.tau / 4 for k in range(4)))

    @classmethod
    def uniform(cls, lam: float, tau: float = 2 * np.pi) -> "PulseSequence":
        return cls((lam,) * 4, tau)

    def with_tau(self, tau: float) -> "PulseSequence":
        return PulseSequence(self.lambdas, tau)


def lossy_sequence(lambda1: float, epsilon: float, tau: float = 2 * np.pi) -> PulseSequence:
    """lambda_i = lambda1 (1 - epsilon)^(i-1)."""
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    return PulseSequence(tuple(lambda1 * (1 - epsilon) ** i for i in range(4)), tau)


def residual_displacement(seq: PulseSequence) -> complex:
    l1, l2, l3, l4 = seq.lambdas
    return ((l4 - l2) + 1j * (l1 - l3)) / np.sqrt(2)


def harmonic_phase_coefficient(seq: PulseSequence) -> float:
    """Coefficient of n^2 in the harmonic loop phase."""
    l1, l2, l3, l4 = seq.lambdas
    return l3 * l2 + 0.5 * (l2 - l4) * (l1 - l3)


def lossy_harmonic_expectation(seq: PulseSequence, nbar: float, n) -> complex:
    """Tr_m[xi_h nu] for field number n and a thermal mechanical state."""
    n = np.asarray(n, dtype=float)
    mu2 = abs(residual_displacement(seq)) ** 2
    out = (np.exp(-0.5 * mu2 * n ** 2 * (1 + 2 * nbar))
           * np.exp(1j * n ** 2 * harmonic_phase_coefficient(seq)))
    return complex(out) if out.ndim == 0 else out
