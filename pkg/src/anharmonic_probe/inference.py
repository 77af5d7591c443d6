"""Monte-Carlo estimation: sampling, maximum likelihood, Cramer-Rao saturation
and the adaptive loop-closure procedure.

Random streams come from numpy's Philox4x64 counter-based generator keyed by
``seed + (stream << 64)``, so every (seed, stream) pair is an independent,
reproducible stream regardless of evaluation order or thread count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.interpolate import PchipInterpolator
from scipy.stats import kstest

from . import dynamics as dyn
from . import metrology as met
from . import oracle as orc
from .dynamics import CUBIC, QUARTIC, ProtocolParams
from .errors import (BracketError, CapabilityError, GridCoverageError, NonConvergence,
                     ZeroInformation)
from .fock import FockDensity, FockVector, coherent_vector
from .metrology import HETERODYNE, HOMODYNE, MeasurementConfig

# likelihoods need O(dim) Fock terms per outcome; beyond this the run is not desk scale
MAX_SAMPLING_DIM = 400
BOOTSTRAP_STREAM = 1 << 32


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return np.random.Generator(np.random.Philox(key=int(seed) + (int(stream) << 64)))


DESK_PRESETS = {
    "desk-quartic": ProtocolParams(lam=0.3, gamma=1e-3, alpha=3.0),
    "desk-cubic": ProtocolParams(lam=0.3, delta=1e-3, alpha=3.0),
    "fig2": ProtocolParams(lam=1.5e-5, gamma=1e-25, delta=1e-25, alpha=np.sqrt(30)),
    "physical": ProtocolParams(lam=1e-4, gamma=1e-20, delta=1e-15, alpha=np.sqrt(1e9)),
}


def _require_desk_scale(params: ProtocolParams):
    if params.n_photons > MAX_SAMPLING_DIM or params.field_dim > MAX_SAMPLING_DIM:
        raise CapabilityError(
            f"N_p={params.n_photons:.3g} needs {params.field_dim} Fock levels per outcome; "
            "sampling and likelihoods are limited to desk-scale parameters")


@dataclass(frozen=True)
class OutcomeSample:
    scheme: str
    values: np.ndarray
    seed: int
    stream: int
    config: MeasurementConfig
    params: ProtocolParams
    kind: str
    ks_pvalue: float = float("nan")

    def __post_init__(self):
        v = np.array(self.values, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class EstimateResult:
    estimate: float
    std_error: float
    log_likelihood_curve: np.ndarray
    iterations: int
    converged: bool


def _model_state(params, kind, strict=False):
    _require_desk_scale(params)
    psi, _ = dyn.output_state(params, kind, strict)
    return psi


def sample_homodyne(config: MeasurementConfig, params: ProtocolParams, kind: str, M: int,
                    seed: int, stream: int = 0, state=None,
                    strict: bool = False) -> OutcomeSample:
    """M i.i.d. quadrature outcomes by inverse-CDF sampling of the tabulated pdf.

    ``state`` overrides the effective-map output (e.g. an oracle reduced
    field); ``params`` then only describes the model attached to the sample.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if state is None:
        state = _model_state(params, kind, strict)
    x = config.x_grid(params.alpha)
    p = met.homodyne_pdf_state(x, state, config.phi)
    p = np.clip(p, 0.0, None)
    mass = simpson(p, x=x)
    if mass < 1.0 - met.COVERAGE_TOL:
        raise GridCoverageError(f"homodyne grid holds only {mass:.12f} of the probability")
    cdf = cumulative_trapezoid(p, x, initial=0.0)
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    inverse = PchipInterpolator(cdf[keep], x[keep])
    forward = PchipInterpolator(x[keep], cdf[keep])
    u = make_rng(seed, stream).random(M)
    values = inverse(u)
    ks = kstest(values, lambda v: np.clip(forward(v), 0.0, 1.0)).pvalue if M >= 8 else float("nan")
    cfg = config if config.scheme == HOMODYNE else config.with_phi(config.phi)
    return OutcomeSample(HOMODYNE, values, seed, stream, cfg, params, kind, float(ks))


def sample_heterodyne(params: ProtocolParams, kind: str, M: int, seed: int, stream: int = 0,
                      config: Optional[MeasurementConfig] = None, state=None,
                      strict: bool = False) -> OutcomeSample:
    """Exact rejection sampling of the Husimi density inside the grid disk.

    |<eta|psi>|^2 <= 1, so uniform proposals on the disk accepted with
    probability p(eta) give draws from p restricted to the disk.
    """
    config = config or MeasurementConfig(scheme=HETERODYNE)
    if state is None:
        state = _model_state(params, kind, strict)
    if not isinstance(state, FockVector):
        raise TypeError("heterodyne sampling needs a pure state")
    radius = config.eta_grid(params.alpha)[0][-1]
    rng = make_rng(seed, stream)
    out: List[np.ndarray] = []
    have = 0
    while have < M:
        # acceptance is about 1/radius^2; cap the chunk to bound memory
        batch = min(max(1024, int(1.2 * (M - have) * radius ** 2)), 1 << 17)
        r = radius * np.sqrt(rng.random(batch))
        eta = r * np.exp(2j * np.pi * rng.random(batch))
        p = np.abs(met.coherent_overlaps(eta, state.dim) @ state.amp) ** 2
        acc = eta[rng.random(batch) < p]
        out.append(acc)
        have += acc.size
    values = np.concatenate(out)[:M]
    return OutcomeSample(HETERODYNE, values, seed, stream, config, params, kind)


def _design(sample: OutcomeSample):
    """Outcome amplitudes at zero anharmonicity and the Kerr generator."""
    params = sample.params.with_strength(sample.kind, 0.0)
    _require_desk_scale(params)
    dim = params.field_dim
    psi0 = coherent_vector(params.alpha, dim)
    xi0 = dyn.effective_map(params, sample.kind, dim)
    amp0 = xi0.apply(psi0).amp
    if sample.scheme == HOMODYNE:
        basis = met.homodyne_basis(sample.values, dim, sample.config.phi)
    else:
        basis = met.coherent_overlaps(sample.values, dim)
    return basis * amp0[None, :], xi0.dtheta


class _Likelihood:
    """Log-likelihood of the sample as a function of the anharmonicity."""

    def __init__(self, sample: OutcomeSample, scale: float = 1.0):
        self.A, gen = _design(sample)
        self.g = gen / scale
        self.g = self.g - self.g.mean()

    def amplitudes(self, theta):
        ph = np.exp(1j * theta * self.g)
        return self.A @ ph, self.A @ (1j * self.g * ph), self.A @ (-self.g ** 2 * ph)

    def __call__(self, theta: float) -> float:
        s = self.A @ np.exp(1j * theta * self.g)
        return float(np.sum(np.log(np.abs(s) ** 2 + 1e-300)))

    def observed_information(self, theta: float) -> float:
        s, ds, dds = self.amplitudes(theta)
        p = np.abs(s) ** 2
        dp = 2 * np.real(ds * s.conj())
        ddp = 2 * np.real(dds * s.conj()) + 2 * np.abs(ds) ** 2
        return float(-np.sum(ddp / p - (dp / p) ** 2))


def mle_estimate(sample: OutcomeSample, bracket: Tuple[float, float],
                 n_grid: int = 64, tol: float = 1e-10, max_iter: int = 200,
                 scale: float = 1.0) -> EstimateResult:
    """Maximum-likelihood anharmonicity from a homodyne or heterodyne sample.

    A coarse scan of ``bracket`` locates the best cell, golden-section
    search refines it and the standard error comes from the observed
    information.  ``scale`` estimates scale * parameter instead.
    """
    lo, hi = map(float, bracket)
    if not hi > lo:
        raise ValueError("bracket must satisfy lo < hi")
    like = _Likelihood(sample, scale)
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([like(t) for t in grid])
    curve = np.column_stack([grid, vals])
    if np.ptp(vals) <= 1e-12 * max(1.0, np.abs(vals).max()):
        raise NonConvergence("likelihood is flat over the bracket; parameter not identifiable")
    k = int(np.argmax(vals))
    if k == 0 or k == n_grid - 1:
        raise BracketError(f"likelihood maximum at bracket edge {grid[k]!r}")
    est, _, it = met._golden_max(like, grid[k - 1], grid[k + 1], tol=tol, max_iter=max_iter)
    if it >= max_iter:
        raise NonConvergence(f"golden-section search did not converge in {max_iter} steps")
    info = like.observed_information(est)
    if not info > 0:
        raise NonConvergence("observed information is not positive at the maximum")
    return EstimateResult(float(est), float(1 / np.sqrt(info)), curve, it, True)


def default_bracket(value: float) -> Tuple[float, float]:
    if value == 0:
        raise ValueError("the default bracket needs a non-zero true value")
    a, b = value / 10, value * 10
    return (min(a, b), max(a, b))


@dataclass(frozen=True)
class SaturationReport:
    kind: str
    scheme: str
    M: int
    n_repeats: int
    seed: int
    phi: float
    fisher: float
    qfi: float
    estimates: np.ndarray
    variance: float
    statistic: float
    ci_low: float
    ci_high: float
    n_failed: int
    mean_estimate: float

    def as_row(self) -> dict:
        return {"kind": self.kind, "scheme": self.scheme, "M": self.M,
                "n_repeats": self.n_repeats, "seed": self.seed, "phi": self.phi,
                "fisher": self.fisher, "qfi": self.qfi, "mean_estimate": self.mean_estimate,
                "variance": self.variance, "var_M_F": self.statistic,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "n_failed": self.n_failed}


def crb_saturation_experiment(params: ProtocolParams, kind: str, M: int, n_repeats: int,
                              seed: int, scheme: str = HOMODYNE,
                              config: Optional[MeasurementConfig] = None,
                              bracket: Optional[Tuple[float, float]] = None,
                              scale: float = 1.0, n_bootstrap: int = 2000,
                              threads: int = 1) -> SaturationReport:
    """Empirical Var(estimate) * M * F over independent repeats (ideally ~1)."""
    _require_desk_scale(params)
    truth = params.strength(kind)
    if scheme == HOMODYNE:
        if config is None:
            phi, fi = met.optimize_phase(params, kind)
            config = MeasurementConfig(phi=phi)
        else:
            fi = met.fisher_homodyne(config, params, kind)
    else:
        config = config or MeasurementConfig(scheme=HETERODYNE)
        fi = met.fisher_heterodyne(params, kind, config)
    if not fi > 0:
        raise ZeroInformation("the measurement carries no information on the parameter")
    qfi = met.qfi_numeric(params, kind)
    if bracket is None:
        bracket = default_bracket(truth)
    bracket = (bracket[0] * scale, bracket[1] * scale)

    def one(r):
        if scheme == HOMODYNE:
            s = sample_homodyne(config, params, kind, M, seed, stream=r)
        else:
            s = sample_heterodyne(params, kind, M, seed, stream=r, config=config)
        try:
            return mle_estimate(s, bracket, scale=scale).estimate
        except (BracketError, NonConvergence):
            return np.nan

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            est = np.array(list(pool.map(one, range(n_repeats))))
    else:
        est = np.array([one(r) for r in range(n_repeats)])
    good = est[np.isfinite(est)]
    if good.size < 2:
        raise NonConvergence("fewer than two repeats produced an estimate")
    f_scaled = fi / scale ** 2
    var = float(np.var(good, ddof=1))
    stat = var * M * f_scaled
    rng = make_rng(seed, BOOTSTRAP_STREAM)
    idx = rng.integers(0, good.size, size=(n_bootstrap, good.size))
    boot = np.var(good[idx], axis=1, ddof=1) * M * f_scaled
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return SaturationReport(kind, scheme, M, n_repeats, seed, float(config.phi), float(f_scaled),
                            float(qfi / scale ** 2), est, var, float(stat), float(lo), float(hi),
                            int(n_repeats - good.size), float(good.mean()))


@dataclass(frozen=True)
class ClosureRound:
    round: int
    tau: float
    visibility: float
    mean_field_ratio: float
    estimate: float
    std_error: float
    phi: float
    backtracks: int
    converged: bool

    def as_row(self) -> dict:
        return {"round": self.round, "tau": self.tau, "visibility": self.visibility,
                "mean_field_ratio": self.mean_field_ratio, "estimate": self.estimate,
                "std_error": self.std_error, "phi": self.phi,
                "backtracks": self.backtracks, "converged": self.converged}


def adaptive_closure(params: ProtocolParams, kind: str, rounds: int = 4, M: int = 20000,
                     seed: int = 0, bracket: Tuple[float, float] = (-0.05, 0.05),
                     tol_sigma: float = 1.0, max_backtracks: int = 6,
                     cap: int = orc.JOINT_DIM_CAP) -> List[ClosureRound]:
    """Iteratively re-time the loop from the current anharmonicity estimate.

    Round k samples homodyne data from the exact loop run with period tau_k
    and fits the effective-map model.  The estimate proposes the next period
    through the frequency shift (quartic only; the cubic frequency is
    unshifted at first order).  A proposal that lowers the fringe visibility
    is pulled halfway back toward tau_k, up to ``max_backtracks`` times, and
    rejected if it still does not help, so the visibility trace never drops.
    Stops once the estimate agrees with the value assumed for tau_k within
    ``tol_sigma`` standard errors.
    """
    assumed = 0.0
    tau = 2 * np.pi / params.omega_m
    run = orc.run_protocol(params, kind, tau=tau, cap=cap)
    backtracks = 0
    trace: List[ClosureRound] = []
    for k in range(rounds):
        model = params.with_strength(kind, assumed)
        phi, _ = met.optimize_phase(model, kind)
        sample = sample_homodyne(MeasurementConfig(phi=phi), params, kind, M, seed,
                                 stream=k, state=run.reduced_field)
        try:
            est = mle_estimate(sample, bracket)
            value, err = est.estimate, est.std_error
        except (BracketError, NonConvergence):
            value, err = float("nan"), float("nan")
        done = bool(np.isfinite(value) and abs(value - assumed) < tol_sigma * err)
        trace.append(ClosureRound(k, tau, run.visibility, run.mean_field_ratio, value, err,
                                  phi, backtracks, done))
        if done or k == rounds - 1 or not np.isfinite(value):
            if done or k == rounds - 1:
                break
            continue
        assumed = value
        backtracks = 0
        if kind != QUARTIC:
            continue
        proposal = 2 * np.pi / dyn.anharmonic_frequency(params.omega_m, value,
                                                        params.loop_amp_sq)
        while True:
            trial = orc.run_protocol(params, kind, tau=proposal, cap=cap)
            if trial.visibility >= run.visibility:
                tau, run = proposal, trial
                break
            if backtracks == max_backtracks:
                break
            backtracks += 1
            proposal = (proposal + tau) / 2
    return trace
