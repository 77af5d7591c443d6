"""Truncated Fock-space kernel: states, ladder operators, composite systems.

All arrays held by the types below are made read-only on construction so the
values can be shared freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DimensionMismatch, EigenFailure, TruncationError

TRUNCATION_THRESHOLD = 1e-10
NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-10


def _frozen(arr, dtype=complex):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FockVector:
    """Pure state amplitudes in the number basis |0>, ..., |dim-1>."""
    amp: np.ndarray

    def __post_init__(self):
        amp = _frozen(self.amp)
        if amp.ndim != 1 or amp.size < 1:
            raise DimensionMismatch("FockVector needs a non-empty 1-d array")
        object.__setattr__(self, "amp", amp)

    @property
    def dim(self) -> int:
        return self.amp.size

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amp) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amp) ** 2

    def density(self) -> "FockDensity":
        return FockDensity(np.outer(self.amp, self.amp.conj()))


@dataclass(frozen=True)
class FockDensity:
    mat: np.ndarray

    def __post_init__(self):
        mat = _frozen(self.mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise DimensionMismatch(f"density matrix must be square, got {mat.shape}")
        object.__setattr__(self, "mat", mat)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.mat))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.mat)).copy()

    def is_valid(self, tol: float = NORM_TOL) -> bool:
        m = self.mat
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            return False
        if abs(np.trace(m) - 1.0) > tol:
            return False
        return bool(np.linalg.eigvalsh(m).min() >= -tol)


@dataclass(frozen=True)
class JointState:
    """Density matrix on field (x) mechanics, field index major.

    Row index of ``mat`` is ``n_field * dim_m + n_mech``.
    """
    dim_c: int
    dim_m: int
    mat: np.ndarray

    def __post_init__(self):
        mat = _frozen(self.mat)
        d = self.dim_c * self.dim_m
        if mat.shape != (d, d):
            raise DimensionMismatch(
                f"joint matrix shape {mat.shape} != ({d}, {d}) for dims {self.dim_c}x{self.dim_m}")
        object.__setattr__(self, "mat", mat)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.mat))

    def blocks(self) -> np.ndarray:
        """View as a (dim_c, dim_c, dim_m, dim_m) array of mechanics blocks."""
        r = self.mat.reshape(self.dim_c, self.dim_m, self.dim_c, self.dim_m)
        return r.transpose(0, 2, 1, 3)


@dataclass(frozen=True)
class OperatorMatrix:
    mat: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        mat = _frozen(self.mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"operator must be square, got {mat.shape}")
        if self.hermitian and np.max(np.abs(mat - mat.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ValueError("matrix flagged hermitian is not hermitian")
        object.__setattr__(self, "mat", mat)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.mat.conj().T, self.hermitian)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(self.mat @ other.mat)
        if isinstance(other, FockVector):
            return FockVector(self.mat @ other.amp)
        return NotImplemented


def choose_dim(alpha: complex) -> int:
    """Fock cutoff that keeps the Poisson tail of |alpha> negligible."""
    n = abs(alpha) ** 2
    return int(np.ceil(n + 10.0 * np.sqrt(n + 1.0) + 10.0))


def coherent_vector(alpha: complex, dim: int,
                    threshold: float = TRUNCATION_THRESHOLD) -> FockVector:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    alpha = complex(alpha)
    amp = np.empty(dim, dtype=complex)
    amp[0] = np.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, dim):
        amp[n] = amp[n - 1] * alpha / np.sqrt(n)
    deficit = 1.0 - np.sum(np.abs(amp) ** 2)
    if deficit > threshold:
        raise TruncationError(
            f"coherent state |{alpha}> loses {deficit:.3g} probability at dim={dim}")
    return FockVector(amp / np.sqrt(1.0 - deficit))


def fock_vector(n: int, dim: int) -> FockVector:
    if not 0 <= n < dim:
        raise ValueError(f"level {n} outside truncation {dim}")
    amp = np.zeros(dim, dtype=complex)
    amp[n] = 1.0
    return FockVector(amp)


def thermal_density(nbar: float, dim: int,
                    threshold: float = TRUNCATION_THRESHOLD) -> FockDensity:
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = np.arange(dim)
    if nbar == 0:
        pops = (n == 0).astype(float)
    else:
        q = nbar / (1.0 + nbar)
        pops = q ** n / (1.0 + nbar)
    deficit = 1.0 - pops.sum()
    if deficit > threshold:
        raise TruncationError(
            f"thermal state nbar={nbar} loses {deficit:.3g} probability at dim={dim}")
    return FockDensity(np.diag(pops / pops.sum()).astype(complex))


def thermal_dim(nbar: float, threshold: float = TRUNCATION_THRESHOLD) -> int:
    """Smallest cutoff whose geometric tail (nbar/(1+nbar))**dim is below threshold."""
    if nbar == 0:
        return 1
    q = nbar / (1.0 + nbar)
    return int(np.ceil(np.log(threshold) / np.log(q)))


def ladder_operators(dim: int) -> Tuple[OperatorMatrix, OperatorMatrix,
                                        OperatorMatrix, OperatorMatrix]:
    """Return (a, x, p, n) with x = (a^+ + a)/sqrt2 and p = i(a^+ - a)/sqrt2."""
    if dim < 2:
        raise ValueError("ladder operators need dim >= 2")
    a = np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)
    ad = a.conj().T
    x = (ad + a) / np.sqrt(2)
    p = 1j * (ad - a) / np.sqrt(2)
    n = np.diag(np.arange(dim)).astype(complex)
    return (OperatorMatrix(a), OperatorMatrix(x, True),
            OperatorMatrix(p, True), OperatorMatrix(n, True))


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def _density_matrix(state) -> np.ndarray:
    if isinstance(state, FockVector):
        return np.outer(state.amp, state.amp.conj())
    if isinstance(state, FockDensity):
        return np.asarray(state.mat)
    raise TypeError(f"expected FockVector or FockDensity, got {type(state).__name__}")


def tensor(field, mech) -> JointState:
    """Product state field (x) mechanics."""
    rf = _density_matrix(field)
    rm = _density_matrix(mech)
    return JointState(rf.shape[0], rm.shape[0], np.kron(rf, rm))


def joint_from_blocks(blocks: np.ndarray) -> JointState:
    """Assemble a JointState from mechanics blocks ``blocks[n, n', i, j]``.

    Inverse of :meth:`JointState.blocks`.
    """
    blocks = np.asarray(blocks)
    if blocks.ndim != 4 or blocks.shape[0] != blocks.shape[1] or blocks.shape[2] != blocks.shape[3]:
        raise DimensionMismatch(f"bad block array shape {blocks.shape}")
    dc, dm = blocks.shape[0], blocks.shape[2]
    return JointState(dc, dm, blocks.transpose(0, 2, 1, 3).reshape(dc * dm, dc * dm))


def partial_trace_mech(state: JointState) -> FockDensity:
    if not isinstance(state, JointState):
        raise DimensionMismatch("partial_trace_mech expects a JointState")
    return FockDensity(np.trace(state.blocks(), axis1=2, axis2=3))


def partial_trace_field(state: JointState) -> FockDensity:
    if not isinstance(state, JointState):
        raise DimensionMismatch("partial_trace_field expects a JointState")
    r = state.mat.reshape(state.dim_c, state.dim_m, state.dim_c, state.dim_m)
    return FockDensity(np.einsum("aiak->ik", r))


def unitary_from_hermitian(H: OperatorMatrix, t: float) -> OperatorMatrix:
    """exp(-i H t) through the eigendecomposition of H."""
    if not H.hermitian:
        raise ValueError("unitary_from_hermitian needs a matrix flagged hermitian")
    try:
        evals, evecs = np.linalg.eigh(H.mat)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not np.all(np.isfinite(evals)):
        raise EigenFailure("non-finite eigenvalues")
    return OperatorMatrix((evecs * np.exp(-1j * evals * t)) @ evecs.conj().T)


def _pure_vector(rho: np.ndarray, tol: float = 1e-10):
    """Return the state vector if rho is rank one within tol, else None."""
    if abs(np.real(np.trace(rho @ rho)) - 1.0) > tol:
        return None
    w, v = np.linalg.eigh(rho)
    return v[:, -1]


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Accepts FockVector or FockDensity for either argument; when one side is
    pure the overlap <psi|sigma|psi> is used directly.
    """
    if isinstance(rho, FockVector) and isinstance(sigma, FockVector):
        if rho.dim != sigma.dim:
            raise DimensionMismatch("fidelity of states with different dims")
        return float(min(1.0, abs(np.vdot(rho.amp, sigma.amp)) ** 2))
    r = _density_matrix(rho)
    s = _density_matrix(sigma)
    if r.shape != s.shape:
        raise DimensionMismatch(f"fidelity of {r.shape} and {s.shape}")
    for pure, other in ((sigma, r), (rho, s)):
        if isinstance(pure, FockVector):
            vec = pure.amp
        else:
            vec = _pure_vector(_density_matrix(pure))
        if vec is not None:
            val = np.real(np.vdot(vec, other @ vec))
            return float(np.clip(val, 0.0, 1.0))
    w, v = np.linalg.eigh(r)
    sq = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    inner = sq @ s @ sq
    ev = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    val = np.sum(np.sqrt(np.clip(ev, 0.0, None))) ** 2
    return float(np.clip(val, 0.0, 1.0))


def purity(rho) -> float:
    r = _density_matrix(rho)
    return float(np.real(np.sum(r * r.T)))


def expect(op, state) -> complex:
    m = op.mat if isinstance(op, OperatorMatrix) else np.asarray(op)
    if isinstance(state, FockVector):
        return complex(np.vdot(state.amp, m @ state.amp))
    return complex(np.trace(m @ _density_matrix(state)))


def mean_field(state) -> complex:
    """<a> for a single-mode state."""
    if isinstance(state, FockVector):
        amp = state.amp
        return complex(np.sum(amp[:-1].conj() * amp[1:] * np.sqrt(np.arange(1, amp.size))))
    r = _density_matrix(state)
    # Tr(a rho) = sum_n sqrt(n+1) rho[n+1, n]
    return complex(np.sum(np.sqrt(np.arange(1, r.shape[0])) * np.diag(r, k=-1)))
