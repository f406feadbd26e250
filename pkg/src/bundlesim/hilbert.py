"""Operators and states on the truncated qubit (x) Fock space.

Basis ordering is qubit-major and fixed throughout the package::

    |g,0>, |g,1>, ..., |g,n_max>, |e,0>, ..., |e,n_max>

so the composite index of ``|q, n>`` is ``q * (n_max + 1) + n`` with
``q = 0`` for the ground state and ``q = 1`` for the excited state.
Operators are plain dense ``complex128`` arrays; the largest space the
package deals with is a few dozen levels, so nothing is sparse.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

GROUND, EXCITED = 0, 1

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
EIGEN_FLOOR = -1e-8
NORM_TOL = 1e-10

# tensor() refuses to build anything larger than this
MAX_DIM = 4096


class StateInvariantError(ValueError):
    """A state violates a structural invariant (trace, Hermiticity, positivity, norm)."""


@dataclass(frozen=True)
class FockTruncation:
    """Photon-number cutoff; the retained Fock basis is |0>..|n_max>."""

    n_max: int = 12

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def photon_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def index(self, qubit: int, n: int) -> int:
        """Composite index of |qubit, n>."""
        if qubit not in (GROUND, EXCITED):
            raise ValueError(f"qubit level must be 0 (g) or 1 (e), got {qubit!r}")
        if not 0 <= n <= self.n_max:
            raise IndexError(f"photon number {n} outside 0..{self.n_max}")
        return qubit * (self.n_max + 1) + n

    def label(self, i: int) -> str:
        q, n = divmod(i, self.n_max + 1)
        return f"{'ge'[q]},{n}"

    def labels(self) -> list[str]:
        return [self.label(i) for i in range(self.dim)]


def annihilation_op(trunc: FockTruncation) -> np.ndarray:
    """Photon annihilation operator b on the (n_max+1)-dim Fock factor."""
    return _annihilation(trunc.n_max).copy()


@lru_cache(maxsize=None)
def _annihilation(n_max: int) -> np.ndarray:
    b = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(complex)
    b.flags.writeable = False
    return b


def qubit_ops() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (sigma_plus, sigma_minus, sigma_plus @ sigma_minus) in the {|g>, |e>} basis.

    sigma_plus = |e><g| has its single unit entry at row 1, column 0.
    """
    sp = np.array([[0, 0], [1, 0]], dtype=complex)
    sm = sp.conj().T.copy()
    return sp, sm, sp @ sm


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product ``a (x) b``; qubit factor goes first by convention."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError("tensor() expects two square matrices")
    if a.shape[0] * b.shape[0] > MAX_DIM:
        raise ValueError(
            f"tensor product of dimension {a.shape[0] * b.shape[0]} exceeds MAX_DIM={MAX_DIM}"
        )
    return np.kron(a, b)


def displacement_op(beta: float, trunc: FockTruncation) -> np.ndarray:
    """D(beta) = exp[beta (b^dag - b)] on the truncated photon factor.

    Computed by scaling-and-squaring (``scipy.linalg.expm``) of the truncated
    generator, so entries near the cutoff carry truncation error.
    """
    if not np.isfinite(beta):
        raise ValueError("displacement amplitude must be finite")
    b = _annihilation(trunc.n_max)
    return expm(beta * (b.conj().T - b))


@dataclass(frozen=True)
class SystemOperators:
    """Composite-space operators for one truncation, built once and shared."""

    trunc: FockTruncation
    b: np.ndarray = field(repr=False)
    sigma_plus: np.ndarray = field(repr=False)
    sigma_minus: np.ndarray = field(repr=False)
    excited_proj: np.ndarray = field(repr=False)
    number: np.ndarray = field(repr=False)
    identity: np.ndarray = field(repr=False)


@lru_cache(maxsize=32)
def system_operators(trunc: FockTruncation) -> SystemOperators:
    b = _annihilation(trunc.n_max)
    sp, sm, pe = qubit_ops()
    i_ph = np.eye(trunc.photon_dim)
    i_q = np.eye(2)
    ops = SystemOperators(
        trunc=trunc,
        b=tensor(i_q, b),
        sigma_plus=tensor(sp, i_ph),
        sigma_minus=tensor(sm, i_ph),
        excited_proj=tensor(pe, i_ph),
        number=tensor(i_q, b.conj().T @ b),
        identity=np.eye(trunc.dim, dtype=complex),
    )
    for name in ("b", "sigma_plus", "sigma_minus", "excited_proj", "number", "identity"):
        getattr(ops, name).flags.writeable = False
    return ops


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1:
            raise ValueError("PureState amplitudes must be a vector")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def normalized(self) -> "PureState":
        nrm = np.linalg.norm(self.amplitudes)
        if nrm == 0:
            raise StateInvariantError("cannot normalize the zero vector")
        return PureState(self.amplitudes / nrm, self.time)

    def check(self, tol: float = NORM_TOL) -> None:
        nrm2 = float(np.vdot(self.amplitudes, self.amplitudes).real)
        if abs(nrm2 - 1.0) > tol:
            raise StateInvariantError(f"norm^2 = {nrm2!r} deviates from 1 by more than {tol}")

    def to_density(self) -> "DensityState":
        return DensityState(np.outer(self.amplitudes, self.amplitudes.conj()), self.time)


@dataclass(frozen=True)
class DensityState:
    """Density matrix with timestamp (units of 1/omega_b)."""

    matrix: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("DensityState matrix must be square")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def violations(self, check_trace: bool = True) -> dict[str, float]:
        """Measured deviations: Hermiticity, trace drift, minimum eigenvalue."""
        m = self.matrix
        herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
        out = {
            "hermiticity": herm,
            "min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]),
        }
        if check_trace:
            out["trace_drift"] = float(abs(np.trace(m) - 1.0))
        return out

    def check(self, check_trace: bool = True) -> dict[str, float]:
        v = self.violations(check_trace)
        if not np.all(np.isfinite(self.matrix)):
            raise StateInvariantError(f"non-finite density matrix at t={self.time}")
        if v["hermiticity"] > HERMITIAN_TOL:
            raise StateInvariantError(
                f"t={self.time}: Hermiticity violated ({v['hermiticity']:.3e})"
            )
        if check_trace and v["trace_drift"] > TRACE_TOL:
            raise StateInvariantError(f"t={self.time}: trace drift {v['trace_drift']:.3e}")
        if v["min_eigenvalue"] < EIGEN_FLOOR:
            raise StateInvariantError(
                f"t={self.time}: negative eigenvalue {v['min_eigenvalue']:.3e}"
            )
        return v


def basis_state(trunc: FockTruncation, qubit: int, n: int) -> PureState:
    psi = np.zeros(trunc.dim, dtype=complex)
    psi[trunc.index(qubit, n)] = 1.0
    return PureState(psi)


def basis_density(trunc: FockTruncation, qubit: int, n: int, time: float = 0.0) -> DensityState:
    rho = basis_state(trunc, qubit, n).to_density()
    return DensityState(rho.matrix, time)


def expectation(obs: np.ndarray, state) -> complex | float:
    """<obs> for a PureState, DensityState, state vector or density matrix.

    Hermitian observables return a float once the imaginary part has been
    checked to be at most 1e-10 (scaled by the trace/norm of the state).
    """
    obs = np.asarray(obs)
    if isinstance(state, PureState):
        vec = state.amplitudes
        mat = None
    elif isinstance(state, DensityState):
        vec, mat = None, state.matrix
    else:
        arr = np.asarray(state)
        vec, mat = (arr, None) if arr.ndim == 1 else (None, arr)
    dim = vec.shape[0] if vec is not None else mat.shape[0]
    if obs.shape != (dim, dim):
        raise ValueError(f"observable shape {obs.shape} does not match state dimension {dim}")
    if vec is not None:
        val = complex(np.vdot(vec, obs @ vec))
        scale = float(np.vdot(vec, vec).real)
    else:
        val = complex(np.einsum("ij,ji->", obs, mat))
        scale = float(abs(np.trace(mat)))
    if np.allclose(obs, obs.conj().T, atol=1e-14, rtol=0):
        bound = 1e-10 * max(1.0, scale, float(np.max(np.abs(obs))) * scale)
        if abs(val.imag) > bound:
            raise StateInvariantError(
                f"imaginary part {val.imag:.3e} of a Hermitian expectation value"
            )
        return val.real
    return val
