"""Longitudinally coupled qubit-resonator model driven by two Gaussian pulse trains.

Units: omega_b = 1 and hbar = 1, so every parameter is the dimensionless
ratio to the resonator frequency and times are in units of 1/omega_b.
For a resonator at omega_b = 2*pi x 5 GHz, lambda = 0.765 is
2*pi x 3.83 GHz, kappa = 0.0006 is 2*pi x 3 MHz and omega_b*t = 1000 is
about 32 ns.

The model keeps the compensating resonator drive, i.e. the coupling is
lambda sigma_+ sigma_- (b^dag + b).  Without that drive the emitted
bundles would come out coherently displaced by lambda/2; that variant is
not built here.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import eval_genlaguerre, eval_laguerre, gammaln

from .hilbert import EXCITED, GROUND, FockTruncation, displacement_op, system_operators

# Omega_0 above this breaks the off-resonant-term neglect used by the chain picture
RWA_WARN_AMPLITUDE = 0.2


class RWAWarning(UserWarning):
    """Drive amplitude too large for the resonant transition-chain picture."""


class LambdaBracketError(ValueError):
    """No sign change of the Laguerre polynomial was found before its first extremum."""


@dataclass(frozen=True)
class PulseSchedule:
    """Two Gaussian pulse trains with equal amplitude and width.

    ``n_pulses`` counts pulses per train (N_0 + 1); train i peaks at
    ``t_i + m * period`` for m = 0..n_pulses-1.
    """

    omega_0_amp: float = 0.05
    sigma: float = 180.0
    t1: float = 1000.0
    t2: float = 750.0
    period: float = 10000.0
    n_pulses: int = 1

    def __post_init__(self):
        vals = (self.omega_0_amp, self.sigma, self.t1, self.t2, self.period)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("pulse parameters must be finite")
        if self.sigma <= 0:
            raise ValueError("pulse width sigma must be positive")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValueError("n_pulses must be an integer >= 1")
        if self.n_pulses > 1 and self.period <= 0:
            raise ValueError("period must be positive for a pulse train")

    def centers(self, which: int) -> np.ndarray:
        t0 = self.t1 if which == 1 else self.t2
        return t0 + self.period * np.arange(self.n_pulses)


@dataclass(frozen=True)
class SystemConfig:
    """All model parameters (dimensionless, omega_b = 1).

    ``delta1``/``delta2`` left as None fall back to the resonance
    conditions -lambda^2 and -lambda^2 - 1.  ``omega0`` only enters the
    thermal occupation of the qubit bath.
    """

    lam: float = 0.0
    kappa: float = 0.0
    gamma: float = 0.0
    pulses: PulseSchedule = field(default_factory=PulseSchedule)
    trunc: FockTruncation = field(default_factory=FockTruncation)
    bundle_N: int = 2
    delta1: float | None = None
    delta2: float | None = None
    omega0: float = 1.0

    def __post_init__(self):
        for name in ("lam", "kappa", "gamma", "omega0"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
        for name in ("delta1", "delta2"):
            v = getattr(self, name)
            if v is not None and not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.lam < 0:
            raise ValueError("coupling lambda must be non-negative")
        if self.kappa < 0 or self.gamma < 0:
            raise ValueError("decay rates must be non-negative")
        if int(self.bundle_N) != self.bundle_N or self.bundle_N < 1:
            raise ValueError("bundle_N must be an integer >= 1")

    @property
    def detunings(self) -> tuple[float, float]:
        d1, d2 = resonance_detunings(self)
        return (d1 if self.delta1 is None else self.delta1,
                d2 if self.delta2 is None else self.delta2)

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


# -- Franck-Condon factors -------------------------------------------------------

def franck_condon(n: int, m: int, beta: float) -> float:
    """Overlap <n~|m> = <n|D(beta)|m> between displaced and bare Fock states.

    Evaluated in log space (log-Gamma prefactor, explicit sign) with the
    associated Laguerre polynomial from its three-term recurrence, so it
    does not overflow for photon numbers in the tens.
    """
    if n < 0 or m < 0:
        raise ValueError("Fock indices must be non-negative")
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    if beta == 0.0:
        return 1.0 if n == m else 0.0
    lo, hi = min(n, m), max(n, m)
    k = hi - lo
    x = beta * beta
    lag = float(eval_genlaguerre(lo, k, x))
    if lag == 0.0:
        return 0.0
    log_mag = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * x + k * np.log(abs(beta))
    log_mag += np.log(abs(lag))
    sign = np.sign(lag) * np.sign(beta) ** k
    if n <= m:
        sign *= (-1) ** k
    return float(sign * np.exp(log_mag))


@dataclass(frozen=True)
class FranckCondonTable:
    beta: float
    table: np.ndarray = field(repr=False)

    @property
    def n_max(self) -> int:
        return self.table.shape[0] - 1

    def __call__(self, n: int, m: int) -> float:
        return float(self.table[n, m])


@lru_cache(maxsize=64)
def franck_condon_table(beta: float, n_max: int) -> FranckCondonTable:
    tab = np.array([[franck_condon(n, m, beta) for m in range(n_max + 1)]
                    for n in range(n_max + 1)])
    tab.flags.writeable = False
    return FranckCondonTable(beta, tab)


def lambda_n(N: int, tol: float = 1e-12) -> float:
    """Smallest positive coupling with <N~|N> = 0, i.e. sqrt of the first zero of L_N.

    L_N is scanned in steps of 0.01 in x = beta^2 from x = 0 until it either
    changes sign (then bisected on beta to ``tol``) or turns upward, which
    would mean no simple zero precedes its first extremum.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    step = 0.01
    x_prev, f_prev = 0.0, 1.0
    x = step
    while True:
        f = float(eval_laguerre(N, x))
        if f == 0.0:
            return float(np.sqrt(x))
        if np.sign(f) != np.sign(f_prev):
            break
        if f > f_prev:
            raise LambdaBracketError(f"L_{N} has no sign change before its first extremum")
        x_prev, f_prev = x, f
        x += step
        if x > 4.0 * N + 10:
            raise LambdaBracketError(f"could not bracket the first zero of L_{N}")
    lo, hi = np.sqrt(x_prev), np.sqrt(x)
    f_lo = f_prev
    for _ in range(200):  # halving from width < 1 reaches any tol above 1e-60
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # interval at floating-point resolution
            break
        f_mid = float(eval_laguerre(N, mid * mid))
        if f_mid == 0.0:
            return float(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


# -- drives, detunings, spectrum --------------------------------------------------

def pulse_amplitude(t, which: int, sched: PulseSchedule):
    """Omega_i(t): exact sum of every Gaussian in train ``which`` (1 or 2)."""
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    t_arr = np.asarray(t, dtype=float)
    centers = sched.centers(which)
    z = (t_arr[..., None] - centers) / sched.sigma
    out = sched.omega_0_amp * np.exp(-0.5 * z * z).sum(axis=-1)
    return float(out) if np.ndim(t) == 0 else out


def resonance_detunings(cfg: SystemConfig) -> tuple[float, float]:
    """Carrier detunings that make both pulse trains drive the transition chain resonantly."""
    lam2 = cfg.lam ** 2
    return -lam2, -lam2 - 1.0


def h0_eigen(n: int, cfg: SystemConfig) -> tuple[float, float]:
    """(E_{g,n}, E_{e,n}) of the undriven Hamiltonian in the rotating frame."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return float(n), float(n) - cfg.lam ** 2


@lru_cache(maxsize=64)
def _centers(sched: PulseSchedule) -> tuple[tuple[float, ...], tuple[float, ...]]:
    return tuple(sched.centers(1).tolist()), tuple(sched.centers(2).tolist())


def drive_coefficient(t: float, cfg: SystemConfig) -> complex:
    """c(t) such that the drive term is c(t) sigma_+ + h.c."""
    d1, d2 = cfg.detunings
    sched = cfg.pulses
    c1, c2 = _centers(sched)
    inv = 0.5 / (sched.sigma * sched.sigma)
    om1 = sum(math.exp(-(t - c) * (t - c) * inv) for c in c1)
    om2 = sum(math.exp(-(t - c) * (t - c) * inv) for c in c2)
    if om1 == 0.0 and om2 == 0.0:
        return 0j
    amp = sched.omega_0_amp
    return amp * (om1 * cmath.exp(-1j * d1 * t) + om2 * cmath.exp(-1j * d2 * t))


def max_drive_amplitude(cfg: SystemConfig) -> float:
    """Largest value either pulse train reaches (sampled at every pulse peak)."""
    peaks = np.concatenate([cfg.pulses.centers(1), cfg.pulses.centers(2)])
    return float(max(max(pulse_amplitude(peaks, 1, cfg.pulses)),
                     max(pulse_amplitude(peaks, 2, cfg.pulses))))


def check_rwa(cfg: SystemConfig) -> float:
    """Return the peak drive amplitude; warn if it is not small against omega_b."""
    peak = max_drive_amplitude(cfg)
    if peak > RWA_WARN_AMPLITUDE:
        warnings.warn(
            f"peak drive {peak:.3g} exceeds {RWA_WARN_AMPLITUDE}: off-resonant transitions "
            "are no longer negligible",
            RWAWarning,
            stacklevel=2,
        )
    return peak


# -- Hamiltonians -----------------------------------------------------------------

@lru_cache(maxsize=32)
def static_hamiltonian(lam: float, trunc: FockTruncation) -> np.ndarray:
    """H_0 = b^dag b + lambda sigma_+ sigma_- (b^dag + b) on the composite space."""
    ops = system_operators(trunc)
    h0 = ops.number + lam * ops.excited_proj @ (ops.b + ops.b.conj().T)
    h0.flags.writeable = False
    return h0


@lru_cache(maxsize=32)
def static_eigensystem(lam: float, trunc: FockTruncation) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the truncated H_0, block by block in the qubit.

    Returns (energies, W) with W unitary and columns ordered like the bare
    basis: |g,n> (exactly the bare states) followed by the numerical
    counterparts of |e,n~>, phased to overlap positively with D(-lambda)|n>.
    """
    d = trunc.photon_dim
    b = system_operators(trunc).b[:d, :d]
    num = np.arange(d, dtype=float)
    e_block = np.diag(num).astype(complex) + lam * (b + b.conj().T)
    e_vals, e_vecs = np.linalg.eigh(e_block)
    ref = displacement_op(-lam, trunc)
    overlap = np.einsum("in,in->n", ref.conj(), e_vecs)
    flip = np.where(overlap.real < 0, -1.0, 1.0)
    e_vecs = e_vecs * flip
    energies = np.concatenate([num, e_vals.real])
    w = np.zeros((2 * d, 2 * d), dtype=complex)
    w[:d, :d] = np.eye(d)
    w[d:, d:] = e_vecs
    energies.flags.writeable = False
    w.flags.writeable = False
    return energies, w


def hamiltonian_lab(t: float, cfg: SystemConfig) -> np.ndarray:
    """Full rotating-frame Hamiltonian H(t) in the bare product basis."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    ops = system_operators(cfg.trunc)
    c = drive_coefficient(t, cfg)
    drive = c * ops.sigma_plus
    return static_hamiltonian(cfg.lam, cfg.trunc) + drive + drive.conj().T


def _chain_phase(t: float, cfg: SystemConfig, dn: int, which: int) -> complex:
    # residual phase exp(i(dE_{n,n+dn} - Delta_i) t); identically 1 on resonance
    d = cfg.detunings[which - 1]
    return np.exp(1j * ((-dn) - cfg.lam ** 2 - d) * t)


def hamiltonian_approx(t: float, cfg: SystemConfig, embed: bool = False) -> np.ndarray:
    """Resonant transition-chain Hamiltonian for the target bundle size N.

    Chain basis (dimension 2N+1): |g,0>, |e,0~>, |g,1>, |e,1~>, ..., |e,N-1~>, |g,N>.
    With ``embed=True`` the same couplings are placed in the full dressed
    basis (|g,0..n_max>, |e,0~..n_max~>), every other entry zero.
    """
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    N = cfg.bundle_N
    n_max = cfg.trunc.n_max
    if N > n_max:
        raise ValueError(f"bundle_N={N} exceeds the Fock cutoff n_max={n_max}")
    fc = franck_condon_table(float(cfg.lam), n_max)
    om1 = pulse_amplitude(t, 1, cfg.pulses)
    om2 = pulse_amplitude(t, 2, cfg.pulses)
    ph1 = _chain_phase(t, cfg, 0, 1)
    ph2 = _chain_phase(t, cfg, 1, 2)
    if embed:
        dim = cfg.trunc.dim
        g = lambda n: n  # noqa: E731
        e = lambda n: n_max + 1 + n  # noqa: E731
    else:
        dim = 2 * N + 1
        g = lambda n: 2 * n  # noqa: E731
        e = lambda n: 2 * n + 1  # noqa: E731
    h = np.zeros((dim, dim), dtype=complex)
    for n in range(N):
        h[e(n), g(n)] = om1 * fc(n, n) * ph1
        h[e(n), g(n + 1)] = om2 * fc(n, n + 1) * ph2
    return h + h.conj().T


def resonant_hamiltonian(t: float, cfg: SystemConfig) -> np.ndarray:
    """Every resonant coupling of the interaction-picture drive, in the dressed basis.

    Unlike :func:`hamiltonian_approx` this is not cut at the bundle size, so
    it shows directly whether |g,N> decouples from |e,N~>.
    """
    n_max = cfg.trunc.n_max
    fc = franck_condon_table(float(cfg.lam), n_max)
    om1 = pulse_amplitude(t, 1, cfg.pulses) * _chain_phase(t, cfg, 0, 1)
    om2 = pulse_amplitude(t, 2, cfg.pulses) * _chain_phase(t, cfg, 1, 2)
    off = n_max + 1
    h = np.zeros((cfg.trunc.dim, cfg.trunc.dim), dtype=complex)
    for n in range(n_max + 1):
        h[off + n, n] = om1 * fc(n, n)
        if n < n_max:
            h[off + n, n + 1] = om2 * fc(n, n + 1)
    return h + h.conj().T


@dataclass(frozen=True)
class DressedOperators:
    """The model written in the eigenbasis of H_0, each qubit branch cut at n_max.

    Basis: |g,0..n_max> then |e,0~..n_max~> with |n~> = D(-lambda)|n>.  Here
    H_0 is exactly diagonal, the photon jump b + lambda s+s- is exactly I (x) b
    and s+s- is exactly the excited-branch projector, so every operator has
    exact transition frequencies.  ``W`` maps coefficients to the bare
    product basis; its excited block is the closest unitary (polar factor)
    to the truncated overlap matrix <m|n~>, which it matches away from the
    cutoff.  The qubit operators are W^dag s+- W.
    """

    energies: np.ndarray = field(repr=False)
    W: np.ndarray = field(repr=False)
    sigma_plus: np.ndarray = field(repr=False)
    sigma_minus: np.ndarray = field(repr=False)
    excited_proj: np.ndarray = field(repr=False)
    jump: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    number: np.ndarray = field(repr=False)


def overlap_unitary(lam: float, trunc: FockTruncation) -> np.ndarray:
    """Polar factor of F[m, n] = <m|n~>, m, n <= n_max."""
    f = franck_condon_table(float(lam), trunc.n_max).table.T
    u, _, vt = np.linalg.svd(f)
    return u @ vt


@lru_cache(maxsize=32)
def dressed_operators(lam: float, trunc: FockTruncation) -> DressedOperators:
    d = trunc.photon_dim
    n = np.arange(d, dtype=float)
    ops = system_operators(trunc)
    w = np.eye(trunc.dim, dtype=complex)
    w[d:, d:] = overlap_unitary(lam, trunc)
    sp = w.conj().T @ ops.sigma_plus @ w
    pe = ops.excited_proj.copy()
    jump = ops.b.copy()
    b = jump - lam * pe
    out = DressedOperators(
        energies=np.concatenate([n, n - lam ** 2]),
        W=w,
        sigma_plus=sp,
        sigma_minus=sp.conj().T.copy(),
        excited_proj=pe,
        jump=jump,
        b=b,
        number=b.conj().T @ b,
    )
    for name in out.__dataclass_fields__:
        getattr(out, name).flags.writeable = False
    return out


def chain_labels(N: int) -> list[str]:
    out = []
    for n in range(N):
        out += [f"g,{n}", f"e,{n}~"]
    return out + [f"g,{N}"]


def dressed_basis(cfg: SystemConfig) -> np.ndarray:
    """Unitary whose columns are |g,n> then D(-lambda)|n> on the excited branch."""
    d = cfg.trunc.photon_dim
    w = np.zeros((cfg.trunc.dim, cfg.trunc.dim), dtype=complex)
    w[:d, :d] = np.eye(d)
    w[d:, d:] = displacement_op(-cfg.lam, cfg.trunc)
    return w


__all__ = [
    "EXCITED", "GROUND", "PulseSchedule", "SystemConfig", "FranckCondonTable",
    "RWAWarning", "LambdaBracketError", "franck_condon", "franck_condon_table",
    "lambda_n", "pulse_amplitude", "resonance_detunings", "h0_eigen",
    "drive_coefficient", "check_rwa", "max_drive_amplitude", "static_hamiltonian",
    "static_eigensystem", "hamiltonian_lab", "hamiltonian_approx",
    "resonant_hamiltonian", "chain_labels", "dressed_basis", "DressedOperators",
    "dressed_operators", "overlap_unitary",
]
