"""Dressed-state master equation: right-hand sides and time integration.

Zero temperature::

    drho/dt = i[rho, H(t)] + kappa L[b + lambda s+s-] rho + gamma L[s-] rho

with L[o]rho = (2 o rho o^dag - o^dag o rho - rho o^dag o) / 2.  The
thermal set adds absorption through b^dag + lambda s+s-, pure dephasing
4 kappa T_b lambda^2 L[s+s-] and qubit absorption through s+, all in
their Schroedinger-picture form (temperatures in units of hbar omega_b / k_B).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .hilbert import DensityState, StateInvariantError, system_operators
from .integrator import IntegratorSettings, integrate
from .model import SystemConfig, dressed_operators, drive_coefficient, hamiltonian_lab, static_hamiltonian

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Channel:
    """One collapse channel: ``rate * L[op]``.  ``kind`` tags what a jump means."""

    name: str
    op: np.ndarray = field(repr=False)
    rate: float
    kind: str
    # the same operator in the H_0 eigenbasis with each branch cut at n_max;
    # None means "transform op", which carries the bare-cutoff artefacts
    dressed_op: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (np.isfinite(self.rate) and self.rate >= 0):
            raise ValueError(f"channel {self.name}: rate must be finite and non-negative")


@dataclass(frozen=True)
class DissipatorSet:
    channels: tuple[Channel, ...]
    variant: str = "zero_temp"
    T_b: float | None = None
    T_sigma: float | None = None

    def __post_init__(self):
        dims = {c.op.shape for c in self.channels}
        if len(dims) > 1:
            raise ValueError(f"collapse operators have mismatched shapes {dims}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def photon_channels(self) -> list[int]:
        return [i for i, c in enumerate(self.channels) if c.kind == "photon"]

    def active(self) -> list[Channel]:
        return [c for c in self.channels if c.rate > 0]


def bose_occupation(omega: float, T: float) -> float:
    """Mean thermal occupation 1/(exp(omega/T) - 1)."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    x = omega / T
    if x > 700:
        return 0.0
    return float(1.0 / np.expm1(x))


def zero_temperature_dissipators(cfg: SystemConfig) -> DissipatorSet:
    ops = system_operators(cfg.trunc)
    dr = dressed_operators(cfg.lam, cfg.trunc)
    jump = ops.b + cfg.lam * ops.excited_proj
    return DissipatorSet((
        Channel("photon", jump, cfg.kappa, "photon", dr.jump),
        Channel("qubit", ops.sigma_minus.copy(), cfg.gamma, "qubit", dr.sigma_minus),
    ))


def thermal_dissipators(cfg: SystemConfig, T_b: float, T_sigma: float) -> DissipatorSet:
    if not (T_b > 0 and T_sigma > 0):
        raise ValueError("bath temperatures must be positive")
    ops = system_operators(cfg.trunc)
    dr = dressed_operators(cfg.lam, cfg.trunc)
    nb = bose_occupation(1.0, T_b)
    n0 = bose_occupation(cfg.omega0, T_sigma)
    lam_p = cfg.lam * ops.excited_proj
    return DissipatorSet((
        Channel("photon", ops.b + lam_p, cfg.kappa * (nb + 1), "photon", dr.jump),
        Channel("photon_absorb", ops.b.conj().T + lam_p, cfg.kappa * nb, "photon_absorb",
                dr.jump.conj().T),
        Channel("dephasing", ops.excited_proj.copy(),
                4 * cfg.kappa * T_b * cfg.lam ** 2, "dephasing", dr.excited_proj),
        Channel("qubit", ops.sigma_minus.copy(), cfg.gamma * (n0 + 1), "qubit",
                dr.sigma_minus),
        Channel("qubit_absorb", ops.sigma_plus.copy(), cfg.gamma * n0, "qubit_absorb",
                dr.sigma_plus),
    ), variant="thermal", T_b=T_b, T_sigma=T_sigma)


def dissipator(rho, c: np.ndarray) -> np.ndarray:
    """(2 c rho c^dag - c^dag c rho - rho c^dag c) / 2."""
    r = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho)
    c = np.asarray(c)
    if r.shape != c.shape:
        raise ValueError(f"state shape {r.shape} does not match operator shape {c.shape}")
    cd = c.conj().T
    cdc = cd @ c
    return c @ r @ cd - 0.5 * (cdc @ r + r @ cdc)


def me_rhs(t: float, rho, cfg: SystemConfig, diss: DissipatorSet | None = None) -> np.ndarray:
    """Lab-frame master-equation right-hand side in the bare product basis."""
    r = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho)
    if r.shape != (cfg.trunc.dim, cfg.trunc.dim):
        raise ValueError(f"state shape {r.shape} does not match dimension {cfg.trunc.dim}")
    diss = diss if diss is not None else zero_temperature_dissipators(cfg)
    h = hamiltonian_lab(t, cfg)
    out = 1j * (r @ h - h @ r)
    for ch in diss.channels:
        if ch.rate:
            out = out + ch.rate * dissipator(r, ch.op)
    return out


def me_rhs_thermal(t: float, rho, cfg: SystemConfig, T_b: float, T_sigma: float) -> np.ndarray:
    return me_rhs(t, rho, cfg, thermal_dissipators(cfg, T_b, T_sigma))


class FrameGenerator:
    """Master-equation and no-jump generators in the interaction picture of H_0.

    ``frame="interaction"`` works in the H_0 eigenbasis {|g,n>, |e,n~>} with
    each qubit branch cut at n_max (see ``model.dressed_operators``).  There
    H_0 is diagonal with exact energies n and n - lambda^2, the photon jump
    lowers the energy by exactly one and s+s- is diagonal, so rotating by
    exp(i H_0 t) leaves only the slow dissipative dynamics between pulses
    and the adaptive step grows to ``max_step``.  Cutting the bare Fock
    space instead gives the top eigenstates off-resonant jump couplings that
    an explicit integrator aliases into a slow spurious growth.  Both
    cutoffs converge to the same model, the dressed one faster; states are
    reported in the bare basis through the unitary ``W``.

    ``frame="lab"`` integrates the literal bare-basis equation.
    """

    def __init__(self, cfg: SystemConfig, diss: DissipatorSet, frame: str = "interaction"):
        if frame not in ("interaction", "lab"):
            raise ValueError("frame must be 'interaction' or 'lab'")
        self.cfg = cfg
        self.diss = diss
        self.frame = frame
        d = cfg.trunc.dim
        if frame == "interaction":
            dr = dressed_operators(cfg.lam, cfg.trunc)
            self.energies = np.asarray(dr.energies)
            self.W = np.asarray(dr.W)
            self.S = np.asarray(dr.sigma_plus)
            wd = self.W.conj().T
            ops = [ch.dressed_op if ch.dressed_op is not None else wd @ ch.op @ self.W
                   for ch in diss.channels]
            self.static = np.zeros((d, d), dtype=complex)
        else:
            base = system_operators(cfg.trunc)
            self.energies = np.zeros(d)
            self.W = np.eye(d, dtype=complex)
            self.S = np.asarray(base.sigma_plus)
            ops = [ch.op for ch in diss.channels]
            self.static = static_hamiltonian(cfg.lam, cfg.trunc).copy()
        self.Sd = self.S.conj().T
        self.jumps = [np.sqrt(ch.rate) * np.asarray(o) for ch, o in zip(diss.channels, ops)]
        self.jumps_dag = [j.conj().T for j in self.jumps]
        self.active = [i for i, ch in enumerate(diss.channels) if ch.rate > 0]
        decay = sum((self.jumps_dag[i] @ self.jumps[i] for i in self.active),
                    np.zeros((d, d), dtype=complex))
        self.nonherm = -0.5j * decay
        self._base = self.static + self.nonherm

    def _drive(self, t: float) -> np.ndarray:
        c = drive_coefficient(t, self.cfg)
        return c * self.S + c.conjugate() * self.Sd

    def phases(self, t: float) -> np.ndarray:
        """exp(i E_j t); the frame rotation is diagonal in the eigenbasis."""
        return np.exp(1j * self.energies * t)

    def effective_generator(self, t: float) -> np.ndarray:
        """Non-Hermitian generator (without H_0 in the interaction frame)."""
        c = drive_coefficient(t, self.cfg)
        if c == 0:
            return self._base
        return self._base + c * self.S + c.conjugate() * self.Sd

    # density matrices --------------------------------------------------------------
    def to_frame(self, rho: np.ndarray, t: float) -> np.ndarray:
        ph = self.phases(t)
        return (self.W.conj().T @ rho @ self.W) * np.outer(ph, ph.conj())

    def from_frame(self, rho_f: np.ndarray, t: float) -> np.ndarray:
        ph = self.phases(t)
        return self.W @ (rho_f * np.outer(ph.conj(), ph)) @ self.W.conj().T

    def rhs(self, t: float, rho_f: np.ndarray) -> np.ndarray:
        ph = self.phases(t)
        rot = ph[:, None] * ph.conj()[None, :]
        rho = rho_f * rot.conj()
        m = -1j * (self.effective_generator(t) @ rho)
        for i in self.active:
            m += 0.5 * (self.jumps[i] @ rho @ self.jumps_dag[i])
        # M + M^dag is Hermitian bit for bit, and so is every real stage combination
        out = m + m.conj().T
        out *= rot
        return out

    # state vectors ----------------------------------------------------------------
    def vec_to_frame(self, psi: np.ndarray, t: float) -> np.ndarray:
        return (self.W.conj().T @ psi) * self.phases(t)

    def vec_from_frame(self, psi_f: np.ndarray, t: float) -> np.ndarray:
        return self.W @ (psi_f * self.phases(t).conj())

    def vec_rhs(self, t: float, psi_f: np.ndarray) -> np.ndarray:
        ph = self.phases(t)
        return (-1j * (self.effective_generator(t) @ (psi_f * ph.conj()))) * ph

    def propagator_rhs(self, t: float, k_f: np.ndarray) -> np.ndarray:
        ph = self.phases(t)
        return (-1j * (self.effective_generator(t) @ (k_f * ph.conj()[:, None]))) * ph[:, None]


class StateSequence(list):
    """DensityStates at the requested grid plus the worst invariant deviations seen."""

    def __init__(self, states=(), worst=None):
        super().__init__(states)
        self.worst = worst or {}

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self])


def default_settings(cfg: SystemConfig, settings: IntegratorSettings | None) -> IntegratorSettings:
    settings = settings or IntegratorSettings()
    if settings.max_step is None:
        settings = IntegratorSettings(settings.rtol, settings.atol,
                                      cfg.pulses.sigma / 10, settings.first_step)
    return settings


def evolve_master(rho0: DensityState, span, cfg: SystemConfig,
                  diss: DissipatorSet | None = None,
                  settings: IntegratorSettings | None = None,
                  grid=None, frame: str = "interaction",
                  check_trace: bool = True) -> StateSequence:
    """Propagate ``rho0`` over ``span`` and return states at every ``grid`` time.

    Every emitted state is checked for Hermiticity, trace (unless
    ``check_trace=False``, used for unnormalized regression states) and the
    eigenvalue floor; a violation aborts with :class:`StateInvariantError`.
    """
    t0, t1 = float(span[0]), float(span[1])
    if not t1 > t0:
        raise ValueError("span must be increasing")
    if not isinstance(rho0, DensityState):
        rho0 = DensityState(rho0, t0)
    if rho0.dim != cfg.trunc.dim:
        raise ValueError(f"initial state dimension {rho0.dim} != {cfg.trunc.dim}")
    rho0.check(check_trace)
    diss = diss if diss is not None else zero_temperature_dissipators(cfg)
    settings = default_settings(cfg, settings)
    grid = np.linspace(t0, t1, 201) if grid is None else np.asarray(grid, dtype=float)
    gen = FrameGenerator(cfg, diss, frame)
    states: list[DensityState] = []
    worst = {"hermiticity": 0.0, "trace_drift": 0.0, "min_eigenvalue": 0.0}

    def emit(t, rho_f):
        rho = gen.from_frame(rho_f, t)
        state = DensityState(rho, float(t))
        try:
            v = state.check(check_trace)
        except StateInvariantError:
            log.error("invariant violation at t=%s: %s", t, state.violations(check_trace))
            raise
        worst["hermiticity"] = max(worst["hermiticity"], v["hermiticity"])
        worst["min_eigenvalue"] = min(worst["min_eigenvalue"], v["min_eigenvalue"])
        if check_trace:
            worst["trace_drift"] = max(worst["trace_drift"], v["trace_drift"])
        states.append(state)

    integrate(gen.rhs, (t0, t1), gen.to_frame(rho0.matrix, t0), grid, settings, callback=emit)
    return StateSequence(states, worst)
