"""Measured quantities: populations, photon number, g_N^(2) correlations, Wigner functions.

Photon statistics use the bare annihilation operator b by default.  While
the STIRAP keeps the qubit in |g> this is the lowering operator of the
coupled system; ``displaced=True`` swaps in b + lambda s+s- to measure the
difference.

Wigner convention: W(alpha) = (2/pi) Tr[D(-alpha) rho D(alpha) Pi], with Pi the
photon parity, normalized so that the integral over the plane is 1 and
W(0) = 2/pi for the vacuum.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import eval_genlaguerre, gammaln

from .hilbert import (EXCITED, GROUND, DensityState, FockTruncation, PureState,
                      StateInvariantError, system_operators)
from .integrator import IntegratorSettings
from .lindblad import DissipatorSet, evolve_master, zero_temperature_dissipators
from .model import SystemConfig, franck_condon_table

G2_FLOOR = 1e-12
CSV_FORMAT = "%.12g"


class UndefinedCorrelation(ValueError):
    """The normalizing moment <b^dag^N b^N> is below the floor."""


# -- time series -----------------------------------------------------------------

@dataclass
class TimeSeries:
    """Named real columns sampled on a common increasing time grid."""

    grid: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 1:
            raise ValueError("grid must be one-dimensional")
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        cols = {}
        for name, vals in self.columns.items():
            cols[name] = self._validated(name, vals)
        self.columns = cols

    def _validated(self, name, vals) -> np.ndarray:
        v = np.asarray(vals, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"column {name!r} has {v.shape[0] if v.ndim else 0} "
                             f"values for {self.grid.size} grid points")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"column {name!r} contains non-finite values")
        return v

    def add(self, name: str, vals) -> None:
        self.columns[name] = self._validated(name, vals)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def __len__(self):
        return self.grid.size

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def window(self, t0: float, t1: float) -> "TimeSeries":
        mask = (self.grid >= t0) & (self.grid <= t1)
        return TimeSeries(self.grid[mask], {k: v[mask] for k, v in self.columns.items()},
                          dict(self.meta))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + self.names)
            data = np.column_stack([self.grid] + [self.columns[k] for k in self.names])
            for row in data:
                w.writerow([CSV_FORMAT % x for x in row])
        return path

    def write_metadata(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.meta, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return cls(body[:, 0], {k: body[:, i + 1] for i, k in enumerate(head[1:])})


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


# -- operators -------------------------------------------------------------------

def _as_matrix(state) -> tuple[np.ndarray | None, np.ndarray | None]:
    if isinstance(state, PureState):
        return state.amplitudes, None
    if isinstance(state, DensityState):
        return None, state.matrix
    arr = np.asarray(state, dtype=complex)
    return (arr, None) if arr.ndim == 1 else (None, arr)


def _trunc_of(dim: int) -> FockTruncation:
    if dim % 2:
        raise ValueError(f"dimension {dim} is not qubit (x) Fock")
    return FockTruncation(dim // 2 - 1)


def lowering_operator(trunc: FockTruncation, lam: float = 0.0, displaced: bool = False):
    ops = system_operators(trunc)
    if displaced:
        return ops.b + lam * ops.excited_proj
    return ops.b


def moment(state, N: int, power: int = 1, lam: float = 0.0, displaced: bool = False) -> float:
    """<(b^dag)^(N power) b^(N power)>, i.e. the normally ordered moment of order N*power."""
    vec, mat = _as_matrix(state)
    dim = (vec if vec is not None else mat).shape[0]
    b = lowering_operator(_trunc_of(dim), lam, displaced)
    bk = np.linalg.matrix_power(b, N * power)
    if vec is not None:
        v = bk @ vec
        return float(np.vdot(v, v).real)
    return float(np.einsum("ij,ji->", bk @ mat, bk.conj().T).real)


def mean_photon_number(state) -> float:
    return moment(state, 1)


def populations(state, dressed: bool = False, lam: float | None = None) -> dict[tuple[int, int], float]:
    """Probabilities of the product states |q,n>.

    With ``dressed=True`` the excited branch is reported in the displaced
    basis |e,n~> (needs ``lam``), via the Franck-Condon overlaps.
    """
    vec, mat = _as_matrix(state)
    dim = (vec if vec is not None else mat).shape[0]
    trunc = _trunc_of(dim)
    d = trunc.photon_dim
    if vec is not None:
        diag = np.abs(vec) ** 2
    else:
        diag = np.real(np.diag(mat)).copy()
    out = {(GROUND, n): float(diag[n]) for n in range(d)}
    if dressed:
        if lam is None:
            raise ValueError("dressed populations need the coupling lam")
        fc = franck_condon_table(float(lam), trunc.n_max).table
        if vec is not None:
            amps = fc @ vec[d:]
            pe = np.abs(amps) ** 2
        else:
            pe = np.real(np.einsum("nm,mk,nk->n", fc, mat[d:, d:], fc))
        out.update({(EXCITED, n): float(pe[n]) for n in range(d)})
    else:
        out.update({(EXCITED, n): float(diag[d + n]) for n in range(d)})
    return out


def population_name(q: int, n: int) -> str:
    return f"P_{'ge'[q]}{n}"


def population_series(states, n_show: int | None = None, lam: float | None = None) -> TimeSeries:
    """P_g{n} and P_e{n} for n <= n_show, <b^dag b> and <s+s-> of a state sequence."""
    states = list(states)
    if not states:
        raise ValueError("no states")
    trunc = _trunc_of(states[0].dim)
    n_show = trunc.n_max if n_show is None else min(n_show, trunc.n_max)
    cols: dict[str, list[float]] = {}
    for st in states:
        pops = populations(st)
        for q in (GROUND, EXCITED):
            for n in range(n_show + 1):
                cols.setdefault(population_name(q, n), []).append(pops[(q, n)])
        cols.setdefault("n_photon", []).append(mean_photon_number(st))
        cols.setdefault("P_excited", []).append(
            sum(pops[(EXCITED, n)] for n in range(trunc.photon_dim)))
    ts = TimeSeries(np.array([s.time for s in states]), cols)
    if lam is not None:
        ts.meta["lambda"] = lam
    return ts


def reduced_photon_state(rho) -> DensityState:
    """Partial trace over the qubit."""
    r = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho, dtype=complex)
    t = rho.time if isinstance(rho, DensityState) else 0.0
    d = _trunc_of(r.shape[0]).photon_dim
    out = DensityState(r[:d, :d] + r[d:, d:], t)
    out.check()
    return out


# -- correlations ----------------------------------------------------------------

def g2_equal_time(state, N: int, displaced: bool = False, lam: float = 0.0,
                  floor: float = G2_FLOOR) -> float:
    """<b^dag^N b^dag^N b^N b^N> / <b^dag^N b^N>^2."""
    if N < 1:
        raise ValueError("N must be >= 1")
    den = moment(state, N, 1, lam, displaced)
    if den < floor:
        raise UndefinedCorrelation(f"<b^dag^{N} b^{N}> = {den:.3e} below floor {floor:g}")
    return moment(state, N, 2, lam, displaced) / den ** 2


def g2_series(states, N: int, displaced: bool = False, lam: float = 0.0,
              floor: float = G2_FLOOR) -> TimeSeries:
    """Equal-time g_N^(2)(t,t); grid points with an undefined value are left out."""
    ts, vals, dens = [], [], []
    for st in states:
        den = moment(st, N, 1, lam, displaced)
        if den < floor:
            continue
        ts.append(st.time)
        dens.append(den)
        vals.append(moment(st, N, 2, lam, displaced) / den ** 2)
    name = f"g2_N{N}"
    return TimeSeries(np.array(ts), {name: np.array(vals), f"moment_N{N}": np.array(dens)},
                      {"N": N, "floor": floor, "operator": "b+lambda*P" if displaced else "b"})


def g2_delayed(t1: float, tau_grid, N: int, cfg: SystemConfig,
               diss: DissipatorSet | None = None,
               settings: IntegratorSettings | None = None,
               rho0: DensityState | None = None, t0: float = 0.0,
               floor: float = G2_FLOOR) -> TimeSeries:
    """g_N^(2)(t1, t1 + tau) by quantum regression.

    The conditioned matrix b^N rho(t1) b^dag^N is propagated under the same
    master equation; delays where either moment falls below ``floor`` are
    left out.
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0 or tau[0] < 0 or np.any(np.diff(tau) <= 0):
        raise ValueError("tau_grid must be non-negative and strictly increasing")
    if t1 < t0:
        raise ValueError("t1 must not precede the initial time")
    diss = diss if diss is not None else zero_temperature_dissipators(cfg)
    if rho0 is None:
        rho0 = DensityState(np.zeros((cfg.trunc.dim,) * 2, dtype=complex), t0)
        rho0.matrix[0, 0] = 1.0
    if t1 > t0:
        rho_t1 = evolve_master(rho0, (t0, t1), cfg, diss, settings, grid=[t0, t1])[-1]
    else:
        rho_t1 = rho0
    den1 = moment(rho_t1, N)
    if den1 < floor:
        raise UndefinedCorrelation(f"<b^dag^{N} b^{N}>(t1) = {den1:.3e} below floor")
    bN = np.linalg.matrix_power(system_operators(cfg.trunc).b, N)
    # the equation is linear and trace preserving, so the conditioned matrix
    # is propagated as a unit-trace state and its weight den1 restored below
    x = bN @ rho_t1.matrix @ bN.conj().T / den1
    cond = DensityState(0.5 * (x + x.conj().T), t1)  # drop the rounding-level skew part
    times = t1 + tau
    if tau[-1] > 0:
        span = (t1, times[-1])
        grid = times if tau[0] == 0 else np.concatenate([[t1], times])
        c_states = evolve_master(cond, span, cfg, diss, settings, grid=grid)
        u_states = evolve_master(rho_t1, span, cfg, diss, settings, grid=grid)
        if tau[0] != 0:
            c_states, u_states = c_states[1:], u_states[1:]
    else:
        c_states, u_states = [cond], [rho_t1]
    keep, vals = [], []
    for k, (c, u) in enumerate(zip(c_states, u_states)):
        num = moment(c, N) * den1
        den2 = moment(u, N)
        if den2 < floor:
            continue
        keep.append(k)
        vals.append(num / (den1 * den2))
    return TimeSeries(tau[keep], {f"g2_N{N}": np.array(vals)},
                      {"N": N, "t1": t1, "floor": floor})


def locate_extremum_times(series: TimeSeries, column: str, window, kind: str = "max") -> float:
    """Time of the max (or min) of ``column`` inside ``window``; ties go to the earliest time."""
    if kind not in ("max", "min"):
        raise ValueError("kind must be 'max' or 'min'")
    t0, t1 = window
    mask = (series.grid >= t0) & (series.grid <= t1)
    if not mask.any():
        raise ValueError(f"no grid points inside window {window}")
    vals = series[column][mask]
    i = int(np.argmax(vals) if kind == "max" else np.argmin(vals))
    return float(series.grid[mask][i])


# -- phase space -----------------------------------------------------------------

@dataclass
class WignerField:
    re: np.ndarray
    im: np.ndarray
    values: np.ndarray  # values[i, j] at alpha = re[j] + 1j * im[i]
    meta: dict = field(default_factory=lambda: {"convention": "(2/pi) Tr[D(-a) rho D(a) parity]"})

    def integral(self) -> float:
        return float(trapezoid(trapezoid(self.values, self.re, axis=1), self.im))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["im\\re"] + [CSV_FORMAT % x for x in self.re])
            for y, row in zip(self.im, self.values):
                w.writerow([CSV_FORMAT % y] + [CSV_FORMAT % v for v in row])
        return path


def displacement_elements(beta: np.ndarray, n_max: int) -> np.ndarray:
    """<n|D(beta)|m> for complex ``beta`` of any shape; returns shape (n, m, *beta.shape).

    Closed form sqrt(m!/n!) beta^(n-m) exp(-|beta|^2/2) L_m^(n-m)(|beta|^2)
    for n >= m; the other triangle uses (-beta*) in place of beta.
    """
    beta = np.asarray(beta, dtype=complex)
    x = np.abs(beta) ** 2
    env = np.exp(-0.5 * x)
    d = n_max + 1
    out = np.empty((d, d) + beta.shape, dtype=complex)
    for n in range(d):
        for m in range(d):
            lo, hi = min(n, m), max(n, m)
            k = hi - lo
            base = beta if n >= m else -np.conj(beta)
            pref = math.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)))
            out[n, m] = pref * base ** k * env * eval_genlaguerre(lo, k, x)
    return out


def wigner(rho_b, re=None, im=None) -> WignerField:
    """Wigner function of a photon-space density matrix on a rectangular grid."""
    r = rho_b.matrix if isinstance(rho_b, DensityState) else np.asarray(rho_b, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("photon density matrix must be square")
    re = np.linspace(-3, 3, 101) if re is None else np.asarray(re, dtype=float)
    im = np.linspace(-3, 3, 101) if im is None else np.asarray(im, dtype=float)
    alpha = re[None, :] + 1j * im[:, None]
    n_max = r.shape[0] - 1
    dmat = displacement_elements(2 * alpha, n_max)
    parity = (-1.0) ** np.arange(n_max + 1)
    # W = (2/pi) sum_{m,n} rho_mn (-1)^m <n|D(2 alpha)|m>
    w = np.einsum("mn,m,nm...->...", r, parity, dmat)
    return WignerField(re, im, (2 / np.pi) * w.real)


# -- density-matrix snapshots -----------------------------------------------------

@dataclass
class DensitySnapshot:
    time: float
    labels: list[str]
    magnitudes: np.ndarray

    def dominant_diagonal(self) -> str:
        return self.labels[int(np.argmax(np.diag(self.magnitudes)))]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row\\col"] + self.labels)
            for lab, row in zip(self.labels, self.magnitudes):
                w.writerow([lab] + [CSV_FORMAT % v for v in row])
        return path


def density_snapshot(rho, n_show: int | None = None) -> DensitySnapshot:
    """|rho_ij| with basis labels, optionally restricted to photon numbers <= n_show."""
    r = rho.matrix if isinstance(rho, DensityState) else np.asarray(rho, dtype=complex)
    t = rho.time if isinstance(rho, DensityState) else 0.0
    trunc = _trunc_of(r.shape[0])
    idx = list(range(trunc.dim))
    if n_show is not None:
        idx = [trunc.index(q, n) for q in (GROUND, EXCITED) for n in range(min(n_show, trunc.n_max) + 1)]
    mags = np.abs(r[np.ix_(idx, idx)])
    if np.max(mags, initial=0.0) > 1 + 1e-10:
        raise StateInvariantError("density-matrix element exceeds 1 in magnitude")
    return DensitySnapshot(float(t), [trunc.label(i) for i in idx], mags)
