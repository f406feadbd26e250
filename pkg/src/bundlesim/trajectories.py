"""Monte-Carlo wavefunction unraveling of the dressed-state master equation.

A trajectory evolves the unnormalized state under the non-Hermitian
generator H(t) - (i/2) sum_k c_k^dag c_k until its squared norm falls to a
pre-drawn uniform threshold r.  The crossing time is localized by bisection
on the integrator's dense output, a channel is drawn with weights
||c_k psi||^2, and the state is renormalized after the jump.

Between jumps the evolution is linear and the same for every trajectory,
so ensembles can share a cache of no-jump propagators between grid nodes.
The norm can only decrease without jumps, so checking it at the nodes
never misses a crossing; intervals that contain one are re-integrated
adaptively from their left node.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .hilbert import GROUND, EXCITED, PureState, StateInvariantError, system_operators
from .integrator import DormandPrince, IntegratorSettings
from .lindblad import DissipatorSet, FrameGenerator, default_settings, zero_temperature_dissipators
from .model import SystemConfig, hamiltonian_lab
from .observables import TimeSeries, population_name

log = logging.getLogger(__name__)

JUMP_TIME_TOL = 1e-3
JUMP_NORM_TOL = 1e-6
MAX_BISECTIONS = 200


def split_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trajectory ``index``; depends only on (master_seed, index)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def effective_hamiltonian(t: float, cfg: SystemConfig, diss: DissipatorSet | None = None) -> np.ndarray:
    """H(t) - (i/2) sum_k rate_k c_k^dag c_k in the bare basis."""
    diss = diss if diss is not None else zero_temperature_dissipators(cfg)
    h = hamiltonian_lab(t, cfg).astype(complex)
    for ch in diss.channels:
        if ch.rate:
            h = h - 0.5j * ch.rate * (ch.op.conj().T @ ch.op)
    return h


@dataclass
class TrajectoryRecord:
    seed: int
    jumps: list[tuple[float, int]]
    observables: TimeSeries
    final_state: PureState
    channel_names: list[str] = field(default_factory=list)
    snapshots: dict[float, PureState] = field(default_factory=dict, repr=False)

    def jump_times(self, channel: int | None = None) -> np.ndarray:
        return np.array([t for t, k in self.jumps if channel is None or k == channel])

    def count(self, channel: int) -> int:
        return sum(1 for _, k in self.jumps if k == channel)

    def to_json(self, columns=None) -> str:
        """One line: seed, jumps and the sampled observables."""
        cols = self.observables.names if columns is None else list(columns)
        return json.dumps({
            "seed": self.seed,
            "channels": self.channel_names,
            "jumps": [[float(t), int(k)] for t, k in self.jumps],
            "grid": self.observables.grid.tolist(),
            "observables": {c: self.observables[c].tolist() for c in cols},
        }, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TrajectoryRecord":
        d = json.loads(line)
        ts = TimeSeries(np.array(d["grid"]), {k: np.array(v) for k, v in d["observables"].items()})
        return cls(int(d["seed"]), [(float(t), int(k)) for t, k in d["jumps"]], ts,
                   PureState(np.zeros(0)), list(d["channels"]))


class ObservableSet:
    """Bare-basis observables evaluated on dressed-basis state vectors."""

    def __init__(self, gen: FrameGenerator, n_show: int, extra: dict[str, np.ndarray] | None = None):
        trunc = gen.cfg.trunc
        self.W = gen.W
        self.trunc = trunc
        self.n_show = min(n_show, trunc.n_max)
        ops = system_operators(trunc)
        self.number_diag = np.real(np.diag(ops.number))
        self.pop_index = [(population_name(q, n), trunc.index(q, n))
                          for q in (GROUND, EXCITED) for n in range(self.n_show + 1)]
        self.extra = dict(extra or {})
        self.names = [n for n, _ in self.pop_index] + ["n_photon", "P_excited"] + list(self.extra)

    def __call__(self, psi_d: np.ndarray) -> np.ndarray:
        psi = self.W @ psi_d
        nrm2 = float(np.vdot(psi, psi).real)
        p = np.abs(psi) ** 2 / nrm2
        vals = [p[i] for _, i in self.pop_index]
        vals.append(float(p @ self.number_diag))
        vals.append(float(p[self.trunc.photon_dim:].sum()))
        for op in self.extra.values():
            vals.append(float(np.vdot(psi, op @ psi).real) / nrm2)
        return np.array(vals)


class NoJumpCache:
    """No-jump propagators K_i with psi_f(t_{i+1}) = K_i psi_f(t_i), in the interaction frame."""

    def __init__(self, gen: FrameGenerator, nodes, settings: IntegratorSettings):
        self.nodes = np.asarray(nodes, dtype=float)
        d = gen.cfg.trunc.dim
        eye = np.eye(d, dtype=complex)
        props = np.empty((self.nodes.size - 1, d, d), dtype=complex)
        s = DormandPrince(gen.propagator_rhs, self.nodes[0], eye, self.nodes[1], settings)
        for i in range(self.nodes.size - 1):
            if i:
                s.restart(eye, self.nodes[i + 1])
            while s.step():
                pass
            props[i] = s.y
        props.flags.writeable = False
        self.props = props


def refine_grid(grid, max_dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes containing ``grid`` with spacing <= max_dt, and the node index of each grid point."""
    grid = np.asarray(grid, dtype=float)
    nodes = [grid[0]]
    where = [0]
    for a, b in zip(grid[:-1], grid[1:]):
        k = max(1, int(np.ceil((b - a) / max_dt - 1e-9)))
        nodes.extend(a + (b - a) * np.arange(1, k) / k)
        nodes.append(b)
        where.append(len(nodes) - 1)
    return np.array(nodes), np.array(where)


class Unraveler:
    """Shared machinery for one (cfg, dissipators, grid); trajectories only add an RNG.

    Building one is the expensive part when ``cache_dt`` is set, so callers
    that need several passes over the same setup (an ensemble, then a rerun
    of one seed with state capture) should keep it.
    """

    def __init__(self, cfg: SystemConfig, diss: DissipatorSet, grid, settings: IntegratorSettings,
                 cache_dt: float | None, n_show: int, extra=None):
        self.cfg = cfg
        self.diss = diss
        self.gen = FrameGenerator(cfg, diss)
        self.settings = settings
        self.grid = np.asarray(grid, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 2 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least two points")
        self.obs = ObservableSet(self.gen, n_show, extra)
        self.active = self.gen.active
        self.cache = None
        if cache_dt is not None:
            nodes, self.where = refine_grid(self.grid, cache_dt)
            self.cache = NoJumpCache(self.gen, nodes, settings)

    # frame helpers
    def _dressed(self, y, t):
        return y * self.gen.phases(t).conj()

    def _jump(self, y, t, rng, jumps) -> np.ndarray:
        psi = self._dressed(y, t)
        cand = [self.gen.jumps[i] @ psi for i in self.active]
        w = np.array([float(np.vdot(c, c).real) for c in cand])
        total = w.sum()
        if not total > 0:
            raise StateInvariantError(f"t={t}: norm threshold crossed but no channel can fire")
        k = int(np.searchsorted(np.cumsum(w), rng.random() * total, side="right"))
        k = min(k, len(cand) - 1)
        new = cand[k] / np.sqrt(w[k])
        jumps.append((float(t), self.active[k]))
        return new * self.gen.phases(t)

    def _locate(self, seg, r: float) -> tuple[float, np.ndarray]:
        """Bisect the dense segment for ||y||^2 = r (norm above r at t_old, at most r at t_new)."""
        lo, hi = seg.t_old, seg.t_new
        t_best, y_best = hi, None
        for _ in range(MAX_BISECTIONS):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:  # interval at floating-point resolution
                break
            y = seg(mid)
            n2 = float(np.vdot(y, y).real)
            if n2 > r:
                lo = mid
            else:
                hi, t_best, y_best = mid, mid, y
            if abs(n2 - r) < JUMP_NORM_TOL and hi - lo < JUMP_TIME_TOL:
                return mid, y
        return t_best, (seg(t_best) if y_best is None else y_best)

    def _adaptive(self, t_a, t_b, y, r, rng, jumps, emit) -> tuple[np.ndarray, float]:
        """Integrate [t_a, t_b] with jumps; ``emit(t_lo, t_hi, f)`` records grid points in (t_lo, t_hi]."""
        t = t_a
        while t < t_b:
            solver = DormandPrince(self.gen.vec_rhs, t, y, t_b, self.settings)
            jumped = False
            while solver.step():
                n2 = float(np.vdot(solver.y, solver.y).real)
                seg = solver.dense_output()
                if n2 > r:
                    emit(solver.t_old, solver.t, seg)
                    continue
                tj, yj = self._locate(seg, r)
                emit(solver.t_old, tj, seg)
                y = self._jump(yj, tj, rng, jumps)
                r = rng.random()
                t = tj
                jumped = True
                break
            if not jumped:
                y, t = solver.y, solver.t
                if n2 <= 0:
                    raise StateInvariantError("state norm underflowed without a jump")
        return y, r

    def run(self, psi0: PureState, seed: int, capture=()) -> TrajectoryRecord:
        """One trajectory; ``capture`` lists times whose bare-basis states are kept.

        Capturing only reads the dense output, so the path is identical to a
        run without it.
        """
        rng = make_rng(seed)
        if psi0.dim != self.cfg.trunc.dim:
            raise ValueError(f"initial state dimension {psi0.dim} != {self.cfg.trunc.dim}")
        psi0.check()
        grid = self.grid
        t0 = grid[0]
        y = self.gen.vec_to_frame(psi0.amplitudes, t0)
        out = np.empty((grid.size, len(self.obs.names)))
        out[0] = self.obs(self._dressed(y, t0))
        k_next = [1]
        jumps: list[tuple[float, int]] = []
        cap = sorted(float(c) for c in capture)
        if cap and (cap[0] < t0 or cap[-1] > grid[-1]):
            raise ValueError("capture times must lie inside the grid span")
        snaps: dict[float, PureState] = {}
        c_next = [0]
        while c_next[0] < len(cap) and cap[c_next[0]] <= t0:
            snaps[cap[c_next[0]]] = self._bare(y, t0)
            c_next[0] += 1

        def emit(t_lo, t_hi, f):
            c = c_next[0]
            while c < len(cap) and cap[c] <= t_hi:
                if cap[c] > t_lo:
                    snaps[cap[c]] = self._bare(f(cap[c]) if callable(f) else f, cap[c])
                c += 1
            c_next[0] = c
            k = k_next[0]
            while k < grid.size and grid[k] <= t_hi:
                if grid[k] > t_lo:
                    yk = f(grid[k]) if callable(f) else f
                    out[k] = self.obs(self._dressed(yk, grid[k]))
                k += 1
            k_next[0] = k

        r = rng.random()
        if self.cache is None:
            y, r = self._adaptive(t0, grid[-1], y, r, rng, jumps, emit)
        else:
            nodes = self.cache.nodes
            for i in range(nodes.size - 1):
                y_new = self.cache.props[i] @ y
                if float(np.vdot(y_new, y_new).real) > r:
                    y_old, y = y, y_new
                    ta, tb = nodes[i], nodes[i + 1]
                    emit(ta, tb, lambda t: y if t == tb else self._propagate(y_old, ta, t))
                else:
                    y, r = self._adaptive(nodes[i], nodes[i + 1], y, r, rng, jumps, emit)
        psi_end = self.gen.vec_from_frame(y, grid[-1])
        final = PureState(psi_end / np.linalg.norm(psi_end), float(grid[-1]))
        ts = TimeSeries(grid, {n: out[:, j] for j, n in enumerate(self.obs.names)},
                        {"seed": seed})
        return TrajectoryRecord(seed, jumps, ts, final, self.diss.names, snaps)

    def _propagate(self, y, ta, tb) -> np.ndarray:
        """No-jump evolution of a copy, for reading states between cache nodes."""
        solver = DormandPrince(self.gen.vec_rhs, ta, y, tb, self.settings)
        while solver.step():
            pass
        return solver.y

    def _bare(self, y, t) -> PureState:
        psi = self.gen.vec_from_frame(y, t)
        return PureState(psi / np.linalg.norm(psi), float(t))


def _default_grid(span, n=201):
    return np.linspace(float(span[0]), float(span[1]), n)


def run_trajectory(psi0: PureState, span, cfg: SystemConfig, diss: DissipatorSet | None = None,
                   seed: int = 0, grid=None, settings: IntegratorSettings | None = None,
                   cache_dt: float | None = None, n_show: int | None = None,
                   extra_ops: dict[str, np.ndarray] | None = None) -> TrajectoryRecord:
    """One seeded quantum trajectory.

    ``cache_dt=None`` integrates adaptively throughout; a number builds the
    shared no-jump propagator cache with nodes at most that far apart
    (worth it only for ensembles, see :func:`run_ensemble`).
    """
    diss = diss if diss is not None else zero_temperature_dissipators(cfg)
    grid = _default_grid(span) if grid is None else grid
    _check_span(span, grid)
    n_show = cfg.bundle_N + 1 if n_show is None else n_show
    unr = Unraveler(cfg, diss, grid, default_settings(cfg, settings), cache_dt, n_show, extra_ops)
    return unr.run(psi0, seed)


def _check_span(span, grid):
    grid = np.asarray(grid, dtype=float)
    if abs(grid[0] - span[0]) > 1e-12 or abs(grid[-1] - span[1]) > 1e-12:
        raise ValueError("grid must start and end at the span endpoints")


@dataclass
class EnsembleResult:
    n_traj: int
    mean: TimeSeries
    stderr: TimeSeries
    jump_counts: dict[str, int]
    per_trajectory_counts: np.ndarray = field(repr=False, default=None)
    records: list[TrajectoryRecord] | None = field(repr=False, default=None)


def run_ensemble(psi0: PureState, span, cfg: SystemConfig, diss: DissipatorSet | None = None,
                 n_traj: int = 100, master_seed: int = 0, grid=None,
                 settings: IntegratorSettings | None = None, workers: int = 1,
                 cache_dt: float | None = 5.0, n_show: int | None = None,
                 extra_ops: dict[str, np.ndarray] | None = None,
                 keep_records: bool = False, record_file=None,
                 unraveler: Unraveler | None = None) -> EnsembleResult:
    """Mean and standard error over ``n_traj`` trajectories seeded by split(master_seed, k).

    Results are reduced in trajectory order, so they do not depend on
    ``workers`` or on scheduling.  A prebuilt ``unraveler`` (same cfg,
    dissipators and grid) skips the cache construction.
    """
    if int(n_traj) != n_traj or n_traj < 1:
        raise ValueError("n_traj must be a positive integer")
    diss = diss if diss is not None else zero_temperature_dissipators(cfg)
    grid = _default_grid(span) if grid is None else np.asarray(grid, dtype=float)
    _check_span(span, grid)
    n_show = cfg.bundle_N + 1 if n_show is None else n_show
    if unraveler is None:
        unr = Unraveler(cfg, diss, grid, default_settings(cfg, settings), cache_dt, n_show, extra_ops)
    else:
        unr = unraveler
        if unr.grid.shape != grid.shape or np.any(unr.grid != grid):
            raise ValueError("unraveler was built for a different grid")
    seeds = [split_seed(master_seed, k) for k in range(n_traj)]

    mean = None
    m2 = None
    counts = np.zeros((n_traj, len(diss.channels)), dtype=int)
    records = [] if keep_records else None

    def work(seed):
        return unr.run(psi0, seed)

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        it = pool.map(work, seeds) if pool else map(work, seeds)
        for k, rec in enumerate(it):
            x = np.column_stack([rec.observables[n] for n in unr.obs.names])
            if mean is None:
                mean = np.zeros_like(x)
                m2 = np.zeros_like(x)
            delta = x - mean
            mean += delta / (k + 1)
            m2 += delta * (x - mean)
            for _, ch in rec.jumps:
                counts[k, ch] += 1
            if record_file is not None:
                record_file.write(rec.to_json() + "\n")
            if records is not None:
                records.append(rec)
    finally:
        if pool:
            pool.shutdown()
    if n_traj > 1:
        se = np.sqrt(np.maximum(m2, 0) / (n_traj - 1) / n_traj)
    else:
        se = np.zeros_like(mean)
    names = unr.obs.names
    meta = {"n_traj": n_traj, "master_seed": master_seed}
    return EnsembleResult(
        n_traj=n_traj,
        mean=TimeSeries(grid, {n: mean[:, j] for j, n in enumerate(names)}, dict(meta)),
        stderr=TimeSeries(grid, {n: se[:, j] for j, n in enumerate(names)}, dict(meta)),
        jump_counts={name: int(counts[:, i].sum()) for i, name in enumerate(diss.names)},
        per_trajectory_counts=counts,
        records=records,
    )


# -- bundle structure ---------------------------------------------------------------

@dataclass
class BundleCheck:
    """Per-trajectory verdict on the N-photons-per-cycle pattern."""

    counts: list[int]          # photon jumps in each pulse cycle
    spreads: list[float]       # last minus first jump time in each cycle (0 if < 2 jumps)
    gaps: list[float]          # quiet time between consecutive bundles
    ok: bool


def cycle_jump_times(record: TrajectoryRecord, channels, period: float, n_cycles: int,
                     t_start: float = 0.0) -> list[np.ndarray]:
    """Jump times on ``channels`` split into cycles [t_start + kT, t_start + (k+1)T)."""
    times = np.array(sorted(t for t, k in record.jumps if k in set(channels)))
    out = []
    for k in range(n_cycles):
        a, b = t_start + k * period, t_start + (k + 1) * period
        out.append(times[(times >= a) & (times < b)])
    return out


def bundle_check(record: TrajectoryRecord, channels, period: float, n_cycles: int, N: int,
                 window: float, min_gap: float, t_start: float = 0.0) -> BundleCheck:
    """Exactly N photon jumps per cycle, spread within ``window``, bundles at least ``min_gap`` apart."""
    cyc = cycle_jump_times(record, channels, period, n_cycles, t_start)
    counts = [int(c.size) for c in cyc]
    spreads = [float(c[-1] - c[0]) if c.size > 1 else 0.0 for c in cyc]
    gaps = [float(b[0] - a[-1]) for a, b in zip(cyc[:-1], cyc[1:]) if a.size and b.size]
    ok = (all(n == N for n in counts) and all(s <= window for s in spreads)
          and all(g >= min_gap for g in gaps))
    return BundleCheck(counts, spreads, gaps, ok)
