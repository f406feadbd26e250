"""Execute a RunConfig: master equation and/or trajectory ensemble, files, manifest.

Outputs land in one directory.  CSVs depend only on (config, seed); the
manifest additionally records wall time and a sha256 per emitted file and
is written last, only after every invariant check has passed.  When a
state invariant fails mid-run, the files written so far are removed.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dump
from .hilbert import GROUND, DensityState, FockTruncation, StateInvariantError, basis_state
from .lindblad import (DissipatorSet, StateSequence, default_settings, evolve_master,
                       thermal_dissipators, zero_temperature_dissipators)
from .model import pulse_amplitude
from .observables import (TimeSeries, density_snapshot, g2_delayed,
                          g2_series, locate_extremum_times, population_name, population_series,
                          reduced_photon_state, wigner)
from .trajectories import (EnsembleResult, TrajectoryRecord, Unraveler, bundle_check,
                           run_ensemble)
from . import svgplot

log = logging.getLogger(__name__)

BUNDLE_WINDOW_KAPPAS = 10.0   # bundle jumps must fall within 10/kappa
QUIET_FRACTION = 0.1          # consecutive bundles at least 0.1 T apart


class RunAborted(RuntimeError):
    """A numerical invariant failed; partial outputs were removed."""


class TruncationError(StateInvariantError):
    """Key scalars moved by more than the audit tolerance at a larger Fock cutoff."""


class OutputDir:
    """Tracks every file written so it can be hashed or rolled back."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        if p not in self.files:
            self.files.append(p)
        return p

    def discard(self) -> None:
        for p in self.files:
            p.unlink(missing_ok=True)
        self.files.clear()

    def write_manifest(self, config_text: str, seed: int, wall: float, extra=None) -> Path:
        entries = []
        for p in self.files:
            entries.append({"file": p.name, "sha256": sha256_of(p), "bytes": p.stat().st_size})
        man = {
            "code_version": __version__,
            "master_seed": seed,
            "wall_time_s": round(wall, 3),
            "config": config_text,
            "outputs": entries,
        }
        man.update(extra or {})
        p = self.root / "manifest.json"
        p.write_text(json.dumps(man, indent=2) + "\n")
        return p


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def verify_manifest(root) -> list[str]:
    """Names of manifest entries whose digest no longer matches (empty when intact)."""
    root = Path(root)
    man = json.loads((root / "manifest.json").read_text())
    bad = []
    for e in man["outputs"]:
        p = root / e["file"]
        if not p.exists() or sha256_of(p) != e["sha256"]:
            bad.append(e["file"])
    return bad


def dissipators_for(cfg: RunConfig) -> DissipatorSet:
    if cfg.thermal:
        return thermal_dissipators(cfg.system, cfg.thermal["T_b"], cfg.thermal["T_sigma"])
    return zero_temperature_dissipators(cfg.system)


@dataclass
class RunResult:
    out_dir: Path
    files: list[Path]
    summary: dict
    states: StateSequence | None = field(default=None, repr=False)
    populations: TimeSeries | None = field(default=None, repr=False)
    correlations: dict = field(default_factory=dict, repr=False)
    delayed: dict = field(default_factory=dict, repr=False)
    ensemble: EnsembleResult | None = field(default=None, repr=False)
    bundles: list = field(default_factory=list, repr=False)
    display: TrajectoryRecord | None = field(default=None, repr=False)
    snapshots: list = field(default_factory=list, repr=False)


def _write_series(out: OutputDir, ts: TimeSeries, stem: str, meta: dict) -> None:
    ts.to_csv(out.path(f"{stem}.csv"))
    ts.meta.update(meta)
    ts.write_metadata(out.path(f"{stem}.meta.json"))


def _meta(cfg: RunConfig, seed: int) -> dict:
    s = cfg.system
    return {"config": cfg.name, "lambda": s.lam, "kappa": s.kappa, "gamma": s.gamma,
            "bundle_N": s.bundle_N, "n_max": s.trunc.n_max, "seed": seed,
            "rtol": cfg.run["rtol"], "atol": cfg.run["atol"]}


def execute(cfg: RunConfig, out_dir, seed: int | None = None, n_traj: int | None = None,
            workers: int = 1, plots: bool = True) -> RunResult:
    """Run ``cfg`` and write everything into ``out_dir``."""
    start = time.perf_counter()
    seed = cfg.run["seed"] if seed is None else int(seed)
    if n_traj is not None:
        cfg.run["n_traj"] = int(n_traj)
        if cfg.run["mode"] == "master" and n_traj > 0:
            cfg.run["mode"] = "both"
    out = OutputDir(out_dir)
    result = RunResult(out.root, out.files, {})
    try:
        _execute(cfg, out, seed, workers, plots, result)
    except StateInvariantError as exc:
        out.discard()
        raise RunAborted(f"invariant violation, outputs removed: {exc}") from exc
    wall = time.perf_counter() - start
    out.write_manifest(dump(cfg), seed, wall)
    return result


def _execute(cfg: RunConfig, out: OutputDir, seed: int, workers: int, plots: bool,
             res: RunResult) -> None:
    s = cfg.system
    r = cfg.run
    N = s.bundle_N
    n_show = min(N + 1, s.trunc.n_max)
    diss = dissipators_for(cfg)
    grid = cfg.grid()
    span = (grid[0], grid[-1])
    psi0 = basis_state(s.trunc, *r["initial"])
    meta = _meta(cfg, seed)
    summary: dict = {"config": cfg.name, "lambda": s.lam, "bundle_N": N}
    pulses = {"Omega1": pulse_amplitude(grid, 1, s.pulses), "Omega2": pulse_amplitude(grid, 2, s.pulses)}
    target = population_name(GROUND, N)

    if r["mode"] in ("master", "both"):
        states = evolve_master(DensityState(psi0.to_density().matrix, span[0]), span, s, diss, cfg.settings, grid=grid)
        res.states = states
        pops = population_series(states, n_show, s.lam)
        for k, v in pulses.items():
            pops.add(k, v)
        res.populations = pops
        _write_series(out, pops, "populations", meta)
        summary["master"] = {
            f"max_{target}": float(pops[target].max()),
            f"final_{target}": float(pops[target][-1]),
            "final_trace_drift": abs(float(np.real(np.trace(states[-1].matrix))) - 1.0),
            "worst": dict(states.worst),
        }
        if r["audit"]:
            summary["audit"] = truncation_audit(cfg, pops, diss_for=dissipators_for)
        for n in r["g2_orders"]:
            g = g2_series(states, n)
            res.correlations[n] = g
            _write_series(out, g, f"g2_N{n}", meta)
        if r["g2_orders"] and r["g2_tau_max"]:
            _delayed(cfg, out, states, diss, meta, res, summary)
        for t in r["snapshot_times"]:
            k = int(np.argmin(np.abs(grid - float(t))))
            _snapshot(out, states[k], f"master_t{grid[k]:g}", n_show, res, plots)
        if plots:
            _plot_master(cfg, out, res)

    if r["mode"] in ("trajectories", "both"):
        _trajectories(cfg, out, psi0, span, grid, diss, seed, workers, meta, res, summary, plots)

    out.path("summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    res.summary = summary


def audit_scalars(pops: TimeSeries, N: int) -> dict[str, float]:
    target = population_name(GROUND, N)
    return {f"max_{target}": float(pops[target].max()),
            f"final_{target}": float(pops[target][-1]),
            "final_n_photon": float(pops["n_photon"][-1])}


def truncation_audit(cfg: RunConfig, pops: TimeSeries, diss_for=dissipators_for) -> dict:
    """Recompute the key scalars at ``run.audit_n_max`` and compare.

    Raises TruncationError when any of them moves by more than
    ``run.audit_tol``; the run is then treated like an invariant failure.
    """
    r = cfg.run
    s = cfg.system
    n_hi = max(r["audit_n_max"], s.trunc.n_max + 1)
    big = RunConfig(cfg.name, s.with_(trunc=FockTruncation(n_hi)), r, cfg.thermal, cfg.source)
    psi0 = basis_state(big.system.trunc, *r["initial"])
    grid = pops.grid
    states = evolve_master(DensityState(psi0.to_density().matrix, grid[0]), (grid[0], grid[-1]),
                           big.system, diss_for(big), cfg.settings, grid=grid)
    hi = audit_scalars(population_series(states, s.bundle_N), s.bundle_N)
    lo = audit_scalars(pops, s.bundle_N)
    diff = {k: abs(hi[k] - lo[k]) for k in lo}
    worst = max(diff.values())
    report = {"n_max": s.trunc.n_max, "audit_n_max": n_hi, "tol": r["audit_tol"],
              "max_difference": worst, "values": lo, "values_audit": hi}
    if worst > r["audit_tol"]:
        raise TruncationError(f"truncation audit failed: scalars move by {worst:.3e} "
                              f"between n_max={s.trunc.n_max} and {n_hi}: {diff}")
    return report


def _delayed(cfg, out, states, diss, meta, res, summary):
    s, r = cfg.system, cfg.run
    grid = states.times
    period = s.pulses.period
    if r["g2_cycle"] is None:  # last cycle inside the run
        window = (max(grid[0], grid[-1] - period), grid[-1])
    else:
        window = (r["g2_cycle"] * period, (r["g2_cycle"] + 1) * period)
    tau = np.linspace(0.0, r["g2_tau_max"], r["g2_tau_points"])
    by_time = {st.time: st for st in states}
    summary["delayed"] = {}
    for n in r["g2_orders"]:
        g = res.correlations[n]
        kind = "max" if n == 1 else "min"
        t1 = locate_extremum_times(g, f"g2_N{n}", window, kind)
        d = g2_delayed(t1, tau, n, s, diss, cfg.settings, rho0=by_time[t1], t0=t1)
        res.delayed[n] = d
        _write_series(out, d, f"g2_delayed_N{n}", dict(meta, t1=t1, extremum=kind))
        col = d[f"g2_N{n}"]
        summary["delayed"][f"N{n}"] = {"t1": t1, "g_equal": float(col[0]),
                                       "g_min": float(col[1:].min()), "g_max": float(col[1:].max())}


def _snapshot(out, state, stem, n_show, res, plots, psi=None):
    rho = state if psi is None else psi.to_density()
    snap = density_snapshot(rho, n_show)
    snap.to_csv(out.path(f"density_{stem}.csv"))
    w = wigner(reduced_photon_state(rho))
    w.to_csv(out.path(f"wigner_{stem}.csv"))
    res.snapshots.append((stem, snap, w))
    if plots:
        svgplot.matrix_plot(out.path(f"density_{stem}.svg"), snap.labels, snap.magnitudes,
                            title=f"|rho| at t = {snap.time:g}")
        svgplot.heatmap(out.path(f"wigner_{stem}.svg"), w.re, w.im, w.values,
                        title=f"Wigner function at t = {snap.time:g}")


def _plot_master(cfg, out, res):
    N = cfg.system.bundle_N
    pops = res.populations
    scale = cfg.run["time_scale"]
    xlabel = "omega_b t" if scale == 1 else f"omega_b t / {scale:g}"
    curves = {f"P_g{n}": pops[f"P_g{n}"] for n in range(N + 1)}
    svgplot.line_plot(out.path("populations.svg"), pops.grid, curves, title=cfg.name,
                      xlabel=xlabel, ylabel="population", x_scale=scale, ylim=(-0.02, 1.02))
    svgplot.line_plot(out.path("pulses.svg"), pops.grid,
                      {"Omega1": pops["Omega1"], "Omega2": pops["Omega2"]},
                      title="drive envelopes", xlabel=xlabel, ylabel="Omega / omega_b", x_scale=scale)
    if res.correlations:
        grid = res.states.times
        curves = {}
        for n, g in res.correlations.items():
            # undefined points are absent from the series; plot on the common grid with gaps filled
            curves[f"g{n}(t,t)"] = np.interp(grid, g.grid, g[f"g2_N{n}"])
        svgplot.line_plot(out.path("g2_equal_time.svg"), grid, curves, title="equal-time correlations",
                          xlabel=xlabel, ylabel="g_N^(2)(t,t)", x_scale=scale)
    for n, d in res.delayed.items():
        svgplot.line_plot(out.path(f"g2_delayed_N{n}.svg"), d.grid, {f"N={n}": d[f"g2_N{n}"]},
                          title=f"g_{n}^(2)(t1, t1+tau), t1 = {d.meta['t1']:g}",
                          xlabel="omega_b tau", ylabel="g_N^(2)")


def _trajectories(cfg, out, psi0, span, grid, diss, seed, workers, meta, res, summary, plots):
    s, r = cfg.system, cfg.run
    N = s.bundle_N
    n_show = min(N + 1, s.trunc.n_max)
    settings = default_settings(s, cfg.settings)
    unr = Unraveler(s, diss, grid, settings, r["cache_dt"], n_show)
    with open(out.path("trajectories.jsonl"), "w") as fh:
        ens = run_ensemble(psi0, span, s, diss, n_traj=r["n_traj"], master_seed=seed, grid=grid,
                           workers=workers, keep_records=True, record_file=fh, unraveler=unr)
    res.ensemble = ens
    _write_series(out, ens.mean, "ensemble_mean", dict(meta, n_traj=ens.n_traj))
    _write_series(out, ens.stderr, "ensemble_stderr", dict(meta, n_traj=ens.n_traj))
    with open(out.path("jump_counts.csv"), "w") as fh:
        fh.write("trajectory,seed," + ",".join(diss.names) + "\n")
        for k, (rec, row) in enumerate(zip(ens.records, ens.per_trajectory_counts)):
            fh.write(f"{k},{rec.seed}," + ",".join(str(int(v)) for v in row) + "\n")

    photon = diss.photon_channels()
    n_cycles = s.pulses.n_pulses
    window = BUNDLE_WINDOW_KAPPAS / s.kappa if s.kappa > 0 else np.inf
    checks = [bundle_check(rec, photon, s.pulses.period, n_cycles, N, window,
                           QUIET_FRACTION * s.pulses.period, grid[0]) for rec in ens.records]
    res.bundles = checks
    summary["trajectories"] = {
        "n_traj": ens.n_traj,
        "jump_counts": ens.jump_counts,
        "bundle_fraction": float(np.mean([c.ok for c in checks])),
        "photon_jumps_per_cycle": _histogram([n for c in checks for n in c.counts]),
        f"max_mean_{population_name(GROUND, N)}": float(ens.mean[population_name(GROUND, N)].max()),
    }

    k_disp = select_display(ens.records, checks, s, photon)
    disp = ens.records[k_disp]
    instants = cascade_instants(disp, photon, s)
    if instants:
        disp = unr.run(psi0, disp.seed, capture=instants)
        for label, t in zip(("before", "between", "after"), instants):
            _snapshot(out, None, f"trajectory_{label}", n_show, res, plots, psi=disp.snapshots[t])
    res.display = disp
    summary["trajectories"]["display"] = {"index": k_disp, "seed": disp.seed,
                                          "photon_jumps": [t for t, k in disp.jumps if k in photon],
                                          "snapshot_times": instants}
    _write_series(out, disp.observables, "trajectory_display", dict(meta, index=k_disp, seed=disp.seed))
    if plots:
        scale = r["time_scale"]
        xlabel = "omega_b t" if scale == 1 else f"omega_b t / {scale:g}"
        obs = disp.observables
        marks = {lab: t for lab, t in zip(("1", "2", "3"), instants)}
        svgplot.line_plot(out.path("trajectory_populations.svg"), obs.grid,
                          {f"P_g{n}": obs[f"P_g{n}"] for n in range(N + 1)},
                          title=f"{cfg.name}: trajectory {k_disp}", xlabel=xlabel, ylabel="population",
                          x_scale=scale, ylim=(-0.02, 1.02), markers=marks)
        svgplot.line_plot(out.path("trajectory_photon_number.svg"), obs.grid,
                          {"<b^dag b>": obs["n_photon"]}, title=f"{cfg.name}: trajectory {k_disp}",
                          xlabel=xlabel, ylabel="<b^dag b>", x_scale=scale)
        svgplot.line_plot(out.path("ensemble_populations.svg"), ens.mean.grid,
                          {f"P_g{n}": ens.mean[f"P_g{n}"] for n in range(N + 1)},
                          title=f"{cfg.name}: mean of {ens.n_traj} trajectories", xlabel=xlabel,
                          ylabel="population", x_scale=scale, ylim=(-0.02, 1.02))


def _histogram(vals) -> dict[str, int]:
    out: dict[str, int] = {}
    for v in sorted(vals):
        out[str(v)] = out.get(str(v), 0) + 1
    return out


def select_display(records, checks, cfg, photon_channels) -> int:
    """Index of the trajectory to display.

    The first one (in seed order) with the bundle pattern in every cycle
    and every bundle starting only after that cycle's pulses have passed;
    failing that, the first with the bundle pattern; failing that, 0.
    """
    sched = cfg.pulses
    pulse_end = max(sched.t1, sched.t2) + 3 * sched.sigma
    chans = set(photon_channels)
    for k, (rec, c) in enumerate(zip(records, checks)):
        if not c.ok:
            continue
        times = np.array([t for t, ch in rec.jumps if ch in chans])
        late = all(
            np.all(times[(times >= m * sched.period) & (times < (m + 1) * sched.period)]
                   > m * sched.period + pulse_end)
            for m in range(sched.n_pulses))
        if late:
            return k
    for k, c in enumerate(checks):
        if c.ok:
            return k
    return 0


def cascade_instants(rec: TrajectoryRecord, photon_channels, cfg) -> list[float]:
    """Three instants around the first cycle's emission: before the first photon
    jump, midway between the first two, and after the last of the bundle."""
    sched = cfg.pulses
    times = sorted(t for t, k in rec.jumps if k in set(photon_channels) and t < sched.period)
    if len(times) < 2:
        return []
    pulse_end = max(sched.t1, sched.t2) + 3 * sched.sigma
    first, second = times[0], times[1]
    last = times[min(cfg.bundle_N, len(times)) - 1]
    before = 0.5 * (pulse_end + first) if first > pulse_end else first - 1.0
    between = 0.5 * (first + second)
    after = last + 1.0
    return [float(before), float(between), float(after)]
