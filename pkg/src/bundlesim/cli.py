"""Command-line driver.

    bundlesim lambda N [--tol TOL]
    bundlesim run --config FILE|PRESET [--out DIR] [--seed S] [--traj N] [--threads K]
    bundlesim reproduce {1d,2,3,4,5} [--out DIR] [--traj N] [--threads K]
    bundlesim sweep --config FILE|PRESET --param model.kappa --values 0.0004,0.0006

Exit codes: 0 success, 2 configuration error, 3 numerical invariant
failure, 4 a physics check of ``reproduce`` failed.  The default output
directory is $BUNDLESIM_OUT, or ./bundlesim_out.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config, load_preset, parse_config, preset_names
from .model import LambdaBracketError, lambda_n
from .observables import population_name
from .runner import RunAborted, execute
from . import svgplot

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_CHECK = 0, 2, 3, 4
OUT_ENV = "BUNDLESIM_OUT"

log = logging.getLogger("bundlesim")

FIGURES = {
    "1d": ["fig1d"],
    "2": ["fig2a", "fig2b", "fig2c"],
    "3": ["fig3"],
    "4": ["fig4a", "fig4b"],
    "5": ["fig5abc", "fig5de"],
}


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "bundlesim_out"))


def resolve_config(name: str):
    """A path to a YAML file, or the name of a bundled preset."""
    p = Path(name)
    if p.exists():
        return load_config(p)
    if name in preset_names():
        return load_preset(name)
    raise ConfigError(f"no config file or preset named {name!r} "
                      f"(presets: {', '.join(preset_names())})")


# -- lambda -------------------------------------------------------------------------

def cmd_lambda(args) -> int:
    if args.N < 1:
        print("error: N must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        val = lambda_n(args.N, args.tol)
    except LambdaBracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"{val:.6f}")
    return EXIT_OK


# -- run ----------------------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = resolve_config(args.config)
    out = Path(args.out) if args.out else default_out() / cfg.name
    res = execute(cfg, out, seed=args.seed, n_traj=args.traj, workers=args.threads)
    print(json.dumps(res.summary, indent=2, sort_keys=True))
    print(f"wrote {len(res.files)} files + manifest.json to {out}")
    return EXIT_OK


# -- sweep --------------------------------------------------------------------------

def _set_path(data: dict, path: str, value) -> None:
    sec, _, key = path.partition(".")
    if not key or sec not in ("model", "pulses", "run"):
        raise ConfigError(f"unknown parameter path {path!r}; use section.field, e.g. model.kappa")
    from .config import SECTIONS
    known = {f[0]: f[1] for f in SECTIONS[sec]}
    if key not in known or known[key] not in (float, int, "lambda"):
        raise ConfigError(f"unknown parameter path {path!r}: not a numeric field")
    data.setdefault(sec, {})[key] = value


def sweep_configs(cfg, param: str, values):
    for v in values:
        data = copy.deepcopy(cfg.source)
        _set_path(data, param, v)
        yield v, parse_config(data, f"{cfg.name}_{param.split('.')[-1]}_{v:g}")


def sweep_row(value, res, cfg) -> dict:
    N = cfg.system.bundle_N
    row = {"value": value}
    m = res.summary.get("master")
    if m:
        row[f"max_{population_name(0, N)}"] = m[f"max_{population_name(0, N)}"]
        row["final_trace_drift"] = m["final_trace_drift"]
    t = res.summary.get("trajectories")
    if t:
        for k, v in t["jump_counts"].items():
            row[f"jumps_{k}"] = v
        row["bundle_fraction"] = t["bundle_fraction"]
    return row


def cmd_sweep(args) -> int:
    cfg = resolve_config(args.config)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: expected comma-separated numbers, got {args.values!r}") from None
    if not values:
        raise ConfigError("--values: empty list")
    out = Path(args.out) if args.out else default_out() / f"{cfg.name}_sweep"
    configs = list(sweep_configs(cfg, args.param, values))  # validate all before running any
    rows = []
    for i, (v, c) in enumerate(configs):
        res = execute(c, out / f"point_{i:02d}", seed=args.seed, n_traj=args.traj, workers=args.threads)
        rows.append(sweep_row(v, res, c))
        print(json.dumps(rows[-1]))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


# -- reproduce ----------------------------------------------------------------------

class Checks:
    def __init__(self):
        self.items: list[tuple[str, bool, str]] = []

    def add(self, name: str, ok: bool, detail: str = "") -> None:
        ok = bool(ok)
        self.items.append((name, ok, detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.items)


def check_fig1d(res, checks: Checks) -> None:
    p = res.populations
    final = p["P_g2"][-1]
    low = (p["P_g0"] + p["P_g1"] + p["P_g2"]).min()
    checks.add("final P_g2 >= 0.98", final >= 0.98, f"{final:.4f}")
    checks.add("P_g0+P_g1+P_g2 >= 0.99 throughout", low >= 0.99, f"min {low:.4f}")
    t = p.grid
    k1 = int(np.argmax(p["P_g1"]))
    half0 = t[np.argmax(p["P_g0"] < 0.5)]
    half2 = t[np.argmax(p["P_g2"] > 0.5)]
    checks.add("P_g1 peaks between P_g0 decline and P_g2 rise", half0 <= t[k1] <= half2,
               f"t(P_g0<1/2)={half0:g}, t(max P_g1)={t[k1]:g}, t(P_g2>1/2)={half2:g}")


def check_fig2(results, checks: Checks) -> None:
    pts = sorted((c.system.kappa, r.summary["master"]["max_P_g2"]) for r, c in results)
    peaks = [m for _, m in pts]
    checks.add("max P_g2 < 1 for every kappa", all(m < 1 for m in peaks),
               ", ".join(f"{m:.4f}" for m in peaks))
    checks.add("max P_g2 strictly decreasing in kappa", all(a > b for a, b in zip(peaks, peaks[1:])),
               ", ".join(f"kappa={k:g}: {m:.4f}" for k, m in pts))


def check_bundles(res, cfg, checks: Checks) -> None:
    N = cfg.system.bundle_N
    frac = res.summary["trajectories"]["bundle_fraction"]
    checks.add(f"exactly {N} photon jumps per cycle in >= 90% of trajectories", frac >= 0.9,
               f"{100 * frac:.1f}% of {res.ensemble.n_traj}; per-cycle histogram "
               f"{res.summary['trajectories']['photon_jumps_per_cycle']}")


def check_fig3(res, checks: Checks) -> None:
    labels = [snap.dominant_diagonal() for stem, snap, _ in res.snapshots if stem.startswith("trajectory_")]
    checks.add("snapshot cascade |g,2> -> |g,1> -> |g,0>", labels == ["g,2", "g,1", "g,0"],
               " -> ".join(labels) if labels else "no trajectory with two photon jumps")
    for stem, _, w in res.snapshots:
        checks.add(f"Wigner normalization ({stem})", abs(w.integral() - 1) < 0.02, f"{w.integral():.5f}")


def check_fig4(res, cfg, checks: Checks) -> None:
    N = cfg.system.bundle_N
    sched = cfg.system.pulses
    obs = res.display.observables
    peaks = []
    for k in range(sched.n_pulses):
        mask = (obs.grid >= k * sched.period) & (obs.grid < (k + 1) * sched.period)
        peaks.append(float(obs["n_photon"][mask].max()))
    checks.add(f"displayed trajectory reaches <b^dag b> ~ {N} every cycle",
               all(abs(p - N) < 0.25 for p in peaks), ", ".join(f"{p:.3f}" for p in peaks))


def check_fig5(res, cfg, checks: Checks) -> None:
    orders = cfg.run["g2_orders"]
    for n in orders:
        d = res.delayed[n]
        g = d[f"g2_N{n}"]
        t1 = d.meta["t1"]
        if n == 1:
            checks.add(f"g1(t,t) > 1 at its maximum t={t1:g}", g[0] > 1, f"{g[0]:.4f}")
            bad = d.grid[1:][g[1:] >= g[0]]
            checks.add("g1(t1,t1) > g1(t1,t1+tau) over the scan", bad.size == 0,
                       f"max over tau>0 {g[1:].max():.4f}" + (f", violated at tau={bad[:5]}" if bad.size else ""))
        else:
            checks.add(f"g{n}(t,t) < 1 at its minimum t={t1:g}", g[0] < 1, f"{g[0]:.4f}")
            bad = d.grid[1:][g[1:] <= g[0]]
            checks.add(f"g{n}(t1,t1) < g{n}(t1,t1+tau) over the scan", bad.size == 0,
                       f"min over tau>0 {g[1:].min():.4f}" + (f", violated at tau={bad[:5]}" if bad.size else ""))


def cmd_reproduce(args) -> int:
    fig = args.figure
    if fig not in FIGURES:
        raise ConfigError(f"unknown figure {fig!r}; choose from {', '.join(FIGURES)}")
    root = Path(args.out) if args.out else default_out() / f"fig{fig}"
    checks = Checks()
    results = []
    for name in FIGURES[fig]:
        cfg = load_preset(name)
        print(f"== {name}")
        t0 = time.perf_counter()
        res = execute(cfg, root / name, n_traj=args.traj, workers=args.threads)
        print(f"   done in {time.perf_counter() - t0:.1f} s")
        results.append((res, cfg))
        if fig == "1d":
            check_fig1d(res, checks)
        elif fig == "3":
            check_bundles(res, cfg, checks)
            check_fig3(res, checks)
        elif fig == "4":
            check_bundles(res, cfg, checks)
            check_fig4(res, cfg, checks)
        elif fig == "5":
            check_fig5(res, cfg, checks)
    if fig == "2":
        check_fig2(results, checks)
        svgplot.line_plot(root / "fig2_comparison.svg", results[0][0].populations.grid,
                          {f"kappa={c.system.kappa:g}": r.populations["P_g2"] for r, c in results},
                          title="P_g2 for three resonator decay rates", xlabel="omega_b t / 1000",
                          ylabel="P_g2", x_scale=1000.0, ylim=(-0.02, 1.02))
    (root / "checks.json").write_text(json.dumps(
        [{"check": n, "pass": ok, "detail": d} for n, ok, d in checks.items], indent=2) + "\n")
    print(f"{sum(ok for _, ok, _ in checks.items)}/{len(checks.items)} checks passed")
    return EXIT_OK if checks.ok else EXIT_CHECK


# -- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bundlesim", description="N-photon bundle emission simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lambda", help="smallest coupling that blocks the chain at |g,N>")
    p.add_argument("N", type=int)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(func=cmd_lambda)

    def common(p, traj=True):
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./bundlesim_out)")
        p.add_argument("--threads", type=int, default=1, help="trajectory worker threads")
        if traj:
            p.add_argument("--traj", type=int, default=None, help="number of trajectories")

    p = sub.add_parser("run", help="run a config file or preset")
    p.add_argument("--config", required=True, help="YAML file or preset name")
    p.add_argument("--seed", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("reproduce", help="run a figure preset and check its physics")
    p.add_argument("figure", help="one of " + ", ".join(FIGURES))
    common(p)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("sweep", help="vary one numeric config field")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, help="dotted path, e.g. model.kappa")
    p.add_argument("--values", required=True, help="comma-separated numbers")
    p.add_argument("--seed", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
