"""Run configuration: YAML schema, validation and the bundled figure presets.

A config has three sections::

    model:   lambda (number or "auto"), bundle_N, kappa, gamma, n_max,
             delta1, delta2, omega0, thermal {T_b, T_sigma}
    pulses:  amplitude, sigma, t1, t2, period, count
    run:     mode (master | trajectories | both), t_end, n_points,
             n_traj, seed, rtol, atol, cache_dt, initial [q, n],
             time_scale (plot axis divisor), ...

``lambda: auto`` resolves to the smallest coupling that blocks the chain
at |g, bundle_N>.  Errors carry the dotted field path and, for YAML
syntax problems, the line number.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .hilbert import FockTruncation
from .integrator import IntegratorSettings
from .model import PulseSchedule, SystemConfig, lambda_n

RUN_MODES = ("master", "trajectories", "both")


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


# (key, type, required, default)
MODEL_FIELDS = [
    ("lambda", "lambda", True, None),
    ("bundle_N", int, False, 2),
    ("kappa", float, True, None),
    ("gamma", float, True, None),
    ("n_max", int, False, 12),
    ("delta1", float, False, None),
    ("delta2", float, False, None),
    ("omega0", float, False, 1.0),
    ("thermal", dict, False, None),
]
PULSE_FIELDS = [
    ("amplitude", float, True, None),
    ("sigma", float, True, None),
    ("t1", float, True, None),
    ("t2", float, True, None),
    ("period", float, False, 10000.0),
    ("count", int, False, 1),
]
RUN_FIELDS = [
    ("mode", str, False, "master"),
    ("t_start", float, False, 0.0),
    ("t_end", float, True, None),
    ("n_points", int, False, 1001),
    ("n_traj", int, False, 0),
    ("seed", int, False, 0),
    ("rtol", float, False, 1e-8),
    ("atol", float, False, 1e-10),
    ("max_step", float, False, None),
    ("cache_dt", float, False, 5.0),
    ("snapshot_times", list, False, []),
    ("g2_orders", list, False, []),
    ("g2_tau_max", float, False, None),
    ("g2_tau_points", int, False, 41),
    ("g2_cycle", int, False, None),
    ("keep_records", bool, False, False),
    ("initial", list, False, [0, 0]),
    ("time_scale", float, False, 1.0),
    ("audit", bool, False, True),
    ("audit_n_max", int, False, 16),
    ("audit_tol", float, False, 1e-6),
]
SECTIONS = {"model": MODEL_FIELDS, "pulses": PULSE_FIELDS, "run": RUN_FIELDS}


@dataclass
class RunConfig:
    """Everything a ``run`` needs: the physical model plus solver and output settings."""

    name: str
    system: SystemConfig
    run: dict
    thermal: dict | None = None
    source: dict = field(default_factory=dict, repr=False)

    @property
    def settings(self) -> IntegratorSettings:
        return IntegratorSettings(self.run["rtol"], self.run["atol"], self.run["max_step"])

    def grid(self):
        import numpy as np
        return np.linspace(self.run["t_start"], self.run["t_end"], self.run["n_points"])


def _coerce(path: str, value, kind):
    if kind == "lambda":
        if value == "auto":
            return value
        kind = float
    if value is None:
        return None
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is str:
            return str(value)
        if not isinstance(value, kind):
            raise TypeError
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected {getattr(kind, '__name__', kind)}, got {value!r}") from None


def parse_config(data: dict, name: str = "config") -> RunConfig:
    """Validate a config mapping; all problems are collected into one error."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with sections model, pulses, run")
    errors: list[str] = []
    parsed: dict[str, dict] = {}
    for sec, fields in SECTIONS.items():
        raw = data.get(sec)
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            errors.append(f"{sec}: expected a mapping")
            continue
        out = {}
        known = {f[0] for f in fields}
        for key in raw:
            if key not in known:
                errors.append(f"{sec}.{key}: unknown field")
        for key, kind, required, default in fields:
            path = f"{sec}.{key}"
            if key not in raw:
                if required:
                    errors.append(f"{path}: missing required field")
                out[key] = default
                continue
            try:
                out[key] = _coerce(path, raw[key], kind)
            except ConfigError as exc:
                errors.append(str(exc))
        parsed[sec] = out
    for key in data:
        if key not in SECTIONS and key != "name":
            errors.append(f"{key}: unknown section")
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))

    m, p, r = parsed["model"], parsed["pulses"], parsed["run"]
    try:
        if r["mode"] not in RUN_MODES:
            raise ConfigError(f"run.mode: must be one of {RUN_MODES}")
        if r["n_points"] < 2:
            raise ConfigError("run.n_points: need at least 2")
        if r["t_end"] <= r["t_start"]:
            raise ConfigError("run.t_end: must exceed run.t_start")
        if r["mode"] != "master" and r["n_traj"] < 1:
            raise ConfigError("run.n_traj: trajectory modes need n_traj >= 1")
        ini = r["initial"]
        if (len(ini) != 2 or ini[0] not in (0, 1) or not isinstance(ini[1], int)
                or not 0 <= ini[1] <= m["n_max"]):
            raise ConfigError("run.initial: expected [qubit 0|1, photon number <= n_max]")
        if r["g2_cycle"] is not None and not 0 <= r["g2_cycle"] < p["count"]:
            raise ConfigError("run.g2_cycle: must index one of the pulse cycles")
        if r["time_scale"] <= 0:
            raise ConfigError("run.time_scale: must be positive")
        for g in r["g2_orders"]:
            if not isinstance(g, int) or g < 1:
                raise ConfigError(f"run.g2_orders: bad order {g!r}")
        lam = lambda_n(m["bundle_N"]) if m["lambda"] == "auto" else m["lambda"]
        thermal = m["thermal"]
        if thermal is not None:
            if set(thermal) != {"T_b", "T_sigma"}:
                raise ConfigError("model.thermal: needs exactly T_b and T_sigma")
            thermal = {k: _coerce(f"model.thermal.{k}", v, float) for k, v in thermal.items()}
        system = SystemConfig(
            lam=lam, kappa=m["kappa"], gamma=m["gamma"],
            pulses=PulseSchedule(p["amplitude"], p["sigma"], p["t1"], p["t2"],
                                 p["period"], p["count"]),
            trunc=FockTruncation(m["n_max"]), bundle_N=m["bundle_N"],
            delta1=m["delta1"], delta2=m["delta2"], omega0=m["omega0"],
        )
        IntegratorSettings(r["rtol"], r["atol"], r["max_step"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(str(data.get("name", name)), system, r, thermal, data)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text, path.stem)


def loads(text: str, name: str = "config") -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"YAML syntax error{where}: {getattr(exc, 'problem', exc)}") from None
    return parse_config(data, name)


def dump(cfg: RunConfig) -> str:
    """Config snapshot as YAML (the resolved lambda is written out as a number)."""
    s = cfg.system
    p = s.pulses
    data = {
        "name": cfg.name,
        "model": {"lambda": float(s.lam), "bundle_N": s.bundle_N, "kappa": s.kappa,
                  "gamma": s.gamma, "n_max": s.trunc.n_max, "delta1": s.delta1,
                  "delta2": s.delta2, "omega0": s.omega0, "thermal": cfg.thermal},
        "pulses": {"amplitude": p.omega_0_amp, "sigma": p.sigma, "t1": p.t1, "t2": p.t2,
                   "period": p.period, "count": p.n_pulses},
        "run": dict(cfg.run),
    }
    return yaml.safe_dump(data, sort_keys=False)


def preset_names() -> list[str]:
    files = resources.files("bundlesim").joinpath("presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    f = resources.files("bundlesim").joinpath("presets").joinpath(f"{name}.yaml")
    if not f.is_file():
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    return f.read_text()


def load_preset(name: str) -> RunConfig:
    return loads(preset_text(name), name)
