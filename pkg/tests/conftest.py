import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_density(rng, d, rank=None):
    rank = d if rank is None else rank
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (a + a.conj().T)


# -- shared preset runs and the acceptance report -----------------------------------

CRITERIA: dict[int, tuple[bool, str]] = {}


def report(k: int, ok: bool, detail: str) -> bool:
    """Record one acceptance verdict; printed again in the terminal summary."""
    CRITERIA[k] = (bool(ok), detail)
    print(f"Criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"Criterion {k}: {'PASS' if ok else 'FAIL'} {detail}")


class PresetRuns:
    """Runs each (preset, n_traj) once per session and keeps the wall time."""

    def __init__(self, root):
        self.root = root
        self.cache = {}

    def __call__(self, name, n_traj=None, plots=False):
        import time
        from bundlesim.config import load_preset
        from bundlesim.runner import execute
        key = (name, n_traj)
        if key not in self.cache:
            cfg = load_preset(name)
            t0 = time.perf_counter()
            res = execute(cfg, self.root / f"{name}_{n_traj}", n_traj=n_traj, plots=plots)
            self.cache[key] = (res, cfg, time.perf_counter() - t0)
        return self.cache[key]


@pytest.fixture(scope="session")
def preset_run(tmp_path_factory):
    return PresetRuns(tmp_path_factory.mktemp("presets"))
