import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm
from scipy.special import eval_laguerre

from bundlesim.hilbert import (DensityState, FockTruncation, PureState, StateInvariantError,
                               annihilation_op, basis_density, basis_state, displacement_op)
from bundlesim.integrator import IntegratorSettings
from bundlesim.model import PulseSchedule, SystemConfig
from bundlesim.observables import (TimeSeries, UndefinedCorrelation, density_snapshot,
                                   displacement_elements, g2_delayed, g2_equal_time, g2_series,
                                   locate_extremum_times, mean_photon_number, moment,
                                   population_series, populations, reduced_photon_state, wigner)

from conftest import random_density


def fock_density(n, n_max=12):
    return basis_density(FockTruncation(n_max), 0, n)


def coherent_vector(alpha, n_max):
    n = np.arange(n_max + 1)
    amps = np.exp(-abs(alpha) ** 2 / 2) * alpha ** n / np.sqrt([float(math.factorial(k)) for k in n])
    psi = np.zeros(2 * (n_max + 1), dtype=complex)
    psi[:n_max + 1] = amps
    return PureState(psi)


# -- equal-time correlations

@given(st.integers(2, 11))
def test_fock_g2_first_order(n):
    assert abs(g2_equal_time(fock_density(n), 1) - (n - 1) / n) < 1e-10


@pytest.mark.parametrize("n,N,expected", [(2, 2, 0.0), (4, 2, 1 / 6), (3, 3, 0.0)])
def test_fock_g2_higher_order(n, N, expected):
    # <n|b^dag^2N b^2N|n> / <n|b^dag^N b^N|n>^2 = [n!/(n-2N)!] / [n!/(n-N)!]^2
    num = math.perm(n, 2 * N) if n >= 2 * N else 0
    ref = num / math.perm(n, N) ** 2
    assert g2_equal_time(fock_density(n), N) == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(expected)


@pytest.mark.parametrize("N", [1, 2])
def test_coherent_state_is_poissonian(N):
    psi = coherent_vector(0.8, 40)
    assert g2_equal_time(psi, N) == pytest.approx(1.0, abs=1e-8)
    assert mean_photon_number(psi) == pytest.approx(0.64, abs=1e-10)


def test_thermal_state_bunching():
    nb, d = 0.3, 41
    p = (nb / (nb + 1)) ** np.arange(d) / (nb + 1)
    rho = np.zeros((2 * d, 2 * d))
    rho[:d, :d] = np.diag(p)
    assert g2_equal_time(rho, 1) == pytest.approx(2.0, abs=1e-8)


def test_g2_undefined_in_vacuum():
    with pytest.raises(UndefinedCorrelation):
        g2_equal_time(fock_density(0), 1)
    with pytest.raises(ValueError):
        g2_equal_time(fock_density(2), 0)


def test_displaced_lowering_differs_only_with_excited_weight():
    lam = 0.7
    g = fock_density(3)
    assert g2_equal_time(g, 1, displaced=True, lam=lam) == pytest.approx(g2_equal_time(g, 1))
    e = basis_density(FockTruncation(12), 1, 3)
    assert moment(e, 1, lam=lam, displaced=True) == pytest.approx(3 + lam ** 2)


def test_moment_pure_vs_density(rng):
    rho = random_density(rng, 26, rank=1)
    w, v = np.linalg.eigh(rho)
    psi = PureState(v[:, -1])
    for N in (1, 2):
        assert moment(psi, N, 2) == pytest.approx(moment(rho, N, 2), rel=1e-9)


def test_g2_series_skips_undefined():
    t = FockTruncation(12)
    states = [basis_density(t, 0, n, float(k)) for k, n in enumerate((0, 2, 3))]
    ts = g2_series(states, 1)
    assert ts.grid.tolist() == [1.0, 2.0]
    assert np.allclose(ts["g2_N1"], [0.5, 2 / 3])


# -- delayed correlations

def idle_cfg(kappa=0.0):
    return SystemConfig(lam=0.0, kappa=kappa, pulses=PulseSchedule(omega_0_amp=0.0))


def test_delayed_zero_delay_equals_equal_time():
    cfg = idle_cfg()
    rho = fock_density(3)
    ts = g2_delayed(0.0, [0.0, 10.0], 1, cfg, rho0=rho)
    assert ts["g2_N1"][0] == pytest.approx(g2_equal_time(rho, 1), abs=1e-10)
    assert ts["g2_N1"][1] == pytest.approx(2 / 3, abs=1e-8)


def test_delayed_single_photon_antibunched_at_all_delays():
    kappa = 1e-2
    cfg = idle_cfg(kappa)
    tau = np.linspace(0, 200, 6)
    ts = g2_delayed(0.0, tau, 1, cfg, rho0=fock_density(1),
                    settings=IntegratorSettings(1e-10, 1e-12))
    # after one emission from |1> nothing is left to emit
    assert np.allclose(ts["g2_N1"], 0.0, atol=1e-12)


def test_delayed_fock_two_decay_oracle():
    # from |2>: P(second | first at t) e^{-kt} over the unconditioned <n>(t+tau) = 2e^{-k(t+tau)}...
    kappa = 1e-2
    cfg = idle_cfg(kappa)
    tau = np.linspace(0, 300, 7)
    ts = g2_delayed(0.0, tau, 1, cfg, rho0=fock_density(2),
                    settings=IntegratorSettings(1e-10, 1e-12))
    # <b^dag b>(tau) from b|2><2|b^dag = 2|1><1|  ->  2 e^{-k tau}; unconditioned <n> = 2 e^{-k tau}
    assert np.allclose(ts["g2_N1"], 2 * np.exp(-kappa * tau) / (2 * 2 * np.exp(-kappa * tau)),
                       rtol=1e-7)


def test_delayed_validation():
    cfg = idle_cfg()
    with pytest.raises(ValueError):
        g2_delayed(0.0, [1.0, 0.5], 1, cfg, rho0=fock_density(2))
    with pytest.raises(ValueError):
        g2_delayed(-1.0, [0.0], 1, cfg)
    with pytest.raises(UndefinedCorrelation):
        g2_delayed(0.0, [0.0], 1, cfg)


def test_extremum_ties_go_to_earliest():
    ts = TimeSeries([0, 1, 2, 3, 4], {"x": [0, 2, 1, 2, 0]})
    assert locate_extremum_times(ts, "x", (0, 4)) == 1.0
    assert locate_extremum_times(ts, "x", (2, 4)) == 3.0
    assert locate_extremum_times(ts, "x", (0, 4), "min") == 0.0
    with pytest.raises(ValueError):
        locate_extremum_times(ts, "x", (10, 11))
    with pytest.raises(ValueError):
        locate_extremum_times(ts, "x", (0, 4), "median")


# -- populations and reduced states

def test_populations_examples():
    t = FockTruncation(12)
    pops = populations(basis_state(t, 0, 2))
    assert pops[(0, 2)] == 1.0 and sum(pops.values()) == pytest.approx(1.0)
    lam = 0.765
    psi = np.zeros(26, dtype=complex)
    psi[13:] = displacement_op(-lam, t)[:, 1]
    dp = populations(PureState(psi), dressed=True, lam=lam)
    assert dp[(1, 1)] == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        populations(PureState(psi), dressed=True)


def test_population_series_columns():
    states = [basis_density(FockTruncation(12), 0, k, float(k)) for k in range(3)]
    ts = population_series(states, n_show=2, lam=0.5)
    assert ts.names[:3] == ["P_g0", "P_g1", "P_g2"]
    assert np.allclose(ts["n_photon"], [0, 1, 2])
    assert ts.meta["lambda"] == 0.5
    with pytest.raises(ValueError):
        population_series([])


def test_reduced_state_partial_trace(rng):
    rho = random_density(rng, 26)
    red = reduced_photon_state(DensityState(rho, 3.0))
    assert red.time == 3.0
    assert np.trace(red.matrix).real == pytest.approx(1.0)
    m = annihilation_op(FockTruncation(12))
    full_b = np.kron(np.eye(2), m)
    assert np.trace(m @ red.matrix) == pytest.approx(np.trace(full_b @ rho))


# -- Wigner functions

def test_displacement_elements_match_expm():
    beta = 0.4 - 0.3j
    b = annihilation_op(FockTruncation(60))
    ref = expm(beta * b.conj().T - np.conj(beta) * b)[:9, :9]
    got = displacement_elements(np.array(beta), 8)
    assert np.max(np.abs(got - ref)) < 1e-10


def test_wigner_fock_values():
    re = np.array([0.0])
    for n, expected in [(0, 2 / np.pi), (1, -2 / np.pi)]:
        rho = np.zeros((7, 7))
        rho[n, n] = 1
        assert wigner(rho, re, re).values[0, 0] == pytest.approx(expected, abs=1e-12)


def test_wigner_fock_two_radial_laguerre():
    rho = np.zeros((7, 7))
    rho[2, 2] = 1
    w = wigner(rho, np.linspace(-2, 2, 41), np.linspace(-2, 2, 41))
    r2 = w.re[None, :] ** 2 + w.im[:, None] ** 2
    ref = (2 / np.pi) * np.exp(-2 * r2) * eval_laguerre(2, 4 * r2)
    assert np.max(np.abs(w.values - ref)) < 1e-6


def test_wigner_coherent_gaussian():
    a0 = 0.6 + 0.4j
    psi = coherent_vector(a0, 30).amplitudes[:31]
    w = wigner(np.outer(psi, psi.conj()), np.linspace(-1, 2, 31), np.linspace(-1, 2, 31))
    alpha = w.re[None, :] + 1j * w.im[:, None]
    ref = (2 / np.pi) * np.exp(-2 * np.abs(alpha - a0) ** 2)
    assert np.max(np.abs(w.values - ref)) < 1e-8


@given(st.integers(0, 2**31), st.integers(0, 6))
def test_wigner_normalization(seed, support):
    rng = np.random.default_rng(seed)
    rho = np.zeros((13, 13), dtype=complex)
    rho[:support + 1, :support + 1] = random_density(rng, support + 1)
    assert abs(wigner(rho).integral() - 1) < 0.02


def test_wigner_rejects_non_square():
    with pytest.raises(ValueError):
        wigner(np.zeros((3, 4)))


def test_wigner_csv(tmp_path):
    w = wigner(np.diag([1.0, 0, 0]), np.linspace(-1, 1, 3), np.linspace(-1, 1, 3))
    text = w.to_csv(tmp_path / "w.csv").read_text()
    assert text.splitlines()[0] == "im\\re,-1,0,1"
    assert text.endswith("\n")


# -- snapshots and time series

def test_density_snapshot():
    snap = density_snapshot(basis_density(FockTruncation(12), 0, 2, 7.0), n_show=3)
    assert snap.time == 7.0 and len(snap.labels) == 8
    assert snap.dominant_diagonal() == "g,2"
    bad = np.eye(26) * 2
    with pytest.raises(StateInvariantError):
        density_snapshot(bad)


def test_timeseries_csv_roundtrip(tmp_path):
    ts = TimeSeries([0.0, 0.5, 1.0], {"a": [1 / 3, 2.0, -1e-20], "b": [0, 1, 2]}, {"k": np.float64(2)})
    path = ts.to_csv(tmp_path / "x.csv")
    text = path.read_text()
    assert text.splitlines()[0] == "t,a,b"
    assert "0.333333333333" in text and text.endswith("\n") and "\r" not in text
    back = TimeSeries.from_csv(path)
    assert np.allclose(back["a"], ts["a"], rtol=1e-11)
    meta = ts.write_metadata(tmp_path / "x.meta.json").read_text()
    assert '"k": 2.0' in meta


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries([0, 0])
    with pytest.raises(ValueError):
        TimeSeries([0, 1], {"x": [1]})
    with pytest.raises(ValueError):
        TimeSeries([0, 1], {"x": [1, np.nan]})
    ts = TimeSeries([0, 1, 2], {"x": [1, 2, 3]})
    assert len(ts.window(0.5, 2)) == 2 and ts.names == ["x"]
