import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import laguerre
from scipy.linalg import expm

from bundlesim.hilbert import FockTruncation, annihilation_op
from bundlesim.model import (LambdaBracketError, PulseSchedule, RWAWarning, SystemConfig,
                             chain_labels, check_rwa, drive_coefficient, dressed_operators,
                             franck_condon, franck_condon_table, h0_eigen, hamiltonian_approx,
                             hamiltonian_lab, lambda_n, pulse_amplitude, resonance_detunings,
                             resonant_hamiltonian, static_eigensystem, static_hamiltonian)


def expm_displacement(beta, n_max=60):
    b = annihilation_op(FockTruncation(n_max))
    return expm(beta * (b.conj().T - b))


# -- Franck-Condon factors

def test_fc_examples():
    assert franck_condon(0, 0, 0.0) == 1.0
    assert franck_condon(0, 1, 0.0) == 0.0
    assert franck_condon(0, 0, 1.0) == pytest.approx(np.exp(-0.5), abs=1e-12)
    # |<1|D(b)|1>| = exp(-b^2/2) |1 - b^2| vanishes at b = 1
    assert franck_condon(1, 1, 1.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        franck_condon(-1, 0, 0.5)
    with pytest.raises(ValueError):
        franck_condon(0, 0, float("nan"))


@pytest.mark.parametrize("beta", [0.3, 0.765367, 1.0, -0.6])
def test_fc_matches_matrix_exponential(beta):
    d = expm_displacement(beta)
    for n in range(9):
        for m in range(9):
            assert franck_condon(n, m, beta) == pytest.approx(d[n, m].real, abs=1e-8)


@given(st.integers(0, 20), st.integers(0, 20), st.floats(0.0, 1.0))
def test_fc_parity(n, m, beta):
    a, b = franck_condon(m, n, beta), franck_condon(n, m, beta)
    assert abs(a - (-1) ** (n - m) * b) <= 1e-12


@given(st.integers(0, 8), st.floats(0.0, 1.0))
def test_fc_row_normalization(n, beta):
    total = sum(franck_condon(n, m, beta) ** 2 for m in range(61))
    assert abs(total - 1.0) < 1e-6


def test_fc_large_index_finite():
    v = franck_condon(60, 55, 0.8)
    assert np.isfinite(v) and abs(v) <= 1


def test_fc_table_readonly():
    tab = franck_condon_table(0.5, 6)
    assert tab.n_max == 6 and tab(2, 3) == pytest.approx(franck_condon(2, 3, 0.5))
    with pytest.raises(ValueError):
        tab.table[0, 0] = 2.0


# -- lambda_N

def test_lambda_2_closed_form():
    assert lambda_n(2) == pytest.approx(np.sqrt(2 - np.sqrt(2)), abs=1e-10)
    assert lambda_n(2) == pytest.approx(0.765, abs=1e-3)


@pytest.mark.parametrize("N", range(1, 8))
def test_lambda_matches_laguerre_roots(N):
    roots = np.sort(laguerre.lagroots([0] * N + [1]).real)
    assert lambda_n(N) == pytest.approx(np.sqrt(roots[0]), abs=1e-10)
    assert franck_condon(N, N, lambda_n(N)) == pytest.approx(0.0, abs=1e-10)


def test_lambda_values_and_ordering():
    assert lambda_n(1) == pytest.approx(1.0, abs=1e-12)
    assert lambda_n(3) == pytest.approx(0.645, abs=1e-3)
    vals = [lambda_n(N) for N in range(1, 7)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_lambda_rejects(bad):
    with pytest.raises(ValueError):
        lambda_n(bad)


def test_lambda_bracket_error_is_value_error():
    assert issubclass(LambdaBracketError, ValueError)


# -- pulses, detunings, spectrum

def test_pulse_examples():
    sched = PulseSchedule(0.05, 180.0, 1000.0, 750.0)
    assert pulse_amplitude(1000.0, 1, sched) == pytest.approx(0.05, abs=1e-15)
    assert pulse_amplitude(1180.0, 1, sched) == pytest.approx(0.05 * np.exp(-0.5), rel=1e-12)
    assert pulse_amplitude(750.0, 2, sched) == pytest.approx(0.05, abs=1e-15)
    assert pulse_amplitude(0.0, 1, sched) < 1e-4
    with pytest.raises(ValueError):
        pulse_amplitude(0.0, 3, sched)


def test_pulse_train_sums_all_gaussians():
    sched = PulseSchedule(0.05, 180.0, 1000.0, 750.0, period=10000.0, n_pulses=3)
    assert pulse_amplitude(21000.0, 1, sched) == pytest.approx(0.05, rel=1e-12)
    assert pulse_amplitude(31000.0, 1, sched) < 1e-10
    vec = pulse_amplitude(np.array([1000.0, 11000.0]), 1, sched)
    assert vec.shape == (2,) and np.allclose(vec, 0.05)


def test_pulse_schedule_validation():
    with pytest.raises(ValueError):
        PulseSchedule(sigma=0.0)
    with pytest.raises(ValueError):
        PulseSchedule(n_pulses=0)
    with pytest.raises(ValueError):
        PulseSchedule(period=0.0, n_pulses=2)
    with pytest.raises(ValueError):
        PulseSchedule(t1=float("inf"))


def test_system_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(lam=-0.1)
    with pytest.raises(ValueError):
        SystemConfig(kappa=-1e-3)
    with pytest.raises(ValueError):
        SystemConfig(bundle_N=0)
    cfg = SystemConfig(lam=0.5, delta1=0.1)
    assert cfg.detunings == (0.1, -1.25)


def test_resonance_detunings():
    cfg = SystemConfig(lam=lambda_n(2))
    d1, d2 = resonance_detunings(cfg)
    assert d1 == pytest.approx(-(2 - np.sqrt(2)))
    assert d2 == pytest.approx(d1 - 1)


def test_h0_eigen_matches_diagonalization():
    cfg = SystemConfig(lam=0.6, trunc=FockTruncation(40))
    evals = np.linalg.eigvalsh(static_hamiltonian(0.6, cfg.trunc))
    for n in range(5):
        eg, ee = h0_eigen(n, cfg)
        assert np.min(np.abs(evals - eg)) < 1e-10
        assert np.min(np.abs(evals - ee)) < 1e-8
    with pytest.raises(ValueError):
        h0_eigen(-1, cfg)


def test_static_eigensystem_unitary_and_diagonalizing():
    trunc = FockTruncation(12)
    energies, w = static_eigensystem(0.765, trunc)
    assert np.allclose(w.conj().T @ w, np.eye(trunc.dim), atol=1e-12)
    h = static_hamiltonian(0.765, trunc)
    assert np.allclose(w.conj().T @ h @ w, np.diag(energies), atol=1e-10)


# -- Hamiltonians

def _cfg(N=2, **kw):
    lam = lambda_n(N)
    return SystemConfig(lam=lam, bundle_N=N, **kw)


@given(st.floats(0.0, 2500.0))
def test_hamiltonian_lab_hermitian(t):
    h = hamiltonian_lab(t, _cfg())
    assert np.max(np.abs(h - h.conj().T)) == 0.0


def test_hamiltonian_lab_rejects_nonfinite():
    with pytest.raises(ValueError):
        hamiltonian_lab(float("nan"), _cfg())


def test_drive_coefficient_at_peak():
    cfg = _cfg()
    c = drive_coefficient(1000.0, cfg)
    d1, d2 = cfg.detunings
    om2 = 0.05 * np.exp(-0.5 * (250 / 180) ** 2)
    expected = 0.05 * np.exp(-1j * d1 * 1000) + om2 * np.exp(-1j * d2 * 1000)
    assert c == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("N", [2, 3])
@given(t=st.floats(0.0, 2000.0))
def test_hamiltonian_approx_structure(N, t):
    cfg = _cfg(N)
    h = hamiltonian_approx(t, cfg)
    assert h.shape == (2 * N + 1, 2 * N + 1)
    assert np.allclose(h, h.conj().T)
    # |g,N> closes the chain: its only partner is |e,N-1~>
    assert np.max(np.abs(h[:-2, -1])) == 0.0
    full = hamiltonian_approx(t, cfg, embed=True)
    ext = np.r_[N + 1:cfg.trunc.n_max + 1, cfg.trunc.n_max + 1 + N:cfg.trunc.dim]
    assert np.max(np.abs(full[ext])) == 0.0


def test_resonant_hamiltonian_decouples_gN():
    cfg = _cfg(2)
    h = resonant_hamiltonian(1000.0, cfg)
    off = cfg.trunc.n_max + 1
    assert abs(h[off + 2, 2]) < 1e-12
    assert abs(h[off + 1, 2]) > 1e-3


def test_hamiltonian_approx_rejects_large_N():
    with pytest.raises(ValueError):
        hamiltonian_approx(0.0, SystemConfig(lam=0.5, bundle_N=13))


def test_chain_labels():
    assert chain_labels(2) == ["g,0", "e,0~", "g,1", "e,1~", "g,2"]


def test_rwa_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_rwa(_cfg()) == pytest.approx(0.05, rel=1e-3)
    strong = _cfg(pulses=PulseSchedule(omega_0_amp=0.3))
    with pytest.warns(RWAWarning):
        check_rwa(strong)


def test_dressed_operators_exact_relations():
    trunc = FockTruncation(12)
    lam = lambda_n(2)
    dr = dressed_operators(lam, trunc)
    energies, _ = static_eigensystem(lam, FockTruncation(60))
    assert np.allclose(dr.energies[:13], np.arange(13))
    assert np.allclose(dr.energies[13:], np.arange(13) - lam ** 2)
    assert np.allclose(dr.W.conj().T @ dr.W, np.eye(26), atol=1e-12)
    assert np.allclose(dr.sigma_minus, dr.sigma_plus.conj().T)
    # away from the cutoff the qubit lowering element is the Franck-Condon factor
    for n in range(4):
        for m in range(4):
            assert abs(dr.sigma_minus[m, 13 + n]) == pytest.approx(
                abs(franck_condon(m, n, -lam)), abs=1e-6)
