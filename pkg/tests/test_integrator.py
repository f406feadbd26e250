import numpy as np
import pytest
from hypothesis import given, strategies as st

from bundlesim.integrator import DormandPrince, IntegratorSettings, integrate


def test_settings_validation():
    with pytest.raises(ValueError):
        IntegratorSettings(rtol=0.0)
    with pytest.raises(ValueError):
        IntegratorSettings(max_step=-1.0)
    s = IntegratorSettings(1e-6, 1e-8, 5.0).scaled(0.5)
    assert (s.rtol, s.atol, s.max_step) == (5e-7, 5e-9, 5.0)


@given(st.floats(-2.0, 2.0), st.floats(0.1, 5.0))
def test_exponential_growth(rate, t_end):
    t = np.linspace(0.0, t_end, 7)
    y = integrate(lambda s, y: rate * y, (0.0, t_end), np.array([1.0]), t,
                  IntegratorSettings(1e-10, 1e-12))
    assert np.allclose(y[:, 0].real, np.exp(rate * t), rtol=1e-8, atol=1e-12)


def test_harmonic_oscillator_dense_output():
    w = 3.0
    t = np.linspace(0.0, 10.0, 101)
    y = integrate(lambda s, y: -1j * w * y, (0.0, 10.0), np.array([1.0 + 0j]), t,
                  IntegratorSettings(1e-10, 1e-12))
    assert np.max(np.abs(y[:, 0] - np.exp(-1j * w * t))) < 1e-8


def test_matrix_state_and_callback_order():
    seen = []
    a = np.array([[0.0, 1.0], [-1.0, 0.0]])
    t = np.linspace(0.0, 1.0, 5)
    y = integrate(lambda s, m: a @ m, (0.0, 1.0), np.eye(2), t,
                  callback=lambda s, m: seen.append(s))
    assert seen == list(t)
    assert np.allclose(y[-1].real, [[np.cos(1), np.sin(1)], [-np.sin(1), np.cos(1)]], atol=1e-7)


def test_max_step_respected():
    st_ = DormandPrince(lambda s, y: 0 * y, 0.0, np.ones(1), 10.0, IntegratorSettings(max_step=0.5))
    steps = []
    while st_.step():
        steps.append(st_.t - st_.t_old)
    assert max(steps) <= 0.5 + 1e-12 and st_.t == 10.0


def test_t_eval_validation():
    with pytest.raises(ValueError):
        integrate(lambda s, y: y, (0, 1), np.ones(1), [0.5, 0.2])
    with pytest.raises(ValueError):
        integrate(lambda s, y: y, (0, 1), np.ones(1), [0.5, 2.0])


def test_callback_can_abort():
    class Stop(Exception):
        pass

    def cb(s, y):
        if s > 0.5:
            raise Stop

    with pytest.raises(Stop):
        integrate(lambda s, y: y, (0, 1), np.ones(1), np.linspace(0, 1, 11), callback=cb)
