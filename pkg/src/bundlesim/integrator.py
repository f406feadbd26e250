"""Dormand-Prince 5(4) integrator for complex array-valued ODEs.

The state may be any complex ndarray (vector or density matrix); stage
combinations are elementwise, so structure that the right-hand side
preserves linearly (Hermiticity, zero trace) is preserved by every stage,
by the step and by the dense-output interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# 5th-order minus embedded 4th-order weights, including the FSAL stage
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# Shampine's quartic continuous extension
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERROR_EXPONENT = -1 / 5


class StepSizeUnderflow(RuntimeError):
    """The controller asked for a step below floating-point resolution (stiffness signal)."""


@dataclass(frozen=True)
class IntegratorSettings:
    """Tolerances and step cap for the adaptive integrator.

    ``max_step=None`` lets callers substitute a problem-specific cap
    (the master-equation driver uses a tenth of the pulse width).
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float | None = None
    first_step: float | None = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def scaled(self, factor: float) -> "IntegratorSettings":
        return IntegratorSettings(self.rtol * factor, self.atol * factor,
                                  self.max_step, self.first_step)


class DenseSegment:
    """Quartic interpolant valid on [t_old, t_new] of one accepted step."""

    __slots__ = ("t_old", "t_new", "h", "y_old", "Q")

    def __init__(self, t_old, t_new, y_old, K):
        self.t_old = t_old
        self.t_new = t_new
        self.h = t_new - t_old
        self.y_old = y_old
        self.Q = np.tensordot(P.T, K, axes=(1, 0))  # (4, *shape)

    def __call__(self, t: float) -> np.ndarray:
        x = (t - self.t_old) / self.h
        p = np.array([x, x * x, x ** 3, x ** 4])
        return self.y_old + self.h * np.tensordot(p, self.Q, axes=(0, 0))


class DormandPrince:
    """Single-trajectory stepper; call :meth:`step` until ``t`` reaches ``t_bound``."""

    def __init__(self, fun: Callable[[float, np.ndarray], np.ndarray], t0: float,
                 y0: np.ndarray, t_bound: float, settings: IntegratorSettings):
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=complex)
        self.t_bound = float(t_bound)
        self.rtol = settings.rtol
        self.atol = settings.atol
        self.max_step = settings.max_step if settings.max_step is not None else np.inf
        self.direction = 1.0 if t_bound >= t0 else -1.0
        self.K = np.empty((7,) + self.y.shape, dtype=complex)
        self.f = fun(self.t, self.y)
        self.n_rhs = 1
        self.n_steps = 0
        self.n_rejected = 0
        self.t_old = None
        self.y_old = None
        if settings.first_step is not None:
            self.h = min(settings.first_step, self.max_step, abs(t_bound - t0))
        else:
            self.h = self._initial_step()

    def _norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(np.mean(np.abs(x) ** 2))) if x.size else 0.0

    def _initial_step(self) -> float:
        span = abs(self.t_bound - self.t)
        if span == 0:
            return 0.0
        scale = self.atol + self.rtol * np.abs(self.y)
        d0 = self._norm(self.y / scale)
        d1 = self._norm(self.f / scale)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, span, self.max_step)
        y1 = self.y + self.direction * h0 * self.f
        f1 = self.fun(self.t + self.direction * h0, y1)
        self.n_rhs += 1
        d2 = self._norm((f1 - self.f) / scale) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1 / 5)
        return min(100 * h0, h1, span, self.max_step)

    def step(self) -> bool:
        """Advance one accepted step. Returns False once ``t_bound`` has been reached."""
        t = self.t
        if self.direction * (self.t_bound - t) <= 0:
            return False
        y = self.y
        K = self.K
        h = min(self.h, self.max_step)
        min_step = 10 * abs(np.nextafter(t, self.direction * np.inf) - t)
        while True:
            if h < min_step:
                raise StepSizeUnderflow(f"step size {h:.3e} underflowed at t={t}")
            t_new = t + self.direction * h
            if self.direction * (t_new - self.t_bound) > 0:
                t_new = self.t_bound
            hs = t_new - t
            K[0] = self.f
            for s in range(1, 6):
                dy = np.tensordot(A[s], K[:s], axes=(0, 0)) * hs
                K[s] = self.fun(t + C[s] * hs, y + dy)
            y_new = y + hs * np.tensordot(B, K[:6], axes=(0, 0))
            f_new = self.fun(t_new, y_new)
            K[6] = f_new
            self.n_rhs += 6
            err = hs * np.tensordot(E, K, axes=(0, 0))
            scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = self._norm(err / scale)
            if err_norm < 1:
                factor = MAX_FACTOR if err_norm == 0 else min(
                    MAX_FACTOR, SAFETY * err_norm ** ERROR_EXPONENT)
                self.h = abs(hs) * factor if abs(hs) == h else max(h, abs(hs) * factor)
                break
            h = abs(hs) * max(MIN_FACTOR, SAFETY * err_norm ** ERROR_EXPONENT)
            self.n_rejected += 1
        self.t_old, self.y_old = t, y
        self.t, self.y, self.f = t_new, y_new, f_new
        self.n_steps += 1
        return True

    def restart(self, y: np.ndarray, t_bound: float) -> None:
        """Replace the state at the current time and extend to ``t_bound``, keeping the step size."""
        self.y = np.array(y, dtype=complex)
        self.f = self.fun(self.t, self.y)
        self.n_rhs += 1
        self.t_bound = float(t_bound)

    def dense_output(self) -> DenseSegment:
        return DenseSegment(self.t_old, self.t, self.y_old, self.K.copy())


def integrate(fun, t_span, y0, t_eval, settings: IntegratorSettings | None = None,
              callback=None) -> np.ndarray:
    """Integrate ``fun`` and return the solution at the (increasing) times ``t_eval``.

    ``callback(t, y)`` is invoked for every emitted grid point in order;
    it may raise to abort the integration.
    """
    settings = settings or IntegratorSettings()
    t0, t1 = map(float, t_span)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.ndim != 1 or np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be strictly increasing")
    if t_eval.size and (t_eval[0] < t0 - 1e-12 or t_eval[-1] > t1 + 1e-12):
        raise ValueError("t_eval must lie inside t_span")
    y0 = np.asarray(y0, dtype=complex)
    out = np.empty((t_eval.size,) + y0.shape, dtype=complex)
    k = 0
    while k < t_eval.size and t_eval[k] <= t0:
        out[k] = y0
        if callback is not None:
            callback(t_eval[k], out[k])
        k += 1
    if k == t_eval.size:
        return out
    solver = DormandPrince(fun, t0, y0, t1, settings)
    while k < t_eval.size and solver.step():
        seg = None
        while k < t_eval.size and t_eval[k] <= solver.t:
            if t_eval[k] == solver.t:
                out[k] = solver.y
            else:
                seg = seg or solver.dense_output()
                out[k] = seg(t_eval[k])
            if callback is not None:
                callback(t_eval[k], out[k])
            k += 1
    if k < t_eval.size:
        raise RuntimeError("integration stopped before the last output time")
    return out
