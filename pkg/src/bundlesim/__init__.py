"""Dynamical N-photon bundle emission from a longitudinally coupled qubit-resonator system.

Modules, bottom up: ``hilbert`` (operators and states), ``model``
(Hamiltonian, pulses, Franck-Condon factors, lambda_N), ``lindblad``
(master equation), ``trajectories`` (quantum jumps), ``observables``
(populations, correlations, Wigner functions) and ``cli``.
"""
from .hilbert import (DensityState, FockTruncation, PureState, StateInvariantError,
                      basis_density, basis_state, expectation)
from .model import PulseSchedule, SystemConfig, franck_condon, lambda_n

__version__ = "0.1.0"

__all__ = [
    "DensityState", "FockTruncation", "PureState", "StateInvariantError", "basis_density",
    "basis_state", "expectation", "PulseSchedule", "SystemConfig", "franck_condon",
    "lambda_n", "__version__",
]
