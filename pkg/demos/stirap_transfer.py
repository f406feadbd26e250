"""Lossless STIRAP from |g,0> to |g,2>, then the same pulses with the coupling 10% off.

Run:  python demos/stirap_transfer.py   (about 20 s)
"""
import numpy as np

from bundlesim import FockTruncation, PulseSchedule, SystemConfig, basis_density, lambda_n
from bundlesim.lindblad import evolve_master
from bundlesim.observables import population_series

grid = np.linspace(0, 2000, 41)

# at lambda_2 the overlap <2~|2> vanishes, so the chain cannot climb past |g,2>
for label, lam in [("lambda_2", lambda_n(2)), ("0.9 lambda_2", 0.9 * lambda_n(2))]:
    cfg = SystemConfig(lam=lam, bundle_N=2, pulses=PulseSchedule(0.05, 180, 1000, 750),
                       trunc=FockTruncation(12))
    states = evolve_master(basis_density(cfg.trunc, 0, 0), (0, 2000), cfg, grid=grid)
    pops = population_series(states, n_show=4)
    print(f"\n{label} = {lam:.4f}")
    print("   t     P_g0    P_g1    P_g2    P_g3   P_excited")
    for k in range(0, grid.size, 4):
        print(f"{grid[k]:6.0f}  " + "  ".join(f"{pops[c][k]:.4f}"
                                           for c in ("P_g0", "P_g1", "P_g2", "P_g3", "P_excited")))
