"""One quantum trajectory over three pulse cycles: photons leave in pairs.

Run:  python demos/bundle_trajectory.py   (about a minute)
"""
import numpy as np

from bundlesim import basis_state
from bundlesim.config import load_preset
from bundlesim.lindblad import zero_temperature_dissipators
from bundlesim.trajectories import bundle_check, run_trajectory

cfg = load_preset("fig3")
s = cfg.system
diss = zero_temperature_dissipators(s)
T = s.pulses.period

for seed in range(5):
    rec = run_trajectory(basis_state(s.trunc, 0, 0), (0, 3 * T), s, diss, seed=seed,
                         grid=np.linspace(0, 3 * T, 301), cache_dt=5.0)
    chk = bundle_check(rec, diss.photon_channels(), T, 3, s.bundle_N,
                       window=10 / s.kappa, min_gap=0.1 * T)
    photons = ", ".join(f"{t:.0f}" for t in rec.jump_times(0))
    qubit = rec.count(1)
    print(f"seed {seed}: photon jumps at [{photons}]  qubit jumps {qubit}  "
          f"per cycle {chk.counts}  {'bundles' if chk.ok else 'irregular'}")
