"""Equal-time and delayed g_N^(2) over one dissipative STIRAP cycle.

Run:  python demos/delayed_correlation.py   (a few minutes)
"""
import numpy as np

from bundlesim import basis_density
from bundlesim.config import load_preset
from bundlesim.lindblad import evolve_master
from bundlesim.observables import g2_delayed, g2_series, locate_extremum_times

# fig5abc has the fig2b physics with the tight tolerances that conditioning
# on a small photon moment needs
cfg = load_preset("fig5abc")
s = cfg.system
grid = np.linspace(0, 4000, 401)
states = evolve_master(basis_density(s.trunc, 0, 0), (0, 4000), s, settings=cfg.settings, grid=grid)

for N, kind in [(1, "max"), (2, "min")]:
    g = g2_series(states, N)
    # skip the onset, where <b^dag^N b^N> is tiny and g2 is dominated by it
    busy = g.grid[g[f"moment_N{N}"] > 1e-3]
    t_s = locate_extremum_times(g, f"g2_N{N}", (busy[0], busy[-1]), kind)
    k = int(np.argmin(np.abs(grid - t_s)))
    d = g2_delayed(t_s, np.linspace(0, 2000, 11), N, s, settings=cfg.settings,
                   rho0=states[k], t0=t_s)
    print(f"N={N}: {kind} of g2(t,t) at t={t_s:g}")
    for tau, v in zip(d.grid, d[f"g2_N{N}"]):
        print(f"   tau={tau:6.0f}  g2={v:.4f}")
