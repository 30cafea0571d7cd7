"""Error decay with the number of local eigenfunctions (constant coefficient).

    python3 demos/example1_decay.py [n]

Builds the local bases once at the largest n_loc and truncates them for the
smaller values; prints error_v / error_p and the worst n-width per n_loc.
"""
import sys

import numpy as np

from mixed_msgfem import Experiment, RunConfig

n = int(sys.argv[1]) if len(sys.argv) > 1 else 64
cfg = RunConfig(n=n, m=4, ell=6, n_loc=12, gamma=1.0)
exp = Experiment(cfg)

print(f"n={n}  m={cfg.m}  ell={cfg.ell}  gamma={cfg.gamma}")
print(f"{'n_loc':>5} {'error_v':>10} {'error_p':>10} {'error_div':>10} {'coarse dofs':>11}")
for k in range(1, 13):
    r = exp.run(cfg.replace(n_loc=k), max_n_loc=12)
    print(f"{k:5d} {r.error_v:10.3e} {r.error_p:10.3e} {r.error_div:10.3e} {r.dofs_coarse:11d}")

# d_n = lambda_{n+1}^{-1/2}, worst subdomain
_, locs, _ = exp.bases(cfg, 12)
d = np.array([lb.velocity.n_widths() for lb in locs])
print("max_i d_n:", " ".join(f"{v:.2e}" for v in d.max(axis=0)))
