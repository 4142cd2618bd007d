"""Limiting density for a two-atom bulk at several noise levels (CSV on stdout).

Shows the bulk splitting into one component per atom as sigma shrinks.
"""

import sys

import numpy as np

from ipn.equilibrium import ModelParams, density_grid, support
from ipn.measure import AtomicMeasure

nu = AtomicMeasure.from_atoms([[1.0, 0.5], [3.0, 0.5]])
x = np.linspace(0.0, 6.0, 601)
sigmas = (0.1, 0.3, 0.6, 1.0)

cols = []
for s in sigmas:
    p = ModelParams(s, 0.5, nu)
    cols.append(density_grid(p, x, 1e-7))
    comps = ", ".join(f"[{a:.3f}, {b:.3f}]" for a, b in support(p).support)
    print(f"sigma={s}: support {comps}", file=sys.stderr)

print("x," + ",".join(f"sigma={s}" for s in sigmas))
for i, xi in enumerate(x):
    print(f"{xi:.4f}," + ",".join(f"{c[i]:.6g}" for c in cols))
