#!/usr/bin/env python3
"""Scan the constrained coercivity minimum over the weight exponent kappa and
the grid, and contrast it with the unconstrained minimum; also run the
low-resolution full-box cross-check, which explores non-radial directions.

Writes coercivity_scan.png.
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from nlslab.spectral_core import Grid
from nlslab.ground_state import RadialGrid
from nlslab.spectral_property import (
    LinearizedOperators,
    cartesian_min_rayleigh,
    constrained_min_rayleigh,
)

ops = LinearizedOperators(3, RadialGrid(3, 512, 30.0))

kappas = [1.0, 1.3, 1.6, 1.8, 1.9, 1.95]
mins = [constrained_min_rayleigh(3, ops=ops, kappa=k).delta_min for k in kappas]
print("kappa scan:", dict(zip(kappas, [round(v, 5) for v in mins])))

grids = [256, 512, 1024]
stab = [constrained_min_rayleigh(
    3, ops=LinearizedOperators(3, RadialGrid(3, m, 30.0)), kappa=1.9
).delta_min for m in grids]
print("grid scan:", dict(zip(grids, [round(v, 7) for v in stab])))

unc = constrained_min_rayleigh(3, ops=ops, kappa=1.9, constraints=None)
print(f"unconstrained minimum: {unc.delta_min:.4f} "
      f"(sectors {unc.sector_values})")

cart, sectors = cartesian_min_rayleigh(2, Grid(2, 64, 14.0), kappa=1.9)
print(f"d=2 full-box cross-check: {cart:.4f} (sectors {sectors}); "
      f"the box admits non-radial directions so it sits at or below the "
      f"radial value")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.6))
ax1.plot(kappas, mins, "o-")
ax1.set(xlabel="kappa", ylabel="delta_min", title="constrained minimum vs kappa (d=3)")
ax2.semilogx(grids, stab, "s-")
ax2.set(xlabel="radial nodes", title="grid stability at kappa=1.9")
fig.tight_layout()
fig.savefig("coercivity_scan.png", dpi=130)
print("wrote coercivity_scan.png")
