"""When the racket does not move, periodic motions come in a continuum.

The sweep recognises this case: the fixed points fill the circle, a smooth
curve fits them to rounding accuracy and every orbit is parabolic.
"""

# %%
from __future__ import annotations

import numpy as np

from bouncelab import ForcingProfile, GeneratingContext, MapParams, OrbitKey, SingularJacobian, newton_orbit
from bouncelab import sweep_enumerate

ctx = GeneratingContext(MapParams(ForcingProfile.zero(), g=1.0))
key = OrbitKey(2, 1)

# %% [markdown]
# Newton's method still converges, but its matrix is singular: the fixed
# point is not isolated.  The error carries the converged orbit.

# %%
try:
    newton_orbit(key, (0.3, 0.47), ctx)
except SingularJacobian as exc:
    print(f"singular Newton matrix (condition {exc.condition:.2e}), orbit energy {exc.orbit.energies[0]}")

# %%
report = sweep_enumerate(key, ctx)
t = np.linspace(0.0, 1.0, 9)
print(report.kind.value, "with", len(report.orbits), "sampled orbits")
print("fitted curve e(t):", report.curve(t))
print("traces:", sorted({round(o.monodromy_trace, 12) for o in report.orbits}))

# %% [markdown]
# A tiny shake is enough to break the family into finitely many orbits.

# %%
for amp in (1e-4, 1e-3):
    shaken = GeneratingContext(MapParams(ForcingProfile.single_cosine(amp), g=1.0))
    rep = sweep_enumerate(key, shaken)
    print(f"amplitude {amp:g}: {rep.kind.value}, {len(rep.orbits)} orbits,",
          [o.stability.value for o in rep.orbits])
