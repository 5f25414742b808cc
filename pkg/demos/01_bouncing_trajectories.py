"""A ball on a vibrating racket: first look at the impact map.

Run with ``python3 demos/01_bouncing_trajectories.py``.
"""

# %%
from __future__ import annotations

import numpy as np

from bouncelab import EnergyState, ForcingProfile, MapParams, VelocityState, iterate, simulate_bouncing

# %% [markdown]
# With a motionless racket the ball returns every ``2 v / g`` time units with
# the same speed.  Taking off at t = 0 with v = 1 it lands at t = 2, 4, 6, ...

# %%
flat = MapParams(ForcingProfile.zero(), g=1.0)
traj = simulate_bouncing(flat, VelocityState(0.0, 1.0), 4)
print("flat racket impact times:", traj.t)

# %% [markdown]
# Now shake the racket gently, ``f(t) = 0.01 cos(2 pi t)``.  Impacts drift in
# phase and the energy wobbles, but never by more than ``4 n ||f'||`` in speed
# after n bounces.

# %%
racket = ForcingProfile.single_cosine(0.01)
params = MapParams(racket, g=1.0)
print(f"||f'|| = {params.fdot_norm:.6f}, ||f''|| = {params.fddot_norm:.6f}, e_* = {params.e_star:.5f}")

traj = simulate_bouncing(params, VelocityState(0.1, 1.3), 12)
for n, (t, v) in enumerate(zip(traj.t, traj.v)):
    print(f"  impact {n:2d}: t = {t:10.6f}  phase = {t % 1:8.6f}  v = {v:.8f}")
drift = np.abs(traj.v - traj.v[0])
print("largest speed drift:", drift.max(), "bound:", 4 * len(traj.v) * params.fdot_norm)

# %% [markdown]
# The time-energy form of the map is area preserving: the Jacobian of a few
# iterates has determinant one up to rounding.

# %%
states, jac = iterate(params, EnergyState(0.25, 2.0), 5)
print("det of 5-step Jacobian - 1 =", np.linalg.det(jac) - 1.0)

# %% [markdown]
# A ball that does not leave the racket (v = 0) stays put: every step is a
# grazing step and the trajectory records it.

# %%
still = simulate_bouncing(params, VelocityState(0.4, 0.0), 3)
print("grazing flags:", still.grazing, "first grazing step:", still.first_grazing_step)
