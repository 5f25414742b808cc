"""Generating function of the time-energy map and the discrete periodic action.

For two consecutive impact times ``t0 < t1`` the ball flies along the unique
parabola joining the racket positions ``f(t0)`` and ``f(t1)``. With ``A`` the
Lagrangian action of that arc and ``G`` a primitive of ``f'^2/2 - g f``,

    h(t0, t1) = -A(t0, t1) + G(t1) - G(t0)

satisfies ``dh/dt0 = -e0`` and ``dh/dt1 = e1`` where ``e0`` is the take-off
energy and ``e1`` the energy after the next impact, i.e. ``h`` generates the
time-energy map. ``G`` is split as ``m t + P(t)`` with ``m`` the mean of its
derivative and ``P`` a trigonometric polynomial, which makes ``h`` exactly
invariant under ``(t0, t1) -> (t0 + 1, t1 + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import InadmissibleSegment
from .forcing import ForcingProfile
from .impact_map import MapParams, flight_time, iterate_arrays

#: tabulation size for the boundary primitive
G_NODES = 4096
#: segments need take-off energy above this fraction of e_star
ADMISSIBLE_FRACTION = 0.1


@dataclass(frozen=True)
class GeneratingContext:
    params: MapParams

    @property
    def profile(self) -> ForcingProfile:
        return self.params.profile

    @property
    def g(self) -> float:
        return self.params.g

    @cached_property
    def mean_m(self) -> float:
        """Mean over one period of ``f'^2/2 - g f``."""
        a, b = self.profile.fourier_arrays()
        k = np.arange(len(a))
        return float(0.25 * np.sum((2 * np.pi * k) ** 2 * (a**2 + b**2)) - self.g * a[0])

    @cached_property
    def primitive_periodic(self) -> ForcingProfile:
        """Zero-mean periodic part ``P`` of the boundary primitive, as a trig series.

        The integrand ``f'^2/2 - g f - m`` has degree ``2K``; sampling it on
        ``G_NODES`` points and integrating its discrete Fourier series term by
        term is exact up to rounding.
        """
        K = self.profile.degree
        n = max(G_NODES, 4 * K + 2)
        nodes = np.arange(n) / n
        f = self.profile
        integrand = 0.5 * f.eval(nodes, 1) ** 2 - self.g * f.eval(nodes) - self.mean_m
        X = np.fft.rfft(integrand)
        kmax = 2 * K
        k = np.arange(1, kmax + 1)
        A = 2.0 * X[1 : kmax + 1].real / n
        B = -2.0 * X[1 : kmax + 1].imag / n
        alpha = -B / (2 * np.pi * k)
        beta = A / (2 * np.pi * k)
        return ForcingProfile((0.0, *alpha), tuple(beta))

    @property
    def e_floor(self) -> float:
        return ADMISSIBLE_FRACTION * self.params.e_star

    def boundary_primitive(self, t):
        return self.mean_m * np.asarray(t, dtype=float) + self.primitive_periodic.eval(t)

    def boundary_primitive_difference(self, t0, t1):
        """``G(t1) - G(t0)`` without cancellation in the linear part."""
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        P = self.primitive_periodic
        return self.mean_m * (t1 - t0) + P.eval(t1) - P.eval(t0)


def free_fall_action(ctx: GeneratingContext, t0, t1):
    """Lagrangian action ``int (y'^2/2 - g y)`` of the arc from ``f(t0)`` to ``f(t1)``."""
    f, g = ctx.profile, ctx.g
    t0 = np.asarray(t0, dtype=float)
    T = np.asarray(t1, dtype=float) - t0
    s = f.divided_difference(t0, t1)
    return 0.5 * s**2 * T - 0.5 * g * s * T**2 - g**2 * T**3 / 24.0 - g * f.eval(t0) * T


def segment_velocities(ctx: GeneratingContext, t0, t1):
    """Relative take-off and arrival speeds ``(u0, u1)`` of the arc ``t0 -> t1``."""
    f, g = ctx.profile, ctx.g
    T = np.asarray(t1, dtype=float) - np.asarray(t0, dtype=float)
    s = f.divided_difference(t0, t1)
    u0 = s + 0.5 * g * T - f.eval(t0, 1)
    u1 = 0.5 * g * T - s + f.eval(t1, 1)
    return u0, u1


def admissible(ctx: GeneratingContext, t0, t1, *, check_flight: bool = True):
    """Boolean mask of segments that describe a genuine flight above the energy floor."""
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    T = t1 - t0
    u0, u1 = segment_velocities(ctx, t0, np.where(T > 0, t1, t0 + 1.0))
    ok = (T > 0) & (u0 > 0) & (u1 > 0) & (0.5 * u0**2 > ctx.e_floor)
    if check_flight and not ctx.params.monotone_flight and np.any(ok):
        # with ||f''|| >= g the parabola may touch the racket earlier
        w = u0 + ctx.profile.eval(t0, 1)
        T_first = flight_time(ctx.params, t0, np.where(ok, w, 1.0))
        ok = ok & (np.abs(T_first - T) <= 1e-9 * np.maximum(1.0, T))
    return ok


def _require_admissible(ctx, t0, t1) -> None:
    ok = admissible(ctx, t0, t1)
    if not np.all(ok):
        bad = np.flatnonzero(np.atleast_1d(~ok))
        raise InadmissibleSegment(f"{bad.size} inadmissible segment(s), first index {int(bad[0])}")


def gen_h(ctx: GeneratingContext, t0, t1, *, check: bool = True):
    """Generating function ``h(t0, t1)``."""
    if check:
        _require_admissible(ctx, t0, t1)
    return -free_fall_action(ctx, t0, t1) + ctx.boundary_primitive_difference(t0, t1)


def gen_h_partials(ctx: GeneratingContext, t0, t1):
    """First partials ``(h_1, h_2)`` from term-by-term differentiation of the closed form."""
    f, g = ctx.profile, ctx.g
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    T = t1 - t0
    s = f.divided_difference(t0, t1)
    s0, s1 = f.divided_difference_partials(t0, t1)
    f0 = f.eval(t0)
    d0 = f.eval(t0, 1)
    d1 = f.eval(t1, 1)
    dA_dt1 = s * s1 * T + 0.5 * s**2 - 0.5 * g * (s1 * T**2 + 2 * s * T) - g**2 * T**2 / 8.0 - g * f0
    dA_dt0 = (
        s * s0 * T
        - 0.5 * s**2
        - 0.5 * g * (s0 * T**2 - 2 * s * T)
        + g**2 * T**2 / 8.0
        - g * d0 * T
        + g * f0
    )
    Gp0 = 0.5 * d0**2 - g * f0
    Gp1 = 0.5 * d1**2 - g * f.eval(t1)
    return -dA_dt0 - Gp0, -dA_dt1 + Gp1


def gen_h_second_partials(ctx: GeneratingContext, t0, t1):
    """``(h_11, h_12, h_22)``.

    Uses ``h_1 = -u0^2/2`` and ``h_2 = u1^2/2`` with the take-off and arrival
    speeds ``u0 = s + gT/2 - f'(t0)``, ``u1 = gT/2 - s + f'(t1)``, ``s = f[t0, t1]``.
    """
    f, g = ctx.profile, ctx.g
    u0, u1 = segment_velocities(ctx, t0, t1)
    s0, s1 = f.divided_difference_partials(t0, t1)
    h11 = -u0 * (s0 - 0.5 * g - f.eval(t0, 2))
    h12 = -u0 * (s1 + 0.5 * g)
    h22 = u1 * (0.5 * g - s1 + f.eval(t1, 2))
    return h11, h12, h22


def gen_h_consistency(ctx: GeneratingContext, t0, e0):
    """Residuals ``(|h_1(t0, t1) + e0|, |h_2(t0, t1) - e1|)`` with ``(t1, e1)`` the map image.

    Vectorised over ``t0``/``e0``. Small residuals certify that ``h``
    generates the time-energy map.
    """
    times, energies, _ = iterate_arrays(ctx.params, t0, e0, 1, jacobian=False)
    t1, e1 = times[1], energies[1]
    h1, h2 = gen_h_partials(ctx, times[0], t1)
    return np.abs(h1 + energies[0]), np.abs(h2 - e1)


# ---------------------------------------------------------------------------
# periodic configurations


@dataclass(frozen=True)
class ActionConfiguration:
    """Impact times ``t_0..t_{q-1}`` of one period; closure ``t_q = t_0 + p``."""

    times: tuple[float, ...]
    p: int
    q: int

    def __post_init__(self) -> None:
        if self.q < 1 or self.p < 1:
            raise ValueError("p and q must be positive")
        if len(self.times) != self.q:
            raise ValueError(f"expected {self.q} times, got {len(self.times)}")
        object.__setattr__(self, "times", tuple(float(x) for x in self.times))

    @classmethod
    def from_array(cls, times: Sequence[float], p: int, q: int) -> "ActionConfiguration":
        return cls(tuple(np.asarray(times, dtype=float)), p, q)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.times)

    def closed(self) -> np.ndarray:
        """``t_0, ..., t_q`` with ``t_q = t_0 + p``."""
        x = self.array
        return np.append(x, x[0] + self.p)

    def shifted(self, delta: float) -> "ActionConfiguration":
        return ActionConfiguration(tuple(self.array + delta), self.p, self.q)


def _segments(x: np.ndarray, p: int):
    closed = np.append(x, x[0] + p)
    return closed[:-1], closed[1:]


def is_admissible(cfg: ActionConfiguration, ctx: GeneratingContext) -> bool:
    a, b = _segments(cfg.array, cfg.p)
    return bool(np.all(admissible(ctx, a, b)))


def action_W(cfg: ActionConfiguration, ctx: GeneratingContext) -> float:
    """``sum_i h(t_i, t_{i+1})`` over one period."""
    a, b = _segments(cfg.array, cfg.p)
    return float(np.sum(gen_h(ctx, a, b)))


def action_grad(cfg: ActionConfiguration, ctx: GeneratingContext) -> np.ndarray:
    """``dW/dt_i = h_2(t_{i-1}, t_i) + h_1(t_i, t_{i+1})`` with cyclic closure."""
    a, b = _segments(cfg.array, cfg.p)
    _require_admissible(ctx, a, b)
    h1, h2 = gen_h_partials(ctx, a, b)
    # segment i joins t_i -> t_{i+1}; its h_2 belongs to t_{i+1}
    return h1 + np.roll(h2, 1)


def action_hess(cfg: ActionConfiguration, ctx: GeneratingContext) -> np.ndarray:
    """Cyclic tridiagonal Hessian of the action (entries add up when q <= 2)."""
    q = cfg.q
    a, b = _segments(cfg.array, cfg.p)
    _require_admissible(ctx, a, b)
    h11, h12, h22 = gen_h_second_partials(ctx, a, b)
    H = np.zeros((q, q))
    idx = np.arange(q)
    nxt = (idx + 1) % q
    np.add.at(H, (idx, idx), h11)
    np.add.at(H, (nxt, nxt), h22)
    np.add.at(H, (idx, nxt), h12)
    np.add.at(H, (nxt, idx), h12)
    return H


def energies_from_times(cfg: ActionConfiguration, ctx: GeneratingContext) -> np.ndarray:
    """Take-off energies ``e_i = -h_1(t_i, t_{i+1})`` of a configuration."""
    a, b = _segments(cfg.array, cfg.p)
    u0, _ = segment_velocities(ctx, a, b)
    return 0.5 * u0**2


# ---------------------------------------------------------------------------
# q-step generating function


def reduced_action(ctx: GeneratingContext, t_start: float, t_end: float, interior, *, tol: float = 1e-13):
    """Action of a q-segment chain from ``t_start`` to ``t_end`` with stationary interior times.

    ``interior`` seeds the ``q - 1`` free times. Returns ``(value, interior)``.
    """
    x = np.asarray(interior, dtype=float).copy()
    if x.size == 0:
        return float(gen_h(ctx, t_start, t_end)), x
    for _ in range(50):
        chain = np.concatenate([[t_start], x, [t_end]])
        a, b = chain[:-1], chain[1:]
        h1, h2 = gen_h_partials(ctx, a, b)
        grad = h2[:-1] + h1[1:]
        h11, h12, h22 = gen_h_second_partials(ctx, a, b)
        n = x.size
        H = np.diag(h22[:-1] + h11[1:])
        if n > 1:
            off = h12[1:-1]
            H += np.diag(off, 1) + np.diag(off, -1)
        step = np.linalg.solve(H, -grad)
        x = x + step
        if np.max(np.abs(step)) < tol:
            break
    chain = np.concatenate([[t_start], x, [t_end]])
    return float(np.sum(gen_h(ctx, chain[:-1], chain[1:]))), x


def q_step_generation_residuals(ctx: GeneratingContext, t0: float, e0: float, q: int, delta: float = 1e-5):
    """Check that the reduced q-step action generates the q-th iterate.

    The endpoint derivatives of :func:`reduced_action` (central differences)
    must equal ``-e_0`` and ``e_q``. Returns the two absolute residuals.
    """
    times, energies, _ = iterate_arrays(ctx.params, t0, e0, q, jacobian=False)
    times = np.asarray(times, dtype=float)
    t_end, e_end = float(times[-1]), float(energies[-1])
    interior = times[1:-1]
    wp, _ = reduced_action(ctx, t0 + delta, t_end, interior)
    wm, _ = reduced_action(ctx, t0 - delta, t_end, interior)
    d_start = (wp - wm) / (2 * delta)
    wp, _ = reduced_action(ctx, t0, t_end + delta, interior)
    wm, _ = reduced_action(ctx, t0, t_end - delta, interior)
    d_end = (wp - wm) / (2 * delta)
    return abs(d_start + e0), abs(d_end - e_end)
