"""Impact maps of a ball bouncing elastically on a moving racket.

Two coordinate systems are used on the lifted cylinder:

* time-velocity ``(t, v)`` with ``v = w - f'(t)`` the velocity relative to
  the racket just after the impact (``w`` is the inertial velocity), and
* time-energy ``(t, e)`` with ``e = v**2 / 2``, where the map is exact
  symplectic.

The heavy lifting is done by array functions (``advance``, ``step_energy_arrays``,
``iterate_arrays``) that accept broadcastable arrays of states; the scalar
functions wrap them and raise the typed errors from :mod:`bouncelab.errors`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainExit, GrazingImpact, SingularImplicitSystem, SolverFailure
from .forcing import ForcingProfile

N_SCAN = 4096
_MAX_BRACKET_ITER = 200


@dataclass(frozen=True)
class MapParams:
    """Physical parameters of the map together with the velocity threshold of its embedding domain.

    ``v_star`` defaults to ``4 ||f'|| + 1``; any value must exceed ``4 ||f'||``.
    """

    profile: ForcingProfile
    g: float = 1.0
    v_star: float | None = None

    def __post_init__(self) -> None:
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        v_ss = self.v_star_star
        if self.v_star is None:
            object.__setattr__(self, "v_star", v_ss + 1.0)
        elif not self.v_star > v_ss:
            raise ValueError(f"v_star={self.v_star} must exceed 4*||f'||={v_ss}")
        object.__setattr__(self, "g", float(self.g))
        object.__setattr__(self, "v_star", float(self.v_star))

    @property
    def fdot_norm(self) -> float:
        return self.profile.sup_norm(1)

    @property
    def fddot_norm(self) -> float:
        return self.profile.sup_norm(2)

    @property
    def v_star_star(self) -> float:
        return 4.0 * self.profile.sup_norm(1)

    @property
    def e_star(self) -> float:
        return 0.5 * self.v_star**2

    def v_sharp(self, q: int) -> float:
        """Velocity above which q iterates stay defined."""
        return self.v_star + 4.0 * q * self.fdot_norm

    def e_sharp(self, q: int) -> float:
        return 0.5 * self.v_sharp(q) ** 2

    @property
    def monotone_flight(self) -> bool:
        """True when ``w - g T/2 - f[t, t+T]`` is strictly decreasing in T.

        Its T-derivative is ``-g/2 - d/dT f[t, t+T]`` and the second term is
        bounded by ``||f''||/2``, so a unique impact exists once ``||f''|| < g``.
        """
        return self.fddot_norm < self.g * (1.0 - 1e-12)


class VelocityState(NamedTuple):
    t: float
    v: float

    def to_energy(self) -> "EnergyState":
        return EnergyState(self.t, 0.5 * self.v * self.v)


class EnergyState(NamedTuple):
    t: float
    e: float

    def to_velocity(self) -> VelocityState:
        return VelocityState(self.t, math.sqrt(2.0 * self.e))


@dataclass(frozen=True)
class JacobianTE:
    """Derivative of the time-energy map at one state."""

    dt_dt: float
    dt_de: float
    de_dt: float
    de_de: float

    @classmethod
    def from_array(cls, m) -> "JacobianTE":
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]))

    def as_array(self) -> np.ndarray:
        return np.array([[self.dt_dt, self.dt_de], [self.de_dt, self.de_de]])

    @property
    def det(self) -> float:
        return self.dt_dt * self.de_de - self.dt_de * self.de_dt

    @property
    def trace(self) -> float:
        return self.dt_dt + self.de_de


# ---------------------------------------------------------------------------
# flight time


def _flight_residual(profile: ForcingProfile, t, w, T, g):
    """``w - g T/2 - f[t, t+T]``; its positive roots are the flight times."""
    return w - 0.5 * g * T - profile.divided_difference(t, t + T)


def _flight_slope(profile: ForcingProfile, t, T, g):
    _, d1 = profile.divided_difference_partials(t, t + T)
    return -0.5 * g - d1


def _refine_bracket(profile, t, w, g, a, b, fd):
    """Safeguarded Newton on ``[a, b]`` where the residual goes from >= 0 to <= 0."""
    x = 0.5 * (a + b)
    for _ in range(_MAX_BRACKET_ITER):
        phi = _flight_residual(profile, t, w, x, g)
        pos = phi > 0
        a = np.where(pos, x, a)
        b = np.where(pos, b, x)
        slope = _flight_slope(profile, t, x, g)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - phi / slope
        ok = np.isfinite(newton) & (newton > a) & (newton < b)
        x_new = np.where(ok, newton, 0.5 * (a + b))
        tol = 4e-16 * np.maximum(1.0, np.abs(x))
        phi_tol = 8e-16 * (np.abs(w) + 0.5 * g * np.abs(x) + fd)
        done = (np.abs(phi) <= phi_tol) | (b - a <= tol) | (np.abs(x_new - x) <= tol)
        if np.all(done):
            return np.where(np.abs(phi) <= phi_tol, x, x_new)
        x = np.where(done, x, x_new)
    return x


def flight_time(params: MapParams, t, w):
    """Smallest positive flight time ``T`` with ``f(t) + w T - g T^2/2 = f(t + T)``.

    Array version without grazing checks; lanes must satisfy ``w > f'(t)``.
    All roots lie in ``[2(w - ||f'||)/g, 2(w + ||f'||)/g]`` by the mean value
    theorem, so only that window is searched. For ``||f''|| < g`` the residual
    is monotone there and the bracket holds exactly one root; otherwise the
    window is scanned on ``N_SCAN`` uniform steps for the first sign change.
    """
    profile, g = params.profile, params.g
    t, w = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(w, dtype=float))
    fd = params.fdot_norm
    lo = np.maximum(2.0 * (w - fd) / g, 0.0)
    hi = 2.0 * (w + fd) / g
    if fd == 0.0:
        return 2.0 * w / g
    if params.monotone_flight:
        a, b = lo, hi
    else:
        frac = np.linspace(0.0, 1.0, N_SCAN + 1)
        grid = lo[..., None] + (hi - lo)[..., None] * frac
        phi = _flight_residual(profile, t[..., None], w[..., None], grid, g)
        neg = phi <= 0.0
        neg[..., -1] = True
        j = np.argmax(neg, axis=-1)
        jm = np.maximum(j - 1, 0)
        a = np.take_along_axis(grid, jm[..., None], axis=-1)[..., 0]
        b = np.take_along_axis(grid, j[..., None], axis=-1)[..., 0]
    return _refine_bracket(profile, t, w, g, a, b, fd)


def time_equation_residual(params: MapParams, t, w, t_next):
    """``f(t) + w (t_next - t) - g/2 (t_next - t)^2 - f(t_next)``."""
    f = params.profile
    T = np.asarray(t_next, dtype=float) - t
    return f.eval(t, constant=False) - f.eval(t_next, constant=False) + w * T - 0.5 * params.g * T**2


def next_impact_time(params: MapParams, t: float, w: float) -> float:
    """Time of the next impact after leaving the racket at ``t`` with inertial velocity ``w``."""
    fdot = params.profile.eval(t, 1)
    if w <= fdot:
        raise GrazingImpact(f"w={w!r} <= f'(t)={fdot!r} at t={t!r}")
    T = float(flight_time(params, t, w))
    t_next = t + T
    res = abs(float(time_equation_residual(params, t, w, t_next)))
    if not (T > 0.0 and res < 1e-12 * max(1.0, w * w / params.g)):
        raise SolverFailure(f"impact time solve failed at t={t!r}, w={w!r}: T={T!r}, residual={res!r}")
    return t_next


# ---------------------------------------------------------------------------
# one step


def advance(params: MapParams, t, v, *, jacobian: bool = False):
    """One step of the time-velocity map on arrays (lanes must have ``v > 0``).

    Returns ``(t_next, v_next)`` and, with ``jacobian=True``, also the
    derivative ``d(t_next, v_next)/d(t, v)`` with shape ``(..., 2, 2)``
    obtained by implicit differentiation of the time equation.
    """
    f, g = params.profile, params.g
    t, v = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(v, dtype=float))
    fd0 = f.eval(t, 1)
    w = v + fd0
    T = flight_time(params, t, w)
    t1 = t + T
    fd1 = f.eval(t1, 1)
    v1 = v - 2.0 * f.divided_difference(t, t1) + fd1 + fd0
    if not jacobian:
        return t1, v1
    # R(t, v, t1) = f(t) + (v + f'(t)) T - g T^2/2 - f(t1);  dR/dt1 = -v1
    if np.any(~(v1 > 1e-12 * np.maximum(1.0, np.abs(v)))):
        raise SingularImplicitSystem("arrival relative velocity vanishes; implicit system is singular")
    fdd0 = f.eval(t, 2)
    fdd1 = f.eval(t1, 2)
    dt1_dt = ((g + fdd0) * T - v) / v1
    dt1_dv = T / v1
    dv1_dt = (g + fdd1) * dt1_dt - fdd0 - g
    dv1_dv = (g + fdd1) * dt1_dv - 1.0
    jac = np.stack(
        [np.stack([dt1_dt, dt1_dv], axis=-1), np.stack([dv1_dt, dv1_dv], axis=-1)],
        axis=-2,
    )
    return t1, v1, jac


def step_energy_arrays(params: MapParams, t, e, *, jacobian: bool = False):
    """Time-energy map on arrays; with ``jacobian=True`` also returns ``(..., 2, 2)`` derivatives."""
    e = np.asarray(e, dtype=float)
    v = np.sqrt(2.0 * e)
    if not jacobian:
        t1, v1 = advance(params, t, v)
        return t1, 0.5 * v1**2
    t1, v1, jv = advance(params, t, v, jacobian=True)
    je = np.empty_like(jv)
    je[..., 0, 0] = jv[..., 0, 0]
    je[..., 0, 1] = jv[..., 0, 1] / v
    je[..., 1, 0] = v1 * jv[..., 1, 0]
    je[..., 1, 1] = v1 * jv[..., 1, 1] / v
    return t1, 0.5 * v1**2, je


def step_velocity(params: MapParams, s: VelocityState) -> VelocityState:
    """Next impact in time-velocity form.

    A state with ``v <= 0`` (ball not leaving the racket) is returned
    unchanged, which is the completed definition of a bouncing motion.
    """
    t, v = s
    if v <= 0.0:
        return VelocityState(float(t), float(v))
    t1 = next_impact_time(params, t, v + params.profile.eval(t, 1))
    f = params.profile
    v1 = v - 2.0 * f.divided_difference(t, t1) + f.eval(t1, 1) + f.eval(t, 1)
    return VelocityState(float(t1), float(v1))


def step_energy(params: MapParams, s: EnergyState) -> EnergyState:
    t, e = s
    if e <= 0.0:
        raise GrazingImpact(f"energy {e!r} <= 0 at t={t!r}")
    t1, v1 = step_velocity(params, VelocityState(t, math.sqrt(2.0 * e)))
    return EnergyState(t1, 0.5 * v1 * v1)


def jacobian_energy(params: MapParams, s: EnergyState) -> JacobianTE:
    t, e = s
    if e <= 0.0:
        raise GrazingImpact(f"energy {e!r} <= 0 at t={t!r}")
    fdot = params.profile.eval(t, 1)
    next_impact_time(params, t, math.sqrt(2.0 * e) + fdot)  # validates the root
    _, _, jac = step_energy_arrays(params, t, e, jacobian=True)
    return JacobianTE.from_array(jac)


# ---------------------------------------------------------------------------
# iteration


def iterate_arrays(params: MapParams, t, e, q: int, *, jacobian: bool = True, strict: bool = True):
    """``q`` steps of the time-energy map on arrays.

    Returns ``(times, energies, jac)`` where ``times``/``energies`` have a
    leading axis of length ``q + 1`` and ``jac`` is the chain-rule product of
    the one-step derivatives (``None`` when ``jacobian=False``). Lanes that
    reach a non-positive energy raise :class:`DomainExit`; with
    ``strict=False`` they are filled with NaN instead.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    t, e = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(e, dtype=float))
    t = t.copy()
    e = e.copy()
    times = [t]
    energies = [e]
    acc = None
    if jacobian:
        acc = np.broadcast_to(np.eye(2), t.shape + (2, 2)).copy()
    for _ in range(q):
        ok = e > 0.0
        if strict and not np.all(ok):
            raise DomainExit("iterate reached e <= 0")
        t_new = np.full_like(t, np.nan)
        e_new = np.full_like(e, np.nan)
        if jacobian:
            j = np.full(t.shape + (2, 2), np.nan)
            if strict:
                t_new, e_new, j = step_energy_arrays(params, t, e, jacobian=True)
            else:
                ok = ok & _jacobian_safe(params, t, e, ok)
                t_new[ok], e_new[ok], j[ok] = step_energy_arrays(params, t[ok], e[ok], jacobian=True)
            acc = j @ acc
        elif np.all(ok):
            t_new, e_new = step_energy_arrays(params, t, e)
        else:
            t_new[ok], e_new[ok] = step_energy_arrays(params, t[ok], e[ok])
        t, e = t_new, e_new
        times.append(t)
        energies.append(e)
    if strict and not np.all(e > 0.0):
        raise DomainExit("iterate reached e <= 0")
    return np.stack(times), np.stack(energies), acc


def _jacobian_safe(params: MapParams, t, e, ok):
    """Lanes whose arrival velocity is large enough for implicit differentiation."""
    safe = ok.copy()
    if np.any(ok):
        _, v1 = advance(params, t[ok], np.sqrt(2.0 * e[ok]))
        safe[ok] = v1 > 1e-12 * np.maximum(1.0, np.sqrt(2.0 * e[ok]))
    return safe


def iterate(params: MapParams, s: EnergyState, q: int) -> tuple[list[EnergyState], np.ndarray]:
    """Orbit segment ``s_0, ..., s_q`` and the accumulated 2x2 Jacobian."""
    if s.e <= 0.0:
        raise DomainExit(f"initial energy {s.e!r} <= 0")
    states = [EnergyState(float(s.t), float(s.e))]
    for _ in range(q):
        nxt = step_energy(params, states[-1])
        if not nxt.e > 0.0:
            raise DomainExit(f"energy fell to {nxt.e!r} at t={nxt.t!r}")
        states.append(nxt)
    _, _, jac = iterate_arrays(params, s.t, s.e, q)
    return states, np.asarray(jac)


# ---------------------------------------------------------------------------
# bouncing motions


@dataclass
class Trajectory:
    """Impacts ``(t_n, v_n)`` of a bouncing motion.

    ``grazing[n]`` marks rows produced by the rule ``t_next = t`` (row 0 is
    flagged when the initial state itself is grazing); ``falling[n]`` tells
    whether the impact producing row ``n`` hit the ball on its way down.
    """

    t: np.ndarray
    v: np.ndarray
    grazing: np.ndarray
    falling: np.ndarray

    @property
    def e(self) -> np.ndarray:
        return 0.5 * self.v**2

    @property
    def all_falling(self) -> bool:
        moving = ~self.grazing[1:]
        return bool(np.all(self.falling[1:][moving]))

    @property
    def first_grazing_step(self) -> int | None:
        idx = np.flatnonzero(self.grazing)
        return int(idx[0]) if idx.size else None

    def to_csv(self, path, form: str = "velocity") -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if form == "velocity":
                writer.writerow(["n", "t", "v", "e", "grazing_flag"])
                for n in range(len(self.t)):
                    writer.writerow(
                        [n, _fmt(self.t[n]), _fmt(self.v[n]), _fmt(self.e[n]), int(self.grazing[n])]
                    )
            elif form == "energy":
                writer.writerow(["n", "t", "e"])
                for n in range(len(self.t)):
                    writer.writerow([n, _fmt(self.t[n]), _fmt(self.e[n])])
            else:
                raise ValueError(f"unknown form {form!r}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def simulate_bouncing(params: MapParams, s0: VelocityState, n_steps: int) -> Trajectory:
    """Apply the time-velocity map ``n_steps`` times, grazing steps included."""
    if s0.v < 0.0:
        raise ValueError("initial relative velocity must be >= 0")
    g = params.g
    f = params.profile
    ts = [float(s0.t)]
    vs = [float(s0.v)]
    grazing = [s0.v <= 0.0]
    falling = [True]
    for _ in range(n_steps):
        t, v = ts[-1], vs[-1]
        if v <= 0.0:
            ts.append(t)
            vs.append(v)
            grazing.append(True)
            falling.append(False)
            continue
        t1, v1 = step_velocity(params, VelocityState(t, v))
        w = v + f.eval(t, 1)
        ts.append(t1)
        vs.append(v1)
        grazing.append(False)
        # inertial velocity just before impact is w - g (t1 - t)
        falling.append(w - g * (t1 - t) < 0.0)
    return Trajectory(np.array(ts), np.array(vs), np.array(grazing), np.array(falling))


# ---------------------------------------------------------------------------
# domain probes


def energy_grid(params: MapParams, n_t: int, n_e: int, e_lo: float | None = None, e_hi: float | None = None):
    """Grid over ``[0, 1) x [e_lo, e_hi]`` (default ``[e_*, 4 e_*]``) as 2-D arrays."""
    e_lo = params.e_star if e_lo is None else e_lo
    e_hi = 4.0 * params.e_star if e_hi is None else e_hi
    tt = np.arange(n_t) / n_t
    ee = np.linspace(e_lo, e_hi, n_e)
    return np.meshgrid(tt, ee, indexing="ij")


def injectivity_probe(params: MapParams, n_t: int = 50, n_e: int = 50) -> int:
    """Count grid pairs whose images on the cylinder are implausibly close.

    Neighbouring grid points map at least ``sigma_min(J) * h`` apart, with
    ``sigma_min`` the smallest singular value of the local Jacobian and ``h``
    the smaller grid spacing; pairs closer than a quarter of that bound would
    signal a fold. Returns the number of such pairs (0 for an embedding).
    """
    T, E = energy_grid(params, n_t, n_e)
    t1, e1, jac = step_energy_arrays(params, T, E, jacobian=True)
    sv = np.linalg.svd(jac.reshape(-1, 2, 2), compute_uv=False)
    h = min(1.0 / n_t, (E[0, -1] - E[0, 0]) / max(n_e - 1, 1))
    radius = 0.25 * float(sv[:, -1].min()) * h
    pts = np.column_stack([np.mod(t1.ravel(), 1.0), e1.ravel()])
    box = [1.0, float(pts[:, 1].max()) * 4.0 + 1.0]
    tree = cKDTree(pts, boxsize=box)
    return len(tree.query_pairs(radius))
