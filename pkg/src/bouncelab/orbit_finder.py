"""Search and classification of (p, q)-periodic bouncing motions.

Convention: ``q`` is the number of bounces per period and ``p`` the integer
time period, so an orbit closes as ``(t_{n+q}, e_{n+q}) = (t_n + p, e_n)``
and its points are fixed points of ``sigma^{-p} o Phi^q`` with
``sigma(t, e) = (t + 1, e)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from math import gcd
from typing import Sequence

import numpy as np

from .errors import (
    BounceLabError,
    GridTooCoarse,
    InadmissibleSegment,
    NoConvergence,
    PathCollapse,
    SingularJacobian,
)
from .impact_map import MapParams, iterate_arrays
from .variational import (
    ActionConfiguration,
    GeneratingContext,
    action_grad,
    action_hess,
    admissible,
    gen_h,
    is_admissible,
)

FIXED_POINT_TOL = 1e-10
POLISH_TOL = 1e-12
DEDUP_TOL = 1e-8
PARABOLIC_TOL = 1e-6
MORSE_ZERO_TOL = 1e-9
SINGULAR_COND = 1e12
N_CURVE = 50
FILL_EPS = 0.05
CURVE_CHECKS = 256
CURVE_TOL = 1e-8
STRING_NODES = 33
_CANON_TOL = 1e-9


@dataclass(frozen=True)
class Tolerances:
    """Solver thresholds used by the orbit search."""

    fixed_point: float = FIXED_POINT_TOL
    dedup: float = DEDUP_TOL
    parabolic: float = PARABOLIC_TOL
    morse_zero: float = MORSE_ZERO_TOL
    singular_cond: float = SINGULAR_COND
    curve: float = CURVE_TOL

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not value > 0.0:
                raise ValueError(f"tolerance {name} must be positive, got {value!r}")


DEFAULT_TOLERANCES = Tolerances()


class Stability(str, enum.Enum):
    ELLIPTIC = "Elliptic"
    HYPERBOLIC = "Hyperbolic"
    PARABOLIC = "Parabolic"


class ReportKind(str, enum.Enum):
    FINITE = "Finite"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class OrbitKey:
    """Rotation data ``(p, q)``: ``q`` bounces in time ``p``."""

    p: int
    q: int
    require_coprime: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.p < 1 or self.q < 1:
            raise ValueError(f"p and q must be positive, got ({self.p}, {self.q})")
        if self.require_coprime and gcd(self.p, self.q) != 1:
            raise ValueError(f"p={self.p} and q={self.q} are not coprime")

    @property
    def ratio(self) -> float:
        return self.p / self.q

    def resonant_energy(self, g: float) -> float:
        """Energy of the orbit for a motionless racket: ``g^2 p^2 / (8 q^2)``."""
        return g * g * self.p**2 / (8.0 * self.q**2)


def classify_trace(trace: float, tol: float = PARABOLIC_TOL) -> Stability:
    if abs(abs(trace) - 2.0) <= tol:
        return Stability.PARABOLIC
    return Stability.ELLIPTIC if abs(trace) < 2.0 else Stability.HYPERBOLIC


@dataclass
class PeriodicOrbit:
    """A periodic bouncing motion, normalised so that ``times[0]`` is in [0, 1).

    ``times[0]`` is the orbit point with the smallest ``t mod 1``.
    """

    key: OrbitKey
    times: tuple[float, ...]
    energies: tuple[float, ...]
    action: float
    morse_index: int
    monodromy_trace: float
    stability: Stability
    residue: float
    monodromy_det: float = 1.0
    residual: float = 0.0
    threshold_warning: bool = False

    @property
    def point(self) -> tuple[float, float]:
        return self.times[0], self.energies[0]

    def configuration(self) -> ActionConfiguration:
        return ActionConfiguration(self.times, self.key.p, self.key.q)

    def to_dict(self) -> dict:
        return {
            "p": self.key.p,
            "q": self.key.q,
            "times": [float(x) for x in self.times],
            "energies": [float(x) for x in self.energies],
            "action": float(self.action),
            "morse_index": int(self.morse_index),
            "monodromy_trace": float(self.monodromy_trace),
            "monodromy_det": float(self.monodromy_det),
            "stability": self.stability.value,
            "residue": float(self.residue),
            "residual": float(self.residual),
            "threshold_warning": bool(self.threshold_warning),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PeriodicOrbit":
        return cls(
            key=OrbitKey(int(data["p"]), int(data["q"]), require_coprime=False),
            times=tuple(float(x) for x in data["times"]),
            energies=tuple(float(x) for x in data["energies"]),
            action=float(data["action"]),
            morse_index=int(data["morse_index"]),
            monodromy_trace=float(data["monodromy_trace"]),
            stability=Stability(data["stability"]),
            residue=float(data["residue"]),
            monodromy_det=float(data.get("monodromy_det", 1.0)),
            residual=float(data.get("residual", 0.0)),
            threshold_warning=bool(data.get("threshold_warning", False)),
        )


@dataclass
class DegeneracyReport:
    kind: ReportKind
    key: OrbitKey
    orbits: list[PeriodicOrbit]
    curve_samples: list[tuple[float, float]] = field(default_factory=list)
    curve_cos: list[float] = field(default_factory=list)
    curve_sin: list[float] = field(default_factory=list)
    curve_residual: float | None = None
    instability_witness: int | str | None = None
    theory_violation: bool = False
    threshold_warning: bool = False
    grid: tuple[int, int] = (0, 0)
    e_range: tuple[float, float] = (0.0, 0.0)

    def curve(self, t):
        """Fitted graph ``e = gamma(t)`` (Degenerate reports only)."""
        t = np.asarray(t, dtype=float)
        return _trig_eval(np.asarray(self.curve_cos), np.asarray(self.curve_sin), t)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "p": self.key.p,
            "q": self.key.q,
            "orbits": [o.to_dict() for o in self.orbits],
            "curve_samples": [[float(t), float(e)] for t, e in self.curve_samples],
            "curve_cos": [float(c) for c in self.curve_cos],
            "curve_sin": [float(c) for c in self.curve_sin],
            "curve_residual": None if self.curve_residual is None else float(self.curve_residual),
            "instability_witness": self.instability_witness,
            "theory_violation": bool(self.theory_violation),
            "threshold_warning": bool(self.threshold_warning),
            "grid": list(self.grid),
            "e_range": [float(x) for x in self.e_range],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DegeneracyReport":
        return cls(
            kind=ReportKind(data["kind"]),
            key=OrbitKey(int(data["p"]), int(data["q"]), require_coprime=False),
            orbits=[PeriodicOrbit.from_dict(o) for o in data["orbits"]],
            curve_samples=[(float(t), float(e)) for t, e in data.get("curve_samples", [])],
            curve_cos=[float(c) for c in data.get("curve_cos", [])],
            curve_sin=[float(c) for c in data.get("curve_sin", [])],
            curve_residual=data.get("curve_residual"),
            instability_witness=data.get("instability_witness"),
            theory_violation=bool(data.get("theory_violation", False)),
            threshold_warning=bool(data.get("threshold_warning", False)),
            grid=tuple(data.get("grid", (0, 0))),
            e_range=tuple(data.get("e_range", (0.0, 0.0))),
        )


# ---------------------------------------------------------------------------
# thresholds and the fixed-point map


def existence_threshold(params: MapParams) -> float:
    """``alpha = 1 + (4/g)||f'|| + (2/g) sqrt(2 e_*)``; existence is guaranteed for p/q > alpha."""
    g = params.g
    return 1.0 + 4.0 / g * params.fdot_norm + 2.0 / g * math.sqrt(2.0 * params.e_star)


def below_threshold(key: OrbitKey, params: MapParams) -> bool:
    return key.ratio <= existence_threshold(params)


def energy_bracket(key: OrbitKey, params: MapParams) -> tuple[float, float]:
    """Energies that can carry a (p, q) orbit, padded.

    The a-priori time estimate ``|t_q - t - (2/g) q v| <= 4 q^2 ||f'||/g``
    confines the take-off speed of a fixed point to
    ``|v - g p/(2q)| <= 2 q ||f'||``.
    """
    g = params.g
    v_c = g * key.p / (2.0 * key.q)
    dv = 1.25 * 2.0 * key.q * params.fdot_norm + 0.05 * v_c
    v_lo = max(v_c - dv, 1e-3 * v_c)
    return 0.5 * v_lo**2, 0.5 * (v_c + dv) ** 2


def fixed_point_residual(ctx: GeneratingContext, key: OrbitKey, t, e, *, jacobian: bool = True, strict: bool = True):
    """``sigma^{-p} Phi^q (t, e) - (t, e)`` on arrays, plus the monodromy matrix."""
    times, energies, jac = iterate_arrays(ctx.params, t, e, key.q, jacobian=jacobian, strict=strict)
    res = np.stack([times[-1] - key.p - times[0], energies[-1] - energies[0]], axis=-1)
    return res, jac


def _solve_fixed_point(ctx, key, t, e, *, max_iter: int = 50, tol: float = FIXED_POINT_TOL):
    """Damped Newton on the fixed-point residual; minimum-norm steps when singular."""
    x = np.array([t, e], dtype=float)
    try:
        G, M = fixed_point_residual(ctx, key, x[0], x[1])
    except BounceLabError as exc:
        raise NoConvergence(f"seed {tuple(x)} outside the map domain: {exc}") from exc
    norm = float(np.linalg.norm(G))
    for _ in range(max_iter):
        if norm < POLISH_TOL:
            break
        step = np.linalg.lstsq(M - np.eye(2), -G, rcond=1e-14)[0]
        lam = 1.0
        accepted = False
        while lam > 1e-6:
            trial = x + lam * step
            try:
                G_t, M_t = fixed_point_residual(ctx, key, trial[0], trial[1])
            except BounceLabError:
                lam *= 0.5
                continue
            n_t = float(np.linalg.norm(G_t))
            if n_t < norm or n_t < POLISH_TOL:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        x, G, M, norm = trial, G_t, M_t, n_t
    if not norm < tol:
        raise NoConvergence(f"fixed-point residual stagnated at {norm:.3e}")
    cond = float(np.linalg.cond(M - np.eye(2)))
    return x, M, norm, cond


def _orbit_points(ctx, key, t, e):
    times, energies, _ = iterate_arrays(ctx.params, t, e, key.q, jacobian=False)
    return np.asarray(times[:-1], dtype=float), np.asarray(energies[:-1], dtype=float)


def _canonical(times: np.ndarray, energies: np.ndarray, p: int):
    """Rotate the cyclic orbit so the point with smallest t mod 1 comes first, shifted into [0, 1)."""
    q = len(times)
    frac = np.mod(times, 1.0)
    frac[frac > 1.0 - _CANON_TOL] -= 1.0
    k = int(np.argmin(frac))
    idx = np.arange(k, k + q)
    wrap = idx >= q
    t_rot = times[idx % q] + np.where(wrap, p, 0)
    e_rot = energies[idx % q]
    shift = math.floor(t_rot[0])
    return t_rot - shift, e_rot


def morse_index(cfg: ActionConfiguration, ctx: GeneratingContext, zero_tol: float = MORSE_ZERO_TOL) -> int:
    """Number of negative eigenvalues of the cyclic action Hessian."""
    H = action_hess(cfg, ctx)
    return int(np.sum(np.linalg.eigvalsh(H) < -zero_tol))


def build_orbit(
    ctx: GeneratingContext,
    key: OrbitKey,
    t: float,
    e: float,
    residual: float | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> PeriodicOrbit:
    """Assemble a :class:`PeriodicOrbit` from one fixed point."""
    times, energies = _orbit_points(ctx, key, t, e)
    times, energies = _canonical(times, energies, key.p)
    G, M = fixed_point_residual(ctx, key, times[0], energies[0])
    if residual is None:
        residual = float(np.linalg.norm(G))
    trace = float(np.trace(M))
    cfg = ActionConfiguration(tuple(times), key.p, key.q)
    a = cfg.closed()
    action = float(np.sum(gen_h(ctx, a[:-1], a[1:], check=False)))
    try:
        index = morse_index(cfg, ctx, tol.morse_zero)
    except InadmissibleSegment:
        index = -1
    return PeriodicOrbit(
        key=key,
        times=tuple(float(x) for x in times),
        energies=tuple(float(x) for x in energies),
        action=action,
        morse_index=index,
        monodromy_trace=trace,
        stability=classify_trace(trace, tol.parabolic),
        residue=(2.0 - trace) / 4.0,
        monodromy_det=float(np.linalg.det(M)),
        residual=float(residual),
        threshold_warning=below_threshold(key, ctx.params),
    )


def newton_orbit(
    key: OrbitKey,
    seed,
    ctx: GeneratingContext,
    *,
    max_iter: int = 50,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> PeriodicOrbit:
    """Periodic orbit through Newton iteration on ``sigma^{-p} Phi^q (x) - x`` from ``seed = (t, e)``.

    Raises :class:`SingularJacobian` (with the converged orbit attached) when
    the fixed point is not isolated.
    """
    x, M, norm, cond = _solve_fixed_point(ctx, key, seed[0], seed[1], max_iter=max_iter, tol=tol.fixed_point)
    orbit = build_orbit(ctx, key, x[0], x[1], norm, tol)
    if cond > tol.singular_cond:
        raise SingularJacobian(f"Newton matrix condition {cond:.3e} at {tuple(x)}", orbit=orbit, condition=cond)
    return orbit


def same_orbit(a: PeriodicOrbit, b: PeriodicOrbit, tol: float = DEDUP_TOL) -> bool:
    """Equivalence modulo sigma and cyclic relabelling."""
    if (a.key.p, a.key.q) != (b.key.p, b.key.q):
        return False
    t0, e0 = a.times[0] % 1.0, a.energies[0]
    for t, e in zip(b.times, b.energies):
        dt = abs((t - t0 + 0.5) % 1.0 - 0.5)
        if dt < tol and abs(e - e0) < tol:
            return True
    return False


def dedup_orbits(orbits: Sequence[PeriodicOrbit], tol: float = DEDUP_TOL) -> list[PeriodicOrbit]:
    out: list[PeriodicOrbit] = []
    for o in orbits:
        if not any(same_orbit(o, u, tol) for u in out):
            out.append(o)
    return sorted(out, key=lambda o: (o.times[0], o.energies[0]))


# ---------------------------------------------------------------------------
# variational search


def _minimize(x, p, q, ctx, *, gtol: float, max_iter: int = 200):
    """Newton-type descent on the action with |eigenvalue| regularisation."""
    def W(y):
        return float(np.sum(gen_h(ctx, *_seg(y, p), check=False)))

    cfg = ActionConfiguration.from_array(x, p, q)
    if not is_admissible(cfg, ctx):
        raise InadmissibleSegment("seed configuration is not admissible")
    w = W(x)
    for _ in range(max_iter):
        cfg = ActionConfiguration.from_array(x, p, q)
        g = action_grad(cfg, ctx)
        if np.max(np.abs(g)) < gtol:
            return x, g
        H = action_hess(cfg, ctx)
        lam, V = np.linalg.eigh(H)
        scale = max(float(np.max(np.abs(lam))), 1e-12)
        lam_reg = np.maximum(np.abs(lam), 1e-6 * scale)
        d = -V @ ((V.T @ g) / lam_reg)
        slope = float(g @ d)
        alpha = 1.0
        while alpha > 1e-10:
            y = x + alpha * d
            if np.all(admissible(ctx, *_seg(y, p))):
                wy = W(y)
                if wy <= w + 1e-4 * alpha * slope + 1e-15 * (1.0 + abs(w)):
                    break
            alpha *= 0.5
        else:
            raise NoConvergence("line search failed during action minimisation")
        x, w = y, wy
    cfg = ActionConfiguration.from_array(x, p, q)
    g = action_grad(cfg, ctx)
    if np.max(np.abs(g)) < gtol:
        return x, g
    raise NoConvergence(f"action gradient {np.max(np.abs(g)):.3e} after {max_iter} iterations")


def _seg(x, p):
    closed = np.append(x, x[0] + p)
    return closed[:-1], closed[1:]


def _orbit_from_configuration(ctx, key, x, tol: Tolerances = DEFAULT_TOLERANCES) -> PeriodicOrbit:
    """Turn a critical configuration into a polished map orbit."""
    cfg = ActionConfiguration.from_array(x, key.p, key.q)
    a, b = _seg(cfg.array, key.p)
    from .variational import segment_velocities

    u0, _ = segment_velocities(ctx, a, b)
    e0 = 0.5 * float(u0[0]) ** 2
    try:
        return newton_orbit(key, (float(x[0]), e0), ctx, tol=tol)
    except SingularJacobian as exc:
        return exc.orbit


def minimize_action(
    key: OrbitKey,
    ctx: GeneratingContext,
    seed_config,
    *,
    gtol: float = 1e-10,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> PeriodicOrbit:
    """Local minimum of the periodic action starting from ``seed_config`` (q times)."""
    x = np.asarray(getattr(seed_config, "times", seed_config), dtype=float)
    if x.size != key.q:
        raise ValueError(f"seed needs {key.q} times")
    for _ in range(4):
        x, _ = _minimize(x, key.p, key.q, ctx, gtol=gtol)
        H = action_hess(ActionConfiguration.from_array(x, key.p, key.q), ctx)
        lam, V = np.linalg.eigh(H)
        if lam[0] >= -tol.morse_zero:
            break
        # stopped on a saddle: leave along the descending direction
        x = x + 1e-3 * V[:, 0]
    else:
        raise NoConvergence("action minimisation kept returning to saddles")
    return _orbit_from_configuration(ctx, key, x, tol)


def configuration_translates(orbit: PeriodicOrbit) -> list[tuple[float, np.ndarray]]:
    """Relabelled translates of an orbit's configuration with mean shift in (0, 1].

    Relabelling the start index by ``k`` and adding an integer ``m`` gives
    the configuration ``(t_{i+k} + m)``; returns ``(mean_shift, times)`` pairs
    sorted by shift.
    """
    x = np.asarray(orbit.times)
    p, q = orbit.key.p, orbit.key.q
    ext = np.concatenate([x, x + p])
    out = []
    for k in range(q):
        y = ext[k : k + q]
        d = float(np.mean(y - x))
        m = math.ceil(-d)
        if d + m < 1e-9:
            m += 1
        out.append((d + m, y + m))
    return sorted(out, key=lambda s: s[0])


def _string_path(x_a, x_b, n):
    s = np.linspace(0.0, 1.0, n)[:, None]
    return (1.0 - s) * x_a + s * x_b


def _reparametrize(path: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] == 0.0:
        return path
    target = np.linspace(0.0, arc[-1], len(path))
    return np.column_stack([np.interp(target, arc, path[:, j]) for j in range(path.shape[1])])


def _saddle_newton(x, key, ctx, *, gtol: float, max_iter: int = 30):
    """Newton on grad W = 0; returns the configuration or None if it fails."""
    for _ in range(max_iter):
        cfg = ActionConfiguration.from_array(x, key.p, key.q)
        if not is_admissible(cfg, ctx):
            return None
        g = action_grad(cfg, ctx)
        if np.max(np.abs(g)) < gtol:
            return x
        H = action_hess(cfg, ctx)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return None
        if np.max(np.abs(step)) > 0.25:
            return None
        x = x + step
    cfg = ActionConfiguration.from_array(x, key.p, key.q)
    if is_admissible(cfg, ctx) and np.max(np.abs(action_grad(cfg, ctx))) < gtol:
        return x
    return None


def minimax_orbit(
    key: OrbitKey,
    ctx: GeneratingContext,
    min1: PeriodicOrbit,
    min2: PeriodicOrbit,
    *,
    n_nodes: int = STRING_NODES,
    gtol: float = 1e-10,
    max_iter: int = 5000,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> PeriodicOrbit:
    """Mountain-pass orbit between two minima by a climbing string.

    ``min2`` is used through the translate of its configuration whose mean
    lies closest above that of ``min1`` (for ``min2 == min1`` this is the
    neighbouring copy in the Birkhoff order).
    """
    x_a = np.asarray(min1.times)
    candidates = configuration_translates(min2)
    if not candidates:
        raise PathCollapse("no translate of the second minimum above the first")
    x_b = min(candidates, key=lambda c: c[0])[1]
    p, q = key.p, key.q

    def W(y):
        return float(np.sum(gen_h(ctx, *_seg(y, p), check=False)))

    w_a, w_b = W(x_a), W(x_b)
    path = _string_path(x_a, x_b, n_nodes)
    H0 = action_hess(ActionConfiguration.from_array(x_a, p, q), ctx)
    L = max(float(np.max(np.abs(np.linalg.eigvalsh(H0)))), 1e-12)
    eta = 0.5 / L
    level = max(w_a, w_b)
    scale = 1e-12 * (1.0 + abs(level))
    found = None
    for it in range(max_iter):
        vals = np.array([W(y) for y in path])
        i_max = int(np.argmax(vals))
        if i_max in (0, n_nodes - 1) or vals[i_max] - level <= scale:
            raise PathCollapse("string maximum sits at an endpoint; the action landscape is flat")
        grads = np.array(
            [action_grad(ActionConfiguration.from_array(y, p, q), ctx) for y in path[1:-1]]
        )
        tangents = path[2:] - path[:-2]
        tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
        along = np.sum(grads * tangents, axis=1, keepdims=True)
        force = -grads + along * tangents
        climb = i_max - 1
        force[climb] = -grads[climb] + 2.0 * along[climb] * tangents[climb]
        g_climb = float(np.max(np.abs(grads[climb])))
        if g_climb < 1e-4 or it % 100 == 99:
            found = _saddle_newton(path[i_max].copy(), key, ctx, gtol=gtol)
            if found is not None:
                cfg = ActionConfiguration.from_array(found, p, q)
                if morse_index(cfg, ctx, tol.morse_zero) >= 1 and W(found) > level + scale:
                    break
                found = None
        path[1:-1] += eta * force
        left = _reparametrize(path[: i_max + 1])
        right = _reparametrize(path[i_max:])
        path = np.vstack([left, right[1:]])
    if found is None:
        raise NoConvergence("string method did not reach the saddle")
    orbit = _orbit_from_configuration(ctx, key, found, tol)
    if not orbit.action > level:
        raise PathCollapse("saddle action does not exceed the minima")
    return orbit


# ---------------------------------------------------------------------------
# enumeration


def _trig_fit(t: np.ndarray, e: np.ndarray, n_harm: int):
    cols = [np.ones_like(t)]
    for k in range(1, n_harm + 1):
        cols += [np.cos(2 * np.pi * k * t), np.sin(2 * np.pi * k * t)]
    A = np.column_stack(cols)
    coef = np.linalg.lstsq(A, e, rcond=None)[0]
    cos = [coef[0]] + list(coef[1::2])
    sin = list(coef[2::2])
    return np.array(cos), np.array(sin)


def _trig_eval(cos: np.ndarray, sin: np.ndarray, t):
    t = np.asarray(t, dtype=float)
    out = np.full_like(t, cos[0] if len(cos) else 0.0)
    for k in range(1, len(cos)):
        out = out + cos[k] * np.cos(2 * np.pi * k * t)
    for k in range(1, len(sin) + 1):
        out = out + sin[k - 1] * np.sin(2 * np.pi * k * t)
    return out


def _circular_max_gap(t: np.ndarray) -> float:
    s = np.sort(np.mod(t, 1.0))
    if s.size == 0:
        return 1.0
    gaps = np.diff(np.concatenate([s, [s[0] + 1.0]]))
    return float(gaps.max())


def candidate_cells(G: np.ndarray) -> np.ndarray:
    """Indices ``(i, j)`` of grid cells where both residual components can vanish.

    ``G`` has shape ``(n_t, n_e, 2)`` and wraps periodically in the first axis.
    """
    c00 = G[:, :-1]
    c10 = np.roll(G, -1, axis=0)[:, :-1]
    c01 = G[:, 1:]
    c11 = np.roll(G, -1, axis=0)[:, 1:]
    stack = np.stack([c00, c10, c01, c11], axis=0)
    lo = np.nanmin(stack, axis=0)
    hi = np.nanmax(stack, axis=0)
    hit = np.all((lo <= 0.0) & (hi >= 0.0), axis=-1)
    return np.argwhere(hit)


def sweep_enumerate(
    key: OrbitKey,
    ctx: GeneratingContext,
    grid: tuple[int, int] = (128, 64),
    e_range: tuple[float, float] | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> DegeneracyReport:
    """Locate every (p, q) fixed point on a grid and classify the set as finite or a curve."""
    n_t, n_e = grid
    e_lo, e_hi = energy_bracket(key, ctx.params) if e_range is None else e_range
    tt = np.arange(n_t) / n_t
    ee = np.linspace(e_lo, e_hi, n_e)
    T, E = np.meshgrid(tt, ee, indexing="ij")
    G, _ = fixed_point_residual(ctx, key, T, E, jacobian=False, strict=False)
    cells = candidate_cells(G)
    if cells.size and (np.any(cells[:, 1] == 0) or np.any(cells[:, 1] == n_e - 2)):
        raise GridTooCoarse("fixed points detected in the boundary rows of the energy grid")
    dt, de = 1.0 / n_t, (e_hi - e_lo) / (n_e - 1)

    found: list[PeriodicOrbit] = []
    for i, j in cells:
        seed = ((i + 0.5) * dt, e_lo + (j + 0.5) * de)
        try:
            orbit = newton_orbit(key, seed, ctx, tol=tol)
        except SingularJacobian as exc:
            orbit = exc.orbit
        except NoConvergence:
            continue
        e0 = orbit.energies[0]
        if not (e_lo <= e0 <= e_hi):
            raise GridTooCoarse(f"Newton left the grid: e={e0!r} outside [{e_lo}, {e_hi}]")
        found.append(orbit)

    orbits = dedup_orbits(found, tol.dedup)
    points = np.array(
        [(t % 1.0, e) for o in orbits for t, e in zip(o.times, o.energies)], dtype=float
    ).reshape(-1, 2)
    report = DegeneracyReport(
        kind=ReportKind.FINITE,
        key=key,
        orbits=orbits,
        threshold_warning=below_threshold(key, ctx.params),
        grid=(n_t, n_e),
        e_range=(float(e_lo), float(e_hi)),
    )

    if len(points) >= N_CURVE and _circular_max_gap(points[:, 0]) < FILL_EPS:
        n_harm = int(min(12, (len(points) - 1) // 4))
        cos, sin = _trig_fit(points[:, 0], points[:, 1], n_harm)
        rng_t = (np.arange(CURVE_CHECKS) + 0.5) / CURVE_CHECKS + 0.5 / (CURVE_CHECKS * math.pi)
        e_fit = _trig_eval(cos, sin, rng_t)
        res, _ = fixed_point_residual(ctx, key, rng_t, e_fit, jacobian=False, strict=False)
        curve_res = float(np.nanmax(np.linalg.norm(res, axis=-1)))
        if np.isfinite(curve_res) and curve_res < tol.curve:
            order = np.argsort(points[:, 0])
            report.kind = ReportKind.DEGENERATE
            report.curve_samples = [(float(t), float(e)) for t, e in points[order]]
            report.curve_cos = [float(c) for c in cos]
            report.curve_sin = [float(c) for c in sin]
            report.curve_residual = curve_res
            stable = [o for o in orbits if o.stability == Stability.ELLIPTIC]
            report.instability_witness = (
                "all sampled orbits Parabolic" if not stable else f"{len(stable)} sampled orbits Elliptic"
            )
            report.theory_violation = bool(stable)
            return report

    if orbits:
        witness = [k for k, o in enumerate(orbits) if o.stability != Stability.ELLIPTIC]
        report.instability_witness = witness[0] if witness else None
        report.theory_violation = not witness
    return report


# ---------------------------------------------------------------------------
# stability


@dataclass
class StabilityProbe:
    stability: Stability
    trace: float
    multiplier: float | None
    expected_rate: float | None
    growth_rate: float | None
    max_deviation: float
    n_escaped: int
    periods_to_threshold: float | None
    n_probe: int
    radius: float
    horizon: int
    periods_run: int

    def to_dict(self) -> dict:
        return {
            "stability": self.stability.value,
            "trace": self.trace,
            "multiplier": self.multiplier,
            "expected_rate": self.expected_rate,
            "growth_rate": self.growth_rate,
            "max_deviation": self.max_deviation,
            "n_escaped": self.n_escaped,
            "periods_to_threshold": self.periods_to_threshold,
            "n_probe": self.n_probe,
            "radius": self.radius,
            "horizon": self.horizon,
            "periods_run": self.periods_run,
        }


def classify_stability(
    orbit: PeriodicOrbit,
    ctx: GeneratingContext,
    *,
    n_probe: int = 100,
    radius: float = 1e-6,
    horizon: int = 10_000,
    seed: int = 0,
    escape: float = 1e-2,
    cap: float = 1e-1,
    fit_window: tuple[float, float] = (3e-5, 3e-3),
    parabolic_tol: float = PARABOLIC_TOL,
) -> StabilityProbe:
    """Trace-based class plus a numerical Lyapunov probe.

    ``n_probe`` initial conditions at distance ``radius`` from the orbit
    point are iterated for up to ``horizon`` periods; a lane stops once it is
    ``cap`` away. The growth rate is the median slope of log-deviation per
    period inside ``fit_window``.
    """
    key = orbit.key
    trace = orbit.monodromy_trace
    stability = classify_trace(trace, parabolic_tol)
    multiplier = expected = None
    if abs(trace) > 2.0:
        multiplier = 0.5 * (abs(trace) + math.sqrt(trace * trace - 4.0))
        expected = math.log(multiplier)

    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, n_probe)
    x0 = np.array(orbit.point)
    t = x0[0] + radius * np.cos(theta)
    e = x0[1] + radius * np.sin(theta)
    alive = np.ones(n_probe, dtype=bool)
    logdev = np.full((horizon + 1, n_probe), np.nan)
    logdev[0] = math.log(radius)
    max_dev = np.full(n_probe, radius)
    first_escape = np.full(n_probe, np.nan)
    n_run = 0
    for n in range(1, horizon + 1):
        if not np.any(alive):
            break
        times, energies, _ = iterate_arrays(
            ctx.params, t[alive], e[alive], key.q, jacobian=False, strict=False
        )
        t_new = times[-1] - key.p
        e_new = energies[-1]
        t[alive] = t_new
        e[alive] = e_new
        dev = np.hypot(t - x0[0], e - x0[1])
        dev[~np.isfinite(dev)] = np.inf
        logdev[n, alive] = np.log(dev[alive])
        max_dev = np.where(alive, np.maximum(max_dev, dev), max_dev)
        newly = alive & (dev >= escape) & np.isnan(first_escape)
        first_escape[newly] = n
        alive &= dev < cap
        n_run = n

    rates = []
    lo, hi = math.log(fit_window[0]), math.log(fit_window[1])
    for k in range(n_probe):
        col = logdev[: n_run + 1, k]
        sel = np.flatnonzero(np.isfinite(col) & (col >= lo) & (col <= hi))
        if sel.size >= 3 and sel[-1] - sel[0] == sel.size - 1:
            rates.append(np.polyfit(sel, col[sel], 1)[0])
    growth = float(np.median(rates)) if rates else None
    escaped = np.isfinite(first_escape)
    return StabilityProbe(
        stability=stability,
        trace=float(trace),
        multiplier=multiplier,
        expected_rate=expected,
        growth_rate=growth,
        max_deviation=float(np.max(max_dev[np.isfinite(max_dev)])) if np.any(np.isfinite(max_dev)) else float("inf"),
        n_escaped=int(np.sum(escaped)),
        periods_to_threshold=float(np.median(first_escape[escaped])) if np.any(escaped) else None,
        n_probe=n_probe,
        radius=radius,
        horizon=horizon,
        periods_run=n_run,
    )


# ---------------------------------------------------------------------------
# Birkhoff ordering


@dataclass
class BirkhoffReport:
    increasing: bool
    cyclic_order: bool
    gap_estimate: bool
    min_gap: float
    gap_bound: float

    @property
    def passed(self) -> bool:
        return self.increasing and self.cyclic_order and self.gap_estimate


def birkhoff_validate(orbit: PeriodicOrbit) -> BirkhoffReport:
    """Check that impact times are ordered like a rigid rotation by p/q.

    The lifted points ``t_n + j`` are sorted into one sequence ``s``; the
    orbit is Birkhoff when each impact advances exactly ``p`` places in
    ``s`` and ``s`` gains 1 every ``q`` places. Also checks the gap estimate
    ``t_{n+1} - t_n > p/q - 1``.
    """
    p, q = orbit.key.p, orbit.key.q
    x = np.asarray(orbit.times, dtype=float)
    # two periods of the orbit, closed
    seq = np.concatenate([x, x + p, [x[0] + 2 * p]])
    gaps = np.diff(seq)
    increasing = bool(np.all(gaps > 0))
    span = range(-1, 2 * p + 2)
    lifted = np.sort(np.concatenate([x % 1.0 + j for j in span]))
    ok = True
    for n in range(2 * q):
        a, b = seq[n], seq[n + 1]
        ia = int(np.argmin(np.abs(lifted - a)))
        ib = int(np.argmin(np.abs(lifted - b)))
        if ib - ia != p:
            ok = False
            break
    if ok:
        ok = bool(np.allclose(lifted[q:] - lifted[:-q], 1.0, atol=1e-9))
    bound = p / q - 1.0
    return BirkhoffReport(
        increasing=increasing,
        cyclic_order=ok and increasing,
        gap_estimate=bool(np.all(gaps > bound)),
        min_gap=float(gaps.min()),
        gap_bound=bound,
    )


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class OrbitSearchResult:
    report: DegeneracyReport
    minimum: PeriodicOrbit | None = None
    minimax: PeriodicOrbit | None = None
    probes: list[StabilityProbe] = field(default_factory=list)
    methods_agree: bool | None = None
    notes: list[str] = field(default_factory=list)


def find_periodic_orbits(
    key: OrbitKey,
    ctx: GeneratingContext,
    *,
    grid: tuple[int, int] = (128, 64),
    probe: bool = True,
    n_probe: int = 100,
    horizon: int = 10_000,
    seed: int = 0,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> OrbitSearchResult:
    """Sweep, variational cross-check and stability probes for one key."""
    report = sweep_enumerate(key, ctx, grid, tol=tol)
    result = OrbitSearchResult(report=report)
    if report.threshold_warning:
        result.notes.append(
            f"p/q={key.ratio:.6g} <= alpha={existence_threshold(ctx.params):.6g}: existence not guaranteed"
        )
    if report.kind == ReportKind.FINITE and report.orbits:
        best = min(report.orbits, key=lambda o: o.action)
        try:
            result.minimum = minimize_action(key, ctx, best.times, tol=tol)
            result.minimax = minimax_orbit(key, ctx, result.minimum, result.minimum, tol=tol)
            found = (result.minimum, result.minimax)
            agree = all(any(same_orbit(o, r, 1e-6) for r in report.orbits) for o in found)
            result.methods_agree = agree
        except BounceLabError as exc:
            result.notes.append(f"variational search: {type(exc).__name__}: {exc}")
    elif report.kind == ReportKind.DEGENERATE:
        result.notes.append("degenerate family: minimax search skipped (no isolated minima)")
    if probe:
        for o in report.orbits if report.kind == ReportKind.FINITE else report.orbits[:1]:
            result.probes.append(
                classify_stability(
                    o, ctx, n_probe=n_probe, horizon=horizon, seed=seed, parabolic_tol=tol.parabolic
                )
            )
    return result


__all__ = [
    "BirkhoffReport",
    "DegeneracyReport",
    "OrbitKey",
    "OrbitSearchResult",
    "PeriodicOrbit",
    "ReportKind",
    "Stability",
    "StabilityProbe",
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "birkhoff_validate",
    "build_orbit",
    "classify_stability",
    "classify_trace",
    "configuration_translates",
    "dedup_orbits",
    "energy_bracket",
    "existence_threshold",
    "find_periodic_orbits",
    "fixed_point_residual",
    "minimax_orbit",
    "minimize_action",
    "morse_index",
    "newton_orbit",
    "same_orbit",
    "sweep_enumerate",
]
