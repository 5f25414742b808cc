"""Numerical certificates for the twist of the iterated map and orbit estimates.

The derivative of the q-th impact time with respect to the initial energy
is written as

    dt_q/de = (2q / (g sqrt(2e))) (1 + f~_q(t, e)),

and the twist certificate checks ``|f~_q| < 1/2`` on a grid.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainExit
from .impact_map import EnergyState, MapParams, iterate_arrays
from .variational import GeneratingContext


class DerivativeMethod(str, enum.Enum):
    CHAIN_RULE = "ChainRule"
    RECURRENCE = "Recurrence"
    FINITE_DIFF = "FiniteDiff"


def _params(ctx) -> MapParams:
    return ctx.params if isinstance(ctx, GeneratingContext) else ctx


def _check_domain(e) -> None:
    if np.any(np.asarray(e) <= 0.0):
        raise DomainExit("energy must be positive")


def _dtq_chain(params, t, e, q):
    _, _, jac = iterate_arrays(params, t, e, q, jacobian=True)
    return jac[..., 0, 1]


def _dtq_recurrence(params, t, e, q):
    """Induction over the impacts in the inertial take-off velocity ``y``.

    With ``y_i = sqrt(2 e_i) + f'(t_i)`` one step reads
    ``t_{i+1} = t_i + (2/g)(y_i - f[t_i, t_{i+1}])`` and
    ``y_{i+1} = y_i - 2 f[t_i, t_{i+1}] + 2 f'(t_{i+1})``. Differentiating
    at fixed ``t_0`` carries ``tau_i = dt_i/dy`` and ``eta_i = dy_i/dy``.
    """
    f = params.profile
    g = params.g
    times, _, _ = iterate_arrays(params, t, e, q, jacobian=False)
    tau = np.zeros_like(times[0])
    eta = np.ones_like(times[0])
    for i in range(q):
        d0, d1 = f.divided_difference_partials(times[i], times[i + 1])
        tau_next = (tau * (1.0 - 2.0 / g * d0) + 2.0 / g * eta) / (1.0 + 2.0 / g * d1)
        eta = eta - 2.0 * (d0 * tau + d1 * tau_next) + 2.0 * f.eval(times[i + 1], 2) * tau_next
        tau = tau_next
    return tau / np.sqrt(2.0 * np.asarray(e, dtype=float))


def _dtq_finite_diff(params, t, e, q):
    e = np.asarray(e, dtype=float)
    h = 1e-6 * np.maximum(1.0, e)
    tp, _, _ = iterate_arrays(params, t, e + h, q, jacobian=False)
    tm, _, _ = iterate_arrays(params, t, e - h, q, jacobian=False)
    return (tp[-1] - tm[-1]) / (2.0 * h)


_METHODS = {
    DerivativeMethod.CHAIN_RULE: _dtq_chain,
    DerivativeMethod.RECURRENCE: _dtq_recurrence,
    DerivativeMethod.FINITE_DIFF: _dtq_finite_diff,
}


def dtq_de(ctx, t, e, q: int, method: DerivativeMethod | str = DerivativeMethod.CHAIN_RULE):
    """``dt_q/de`` at fixed initial time, by the requested method (arrays allowed)."""
    params = _params(ctx)
    method = DerivativeMethod(method)
    if q < 1:
        raise ValueError("q must be >= 1")
    t, e = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(e, dtype=float))
    _check_domain(e)
    out = _METHODS[method](params, t, e, q)
    return float(out) if np.ndim(out) == 0 else out


def f_tilde(ctx, t, e, q: int, method: DerivativeMethod | str = DerivativeMethod.CHAIN_RULE):
    """``f~_q = (g sqrt(2e) / (2q)) dt_q/de - 1``."""
    g = _params(ctx).g
    d = dtq_de(ctx, t, e, q, method)
    return g * np.sqrt(2.0 * np.asarray(e, dtype=float)) / (2.0 * q) * d - 1.0


@dataclass
class TwistReport:
    q: int
    grid: dict
    f_tilde_max: float
    bound_holds: bool
    e_q_threshold: float | None
    method_agreement: float
    level_energies: list[float] = field(default_factory=list)
    level_margins: list[float] = field(default_factory=list)
    margin_increasing: bool = True
    samples: list[tuple[float, float, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop("samples")
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TwistReport":
        fields = dict(data)
        fields.pop("samples", None)
        return cls(**fields)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def write_csv(self, path) -> None:
        """Grid values of ``f~_q`` as ``t,e,f_tilde`` rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "e", "f_tilde"])
            for row in self.samples:
                writer.writerow([format(float(x), ".17g") for x in row])


def twist_certificate(
    ctx,
    q: int,
    e_range: tuple[float, float],
    grid_n: int | tuple[int, int] = 32,
) -> TwistReport:
    """Evaluate ``f~_q`` on ``t in [0, 1)`` times log-spaced ``e`` and compare the three methods.

    ``e_q_threshold`` is the smallest sampled energy level from which every
    higher level satisfies the bound (``None`` if even the top level fails).
    """
    params = _params(ctx)
    n_t, n_e = (grid_n, grid_n) if isinstance(grid_n, int) else grid_n
    e_lo, e_hi = map(float, e_range)
    if not 0.0 < e_lo <= e_hi:
        raise ValueError(f"invalid energy range {e_range}")
    tt = np.arange(n_t) / n_t
    ee = np.geomspace(e_lo, e_hi, n_e) if e_hi > e_lo else np.array([e_lo])
    T, E = np.meshgrid(tt, ee, indexing="ij")

    values = {m: dtq_de(params, T, E, q, m) for m in DerivativeMethod}
    ref = values[DerivativeMethod.CHAIN_RULE]
    scale = np.maximum(np.abs(ref), np.finfo(float).tiny)
    agreement = 0.0
    methods = list(DerivativeMethod)
    for i, a in enumerate(methods):
        for b in methods[i + 1 :]:
            agreement = max(agreement, float(np.max(np.abs(values[a] - values[b]) / scale)))

    ft = params.g * np.sqrt(2.0 * E) / (2.0 * q) * ref - 1.0
    level_max = np.max(np.abs(ft), axis=0)
    good = level_max < 0.5
    threshold = None
    for j in range(len(ee) - 1, -1, -1):
        if not good[j]:
            break
        threshold = float(ee[j])
    margins = 0.5 - level_max
    samples = [(float(a), float(b), float(c)) for a, b, c in zip(T.ravel(), E.ravel(), ft.ravel())]
    return TwistReport(
        q=q,
        grid={"n_t": n_t, "n_e": n_e, "e_min": e_lo, "e_max": e_hi, "e_spacing": "log"},
        f_tilde_max=float(np.max(np.abs(ft))),
        bound_holds=bool(np.all(good)),
        e_q_threshold=threshold,
        method_agreement=agreement,
        level_energies=[float(x) for x in ee],
        level_margins=[float(x) for x in margins],
        margin_increasing=bool(np.all(np.diff(margins) >= -1e-12)),
        samples=samples,
    )


@dataclass
class AprioriReport:
    """Slack of the orbit estimates; a negative slack is a violation."""

    n_max: int
    velocity_slack: list[float]
    time_slack: list[float]
    step_slack: list[float]
    violations: int

    @property
    def holds(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return asdict(self)


#: rounding allowance for the estimates, relative to the quantities compared
APRIORI_RTOL = 1e-12


def apriori_bounds_check(ctx, s0: EnergyState, n_max: int) -> AprioriReport:
    """Check the drift estimates along the orbit of ``s0``.

    With ``v = sqrt(2 e)`` and ``F = ||f'||``:

    * ``|v_n - v_0| <= 4 n F``
    * ``|t_n - t_0 - (2/g) n v_0| <= 4 n^2 F / g``
    * ``t_n - t_{n-1} >= (2/g) y - (2/g)(4 n + 1) F`` with ``y = v_0 + f'(t_0)``.

    For the motionless racket the time estimate is attained exactly, so a
    rounding allowance of ``APRIORI_RTOL`` times the size of the terms is
    granted before counting a violation.
    """
    params = _params(ctx)
    g, F = params.g, params.fdot_norm
    times, energies, _ = iterate_arrays(params, s0.t, s0.e, n_max, jacobian=False)
    n = np.arange(n_max + 1, dtype=float)
    v = np.sqrt(2.0 * energies)
    v0 = v[0]
    y = v0 + params.profile.eval(s0.t, 1)

    vel = 4.0 * n * F - np.abs(v - v0)
    vel_tol = APRIORI_RTOL * (1.0 + v0 + np.abs(v))
    lin = times - times[0] - 2.0 / g * n * v0
    tim = 4.0 * n**2 * F / g - np.abs(lin)
    tim_tol = APRIORI_RTOL * (1.0 + np.abs(times) + np.abs(times[0]) + 2.0 / g * n * v0)
    gaps = np.diff(times)
    step = gaps - (2.0 / g * y - 2.0 / g * (4.0 * n[1:] + 1.0) * F)
    step_tol = APRIORI_RTOL * (1.0 + np.abs(times[1:]) + 2.0 / g * abs(y))

    violations = int(np.sum(vel < -vel_tol) + np.sum(tim < -tim_tol) + np.sum(step < -step_tol))
    return AprioriReport(
        n_max=n_max,
        velocity_slack=[float(x) for x in vel],
        time_slack=[float(x) for x in tim],
        step_slack=[float(x) for x in step],
        violations=violations,
    )


__all__ = [
    "APRIORI_RTOL",
    "AprioriReport",
    "DerivativeMethod",
    "TwistReport",
    "apriori_bounds_check",
    "dtq_de",
    "f_tilde",
    "twist_certificate",
]
