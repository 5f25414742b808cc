"""Racket motion as a finite trigonometric series.

The racket height is

    f(t) = a_0 + sum_{k=1..K} a_k cos(2 pi k t) + b_k sin(2 pi k t),

which is 1-periodic and real analytic, with exact derivatives of every order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize_scalar

#: gap below which the divided difference switches to quadrature
DD_SWITCH = 1e-5

_GL_X, _GL_W = leggauss(8)
_GL_NODES = 0.5 * (_GL_X + 1.0)
_GL_WEIGHTS = 0.5 * _GL_W

_SUP_SAMPLES = 10_001


@dataclass(frozen=True)
class ForcingProfile:
    """Immutable trigonometric racket profile.

    ``cosine_coeffs`` holds ``[a_0, a_1, ..., a_K]`` and ``sine_coeffs`` holds
    ``[b_1, ..., b_K]``; the shorter list is padded with zeros.
    """

    cosine_coeffs: tuple[float, ...] = (0.0,)
    sine_coeffs: tuple[float, ...] = ()
    _a: np.ndarray = field(init=False, repr=False, compare=False)
    _b: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        cos = tuple(float(c) for c in self.cosine_coeffs) or (0.0,)
        sin = tuple(float(c) for c in self.sine_coeffs)
        degree = max(len(cos) - 1, len(sin))
        a = np.zeros(degree + 1)
        a[: len(cos)] = cos
        b = np.zeros(degree + 1)
        b[1 : len(sin) + 1] = sin
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "cosine_coeffs", cos)
        object.__setattr__(self, "sine_coeffs", sin)
        object.__setattr__(self, "_a", a)
        object.__setattr__(self, "_b", b)

    @classmethod
    def zero(cls) -> "ForcingProfile":
        return cls((0.0,), ())

    @classmethod
    def single_cosine(cls, amplitude: float, k: int = 1) -> "ForcingProfile":
        """``f(t) = amplitude * cos(2 pi k t)``."""
        cos = [0.0] * (k + 1)
        cos[k] = amplitude
        return cls(tuple(cos), ())

    @classmethod
    def from_lists(cls, cos: Sequence[float], sin: Sequence[float] = ()) -> "ForcingProfile":
        return cls(tuple(cos), tuple(sin))

    @property
    def degree(self) -> int:
        return len(self._a) - 1

    @property
    def is_constant(self) -> bool:
        return not (np.any(self._a[1:]) or np.any(self._b[1:]))

    def __call__(self, t, order: int = 0):
        return self.eval(t, order)

    def eval(self, t, order: int = 0, *, constant: bool = True):
        """Value of the ``order``-th derivative at ``t`` (scalar or array).

        With ``constant=False`` the mean ``a_0`` is dropped; differences of
        ``f`` use this to avoid carrying a large offset.
        """
        if order not in (0, 1, 2, 3):
            raise ValueError(f"order must be 0..3, got {order}")
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if order == 0 and constant:
            out = out + self._a[0]
        for k in range(1, self.degree + 1):
            ak, bk = self._a[k], self._b[k]
            if ak == 0.0 and bk == 0.0:
                continue
            w = 2.0 * np.pi * k
            c = np.cos(w * t)
            s = np.sin(w * t)
            # derivative of order m rotates (cos, sin) by m quarter turns
            if order == 0:
                out = out + ak * c + bk * s
            elif order == 1:
                out = out + w * (-ak * s + bk * c)
            elif order == 2:
                out = out - w**2 * (ak * c + bk * s)
            else:
                out = out + w**3 * (ak * s - bk * c)
        return out if out.ndim else float(out)

    def coefficient_bound(self, order: int) -> float:
        """Upper bound ``sum (2 pi k)^order (|a_k| + |b_k|)`` on the sup-norm."""
        k = np.arange(self.degree + 1)
        bound = np.sum((2 * np.pi * k[1:]) ** order * (np.abs(self._a[1:]) + np.abs(self._b[1:])))
        if order == 0:
            bound += abs(self._a[0])
        return float(bound)

    @cached_property
    def _sup_norms(self) -> tuple[float, float, float]:
        grid = np.linspace(0.0, 1.0, _SUP_SAMPLES)
        norms = []
        for order in (0, 1, 2):
            vals = np.abs(self.eval(grid, order))
            i = int(np.argmax(vals))
            best = float(vals[i])
            if best > 0.0:
                h = grid[1] - grid[0]
                bracket = (grid[i] - h, grid[i], grid[i] + h)
                try:
                    res = minimize_scalar(
                        lambda x: -abs(self.eval(x, order)),
                        bracket=bracket,
                        method="golden",
                        options={"xtol": 1e-12},
                    )
                    best = max(best, float(-res.fun))
                except ValueError:
                    # flat top: the sampled value is already the maximum
                    pass
            norms.append(min(best, self.coefficient_bound(order)))
        return tuple(norms)

    def sup_norm(self, order: int = 1) -> float:
        """``max_{t in [0,1]} |f^{(order)}(t)|``."""
        if order not in (0, 1, 2):
            raise ValueError(f"order must be in {0, 1, 2}, got {order}")
        return self._sup_norms[order]

    def oscillation_bound(self) -> float:
        """Bound on ``|f(s) - f(t)|`` over all s, t (twice the sup of f - a_0)."""
        return 2.0 * self.coefficient_bound(0) - 2.0 * abs(self._a[0])

    def divided_difference(self, t0, t1):
        """``f[t0, t1] = (f(t1) - f(t0)) / (t1 - t0)``, equal to f'(t0) at t0 == t1.

        Small gaps use Gauss-Legendre quadrature of f' along the segment.
        """
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        t0, t1 = np.broadcast_arrays(t0, t1)
        h = t1 - t0
        small = np.abs(h) < DD_SWITCH
        safe_h = np.where(small, 1.0, h)
        direct = (self.eval(t1, constant=False) - self.eval(t0, constant=False)) / safe_h
        out = np.where(small, 0.0, direct)
        if np.any(small):
            nodes = t0[small][:, None] + _GL_NODES * h[small][:, None]
            out = np.array(out, copy=True)
            out[small] = np.sum(_GL_WEIGHTS * self.eval(nodes, 1), axis=-1)
        return out if out.ndim else float(out)

    def divided_difference_partials(self, t0, t1):
        """Partial derivatives ``(d/dt0, d/dt1)`` of ``f[t0, t1]``.

        For a gap h = t1 - t0 these are ``(f[t0,t1] - f'(t0))/h`` and
        ``(f'(t1) - f[t0,t1])/h``; small gaps integrate f'' with the weights
        ``1 - s`` and ``s`` instead.
        """
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        t0, t1 = np.broadcast_arrays(t0, t1)
        h = t1 - t0
        small = np.abs(h) < DD_SWITCH
        safe_h = np.where(small, 1.0, h)
        dd = self.divided_difference(t0, t1)
        d0 = np.where(small, 0.0, (dd - self.eval(t0, 1)) / safe_h)
        d1 = np.where(small, 0.0, (self.eval(t1, 1) - dd) / safe_h)
        if np.any(small):
            nodes = t0[small][:, None] + _GL_NODES * h[small][:, None]
            f2 = self.eval(nodes, 2)
            d0 = np.array(d0, copy=True)
            d1 = np.array(d1, copy=True)
            d0[small] = np.sum(_GL_WEIGHTS * (1.0 - _GL_NODES) * f2, axis=-1)
            d1[small] = np.sum(_GL_WEIGHTS * _GL_NODES * f2, axis=-1)
        if d0.ndim == 0:
            return float(d0), float(d1)
        return d0, d1

    def fourier_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded coefficient arrays ``(a, b)`` indexed by harmonic k = 0..K."""
        return self._a.copy(), self._b.copy()

    def to_dict(self) -> dict:
        return {"cos": list(self.cosine_coeffs), "sin": list(self.sine_coeffs)}

    @classmethod
    def from_dict(cls, data: dict) -> "ForcingProfile":
        return cls(tuple(data.get("cos", (0.0,))), tuple(data.get("sin", ())))

