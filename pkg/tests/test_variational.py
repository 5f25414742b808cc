from __future__ import annotations

import numpy as np
import pytest
import sympy as sp

from bouncelab.errors import InadmissibleSegment
from bouncelab.forcing import ForcingProfile
from bouncelab.impact_map import MapParams, energy_grid, iterate_arrays
from bouncelab.variational import (
    ActionConfiguration,
    GeneratingContext,
    action_grad,
    action_hess,
    action_W,
    admissible,
    energies_from_times,
    gen_h,
    gen_h_consistency,
    gen_h_partials,
    gen_h_second_partials,
    q_step_generation_residuals,
    segment_velocities,
)

A1, B2, G = 0.03, 0.012, 1.0
CTX = GeneratingContext(MapParams(ForcingProfile((0.0, A1), (0.0, B2)), g=G))


def _symbolic_h():
    t, t0, t1 = sp.symbols("t t0 t1", real=True)
    f = A1 * sp.cos(2 * sp.pi * t) + B2 * sp.sin(4 * sp.pi * t)
    fdot = sp.diff(f, t)
    prim = sp.integrate(sp.Rational(1, 2) * fdot**2 - G * f, t)
    T = t1 - t0
    s = (f.subs(t, t1) - f.subs(t, t0)) / T
    action = s**2 * T / 2 - G * s * T**2 / 2 - G**2 * T**3 / 24 - G * f.subs(t, t0) * T
    h = -action + prim.subs(t, t1) - prim.subs(t, t0)
    return t0, t1, h


@pytest.fixture(scope="module")
def symbolic():
    t0, t1, h = _symbolic_h()
    fns = {
        "h": sp.lambdify((t0, t1), h),
        "h1": sp.lambdify((t0, t1), sp.diff(h, t0)),
        "h2": sp.lambdify((t0, t1), sp.diff(h, t1)),
        "h11": sp.lambdify((t0, t1), sp.diff(h, t0, 2)),
        "h12": sp.lambdify((t0, t1), sp.diff(h, t0, t1)),
        "h22": sp.lambdify((t0, t1), sp.diff(h, t1, 2)),
    }
    return fns


PAIRS = [(0.1, 2.3), (0.7, 3.1), (0.35, 4.05), (0.9, 2.95)]


def test_h_matches_symbolic_up_to_constant(symbolic):
    vals = np.array([gen_h(CTX, a, b, check=False) - symbolic["h"](a, b) for a, b in PAIRS])
    np.testing.assert_allclose(vals - vals[0], 0.0, atol=1e-12)


def test_partials_match_symbolic(symbolic):
    for a, b in PAIRS:
        h1, h2 = gen_h_partials(CTX, a, b)
        h11, h12, h22 = gen_h_second_partials(CTX, a, b)
        assert h1 == pytest.approx(symbolic["h1"](a, b), abs=1e-12)
        assert h2 == pytest.approx(symbolic["h2"](a, b), abs=1e-12)
        assert h11 == pytest.approx(symbolic["h11"](a, b), abs=1e-10)
        assert h12 == pytest.approx(symbolic["h12"](a, b), abs=1e-10)
        assert h22 == pytest.approx(symbolic["h22"](a, b), abs=1e-10)


def test_flat_generating_function(flat_ctx):
    assert gen_h(flat_ctx, 0.0, 2.0) == pytest.approx(1.0 / 3.0)
    h1, h2 = gen_h_partials(flat_ctx, 0.0, 2.0)
    assert (h1, h2) == (pytest.approx(-0.5), pytest.approx(0.5))


def test_generates_the_map(small_ctx, small_params):
    T, E = energy_grid(small_params, 30, 30)
    r1, r2 = gen_h_consistency(small_ctx, T, E)
    assert r1.max() < 1e-10 and r2.max() < 1e-10


def test_twist_sign_of_mixed_partial(small_ctx, small_params):
    T, E = energy_grid(small_params, 20, 20)
    times, _, _ = iterate_arrays(small_params, T, E, 1, jacobian=False)
    _, h12, _ = gen_h_second_partials(small_ctx, times[0], times[1])
    assert np.all(h12 < 0.0)


def test_periodicity_of_h(small_ctx):
    assert gen_h(small_ctx, 1.1, 3.4) == pytest.approx(gen_h(small_ctx, 0.1, 2.4), abs=1e-13)


def test_admissibility(small_ctx):
    assert admissible(small_ctx, 0.0, 2.0)
    assert not admissible(small_ctx, 0.0, -1.0)
    assert not admissible(small_ctx, 0.0, 0.05)
    with pytest.raises(InadmissibleSegment):
        gen_h(small_ctx, 0.0, 0.05)
    u0, u1 = segment_velocities(small_ctx, 0.0, 2.0)
    assert u0 > 0 and u1 > 0


def test_action_derivatives_match_finite_differences(small_ctx):
    cfg = ActionConfiguration((0.2, 2.7, 4.6), 7, 3)
    x = cfg.array
    grad = action_grad(cfg, small_ctx)
    hess = action_hess(cfg, small_ctx)
    h = 1e-6
    for i in range(3):
        d = np.zeros(3)
        d[i] = h
        wp = action_W(ActionConfiguration.from_array(x + d, 7, 3), small_ctx)
        wm = action_W(ActionConfiguration.from_array(x - d, 7, 3), small_ctx)
        assert grad[i] == pytest.approx((wp - wm) / (2 * h), abs=1e-7)
        gp = action_grad(ActionConfiguration.from_array(x + d, 7, 3), small_ctx)
        gm = action_grad(ActionConfiguration.from_array(x - d, 7, 3), small_ctx)
        np.testing.assert_allclose(hess[:, i], (gp - gm) / (2 * h), atol=1e-6)


def test_action_shift_invariance(small_ctx):
    cfg = ActionConfiguration((0.2, 2.7), 5, 2)
    assert action_W(cfg.shifted(1.0), small_ctx) == pytest.approx(action_W(cfg, small_ctx), abs=1e-12)


def test_energies_from_times_on_flat_orbit(flat_ctx):
    cfg = ActionConfiguration((0.3, 2.3), 4, 2)
    np.testing.assert_allclose(energies_from_times(cfg, flat_ctx), 0.5, atol=1e-14)


def test_configuration_validation():
    with pytest.raises(ValueError):
        ActionConfiguration((0.1,), 2, 2)
    with pytest.raises(ValueError):
        ActionConfiguration((0.1, 0.2), 0, 2)
    assert ActionConfiguration((0.1, 2.1), 4, 2).q == 2


@pytest.mark.parametrize("q", [1, 2, 3])
def test_q_step_action_generates_iterate(small_ctx, q):
    for t0, e0 in [(0.0, 2.0), (0.43, 5.0)]:
        r_start, r_end = q_step_generation_residuals(small_ctx, t0, e0, q)
        assert r_start < 1e-7 and r_end < 1e-7


def test_flat_two_bounce_action_convexity(flat_ctx):
    equal = action_W(ActionConfiguration((0.0, 2.0), 4, 2), flat_ctx)
    assert equal == pytest.approx(2.0 / 3.0)
    for gap in (1.5, 1.9, 2.3):
        assert action_W(ActionConfiguration((0.0, gap), 4, 2), flat_ctx) > equal


def test_flat_consistency_example(flat_ctx):
    r1, r2 = gen_h_consistency(flat_ctx, 0.0, 0.5)
    assert r1 < 1e-15 and r2 < 1e-15
