from __future__ import annotations

import math

import numpy as np
import pytest

from bouncelab.errors import GridTooCoarse, PathCollapse, SingularJacobian
from bouncelab.forcing import ForcingProfile
from bouncelab.impact_map import MapParams
from bouncelab.orbit_finder import (
    DegeneracyReport,
    OrbitKey,
    PeriodicOrbit,
    ReportKind,
    Stability,
    Tolerances,
    birkhoff_validate,
    classify_stability,
    classify_trace,
    configuration_translates,
    dedup_orbits,
    energy_bracket,
    existence_threshold,
    fixed_point_residual,
    minimax_orbit,
    minimize_action,
    newton_orbit,
    same_orbit,
    sweep_enumerate,
)
from bouncelab.variational import ActionConfiguration, GeneratingContext, action_grad, gen_h_second_partials

KEY = OrbitKey(2, 1)


@pytest.fixture(scope="module")
def small_report(small_ctx) -> DegeneracyReport:
    return sweep_enumerate(KEY, small_ctx)


def test_orbit_key_validation():
    with pytest.raises(ValueError):
        OrbitKey(2, 2)
    with pytest.raises(ValueError):
        OrbitKey(0, 1)
    assert OrbitKey(4, 2, require_coprime=False).ratio == 2.0
    assert KEY.resonant_energy(1.0) == 0.5


def test_classify_trace():
    assert classify_trace(0.3) == Stability.ELLIPTIC
    assert classify_trace(-2.5) == Stability.HYPERBOLIC
    assert classify_trace(2.0 + 1e-8) == Stability.PARABOLIC


def test_threshold_and_bracket(small_params, flat_params):
    assert existence_threshold(flat_params) == pytest.approx(3.0)
    expected = 1.0 + 4.0 * small_params.fdot_norm + 2.0 * math.sqrt(2.0 * small_params.e_star)
    assert existence_threshold(small_params) == pytest.approx(expected)
    lo, hi = energy_bracket(KEY, small_params)
    assert lo < 0.5 < hi


def test_flat_newton_is_singular(flat_ctx):
    with pytest.raises(SingularJacobian) as info:
        newton_orbit(KEY, (0.3, 0.47), flat_ctx)
    orbit = info.value.orbit
    assert orbit.energies[0] == pytest.approx(0.5, abs=1e-12)
    assert orbit.stability == Stability.PARABOLIC


def test_two_orbits_with_opposite_types(small_report):
    assert small_report.kind == ReportKind.FINITE
    assert len(small_report.orbits) == 2
    kinds = {o.stability for o in small_report.orbits}
    assert kinds == {Stability.ELLIPTIC, Stability.HYPERBOLIC}
    assert small_report.instability_witness is not None
    assert not small_report.theory_violation
    for o in small_report.orbits:
        assert 0.0 <= o.times[0] < 1.0
        assert o.residual < 1e-10
        assert o.monodromy_det == pytest.approx(1.0, abs=1e-10)


def test_residue_identity_for_single_bounce(small_ctx, small_report):
    # for q = 1 the action is W(t) = h(t, t + p) and 2 - trace = W''/h_12
    for o in small_report.orbits:
        t = o.times[0]
        h11, h12, h22 = gen_h_second_partials(small_ctx, t, t + KEY.p)
        hess = h11 + 2.0 * h12 + h22
        assert 2.0 - o.monodromy_trace == pytest.approx(hess / h12, rel=1e-8)


def test_newton_from_nearby_seed(small_ctx, small_report):
    hyp = next(o for o in small_report.orbits if o.stability == Stability.HYPERBOLIC)
    again = newton_orbit(KEY, (hyp.times[0] + 0.02, hyp.energies[0] - 0.01), small_ctx)
    assert same_orbit(again, hyp)


def test_minimum_and_minimax(small_ctx, small_report):
    seed = small_report.orbits[0].times
    low = minimize_action(KEY, small_ctx, [seed[0] + 0.1])
    assert low.morse_index == 0
    high = minimax_orbit(KEY, small_ctx, low, low)
    assert high.morse_index == 1
    assert high.action > low.action
    assert any(same_orbit(low, o) for o in small_report.orbits)
    assert any(same_orbit(high, o) for o in small_report.orbits)


def test_multi_bounce_key(small_ctx):
    key = OrbitKey(5, 2)
    report = sweep_enumerate(key, small_ctx)
    assert report.kind == ReportKind.FINITE and len(report.orbits) == 2
    for o in report.orbits:
        res, _ = fixed_point_residual(small_ctx, key, o.times[0], o.energies[0])
        assert np.linalg.norm(res) < 1e-10
        assert birkhoff_validate(o).passed
        assert np.all(np.diff(o.times) > key.ratio - 1.0)


def test_translates_and_dedup(small_report):
    o = small_report.orbits[0]
    shifts = configuration_translates(o)
    assert shifts[0][0] == pytest.approx(1.0)
    twin = PeriodicOrbit.from_dict({**o.to_dict(), "times": [o.times[0] + 3.0]})
    assert same_orbit(o, twin)
    assert len(dedup_orbits([o, twin, *small_report.orbits])) == 2


def test_round_trip(small_report):
    again = DegeneracyReport.from_dict(small_report.to_dict())
    assert again.to_dict() == small_report.to_dict()
    o = small_report.orbits[0]
    assert PeriodicOrbit.from_dict(o.to_dict()) == o


def test_degenerate_flat_family(flat_ctx):
    report = sweep_enumerate(KEY, flat_ctx, (64, 32))
    assert report.kind == ReportKind.DEGENERATE
    t = np.linspace(0.0, 1.0, 97)
    np.testing.assert_allclose(report.curve(t), 0.5, atol=1e-9)
    assert all(o.stability == Stability.PARABOLIC for o in report.orbits)
    assert report.threshold_warning


def test_grid_too_coarse_when_roots_on_boundary(flat_ctx):
    with pytest.raises(GridTooCoarse):
        sweep_enumerate(KEY, flat_ctx, (16, 8), e_range=(0.5, 0.6))


def test_flat_minimax_collapses(flat_ctx):
    low = minimize_action(KEY, flat_ctx, [0.2])
    with pytest.raises(PathCollapse):
        minimax_orbit(KEY, flat_ctx, low, low)


def test_tolerances_validated():
    with pytest.raises(ValueError):
        Tolerances(dedup=0.0)


def test_lyapunov_probe_on_hyperbolic_orbit(small_ctx, small_report):
    hyp = next(o for o in small_report.orbits if o.stability == Stability.HYPERBOLIC)
    probe = classify_stability(hyp, small_ctx, n_probe=20, horizon=500, seed=1)
    assert probe.n_escaped == 20
    assert probe.growth_rate == pytest.approx(probe.expected_rate, rel=0.1)


def test_lyapunov_probe_on_elliptic_orbit_stays_close(small_ctx, small_report):
    ell = next(o for o in small_report.orbits if o.stability == Stability.ELLIPTIC)
    probe = classify_stability(ell, small_ctx, n_probe=10, horizon=300, seed=1)
    assert probe.n_escaped == 0
    assert probe.max_deviation < 1e-4


def test_non_coprime_key_gap_estimate():
    ctx = GeneratingContext(MapParams(ForcingProfile.single_cosine(0.01)))
    key = OrbitKey(4, 2, require_coprime=False)
    report = sweep_enumerate(key, ctx)
    assert len(report.orbits) >= 1
    for o in report.orbits:
        assert birkhoff_validate(o).gap_estimate


def test_flat_minimizer_is_equispaced(flat_ctx):
    key = OrbitKey(4, 2, require_coprime=False)
    low = minimize_action(key, flat_ctx, [0.0, 1.7])
    assert np.diff(low.configuration().closed()) == pytest.approx([2.0, 2.0], abs=1e-8)
    assert low.action == pytest.approx(2.0 / 3.0, abs=1e-10)


def test_newton_seeds_give_two_classes(small_ctx):
    orbits = []
    for t in (0.0, 0.25, 0.5, 0.75):
        try:
            orbits.append(newton_orbit(KEY, (t, 0.5), small_ctx))
        except SingularJacobian as exc:  # pragma: no cover - not expected for isolated orbits
            orbits.append(exc.orbit)
    assert len(dedup_orbits(orbits)) == 2


def test_gradient_vanishes_at_isolated_times(small_ctx):
    t = (np.arange(2000) + 0.5) / 2000
    grad = np.array([action_grad(ActionConfiguration((x,), 2, 1), small_ctx)[0] for x in t])
    changes = np.count_nonzero(np.sign(grad) != np.sign(np.roll(grad, -1)))
    assert changes == 2


def test_birkhoff_rejects_permuted_times(small_ctx):
    report = sweep_enumerate(OrbitKey(7, 3), small_ctx)
    good = report.orbits[0]
    assert birkhoff_validate(good).passed
    data = good.to_dict()
    data["times"] = [good.times[0], good.times[2], good.times[1]]
    assert not birkhoff_validate(PeriodicOrbit.from_dict(data)).passed


def test_flat_family_probe_records_shear(flat_ctx):
    orbit = sweep_enumerate(KEY, flat_ctx, (32, 16)).orbits[0]
    probe = classify_stability(orbit, flat_ctx, n_probe=10, horizon=200, seed=3)
    assert probe.stability == Stability.PARABOLIC
    assert probe.expected_rate is None
    # the energy offset shears the phase linearly: deviation grows but stays modest
    assert 1e-6 < probe.max_deviation < 1e-2
