from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from bouncelab.errors import DomainExit, GrazingImpact
from bouncelab.forcing import ForcingProfile
from bouncelab.impact_map import (
    EnergyState,
    MapParams,
    VelocityState,
    energy_grid,
    flight_time,
    injectivity_probe,
    iterate,
    iterate_arrays,
    jacobian_energy,
    next_impact_time,
    simulate_bouncing,
    step_energy,
    step_energy_arrays,
    step_velocity,
    time_equation_residual,
)


def test_params_defaults(small_params, flat_params):
    assert flat_params.v_star == 1.0
    assert flat_params.e_star == 0.5
    assert small_params.v_star == pytest.approx(4 * 2 * np.pi * 0.01 + 1.0)
    assert small_params.monotone_flight
    assert small_params.e_sharp(2) > small_params.e_star


def test_params_validation():
    with pytest.raises(ValueError):
        MapParams(ForcingProfile.zero(), g=0.0)
    with pytest.raises(ValueError):
        MapParams(ForcingProfile.single_cosine(0.1), v_star=0.1)


def test_flat_racket_is_exact(flat_params):
    s = VelocityState(0.0, 1.0)
    for n in range(1, 5):
        s = step_velocity(flat_params, s)
        assert s == VelocityState(2.0 * n, 1.0)
    t1, e1 = step_energy(flat_params, EnergyState(0.25, 2.0))
    assert t1 == pytest.approx(0.25 + 4.0)
    assert e1 == pytest.approx(2.0)


@pytest.mark.parametrize("amp", [0.01, 0.05, 0.3])
def test_next_impact_matches_physics_oracle(amp):
    params = MapParams(ForcingProfile((0.0, amp), (0.4 * amp,)))
    f, fd = oracles.trig([0.0, amp], [0.4 * amp])
    rng = np.random.default_rng(3)
    for t, v in zip(rng.uniform(0, 1, 12), rng.uniform(0.6, 4.0, 12)):
        t_ref, v_ref = oracles.next_impact(f, fd, 1.0, t, v)
        s = step_velocity(params, VelocityState(t, v))
        assert s.t == pytest.approx(t_ref, abs=1e-11)
        assert s.v == pytest.approx(v_ref, abs=1e-10)


def test_first_root_selected_for_oscillatory_racket():
    # ||f''|| >> g: the gap function may cross zero several times; take the first
    params = MapParams(ForcingProfile((0.0, 0.0, 0.0, 0.05)), g=1.0)
    assert not params.monotone_flight
    f, fd = oracles.trig([0.0, 0.0, 0.0, 0.05])
    for t, v in [(0.1, 0.9), (0.37, 1.4), (0.8, 2.2)]:
        t_ref, _ = oracles.next_impact(f, fd, 1.0, t, v)
        assert step_velocity(params, VelocityState(t, v)).t == pytest.approx(t_ref, abs=1e-11)


def test_time_equation_residual_small(small_params):
    rng = np.random.default_rng(0)
    t = rng.uniform(0, 1, 500)
    w = rng.uniform(0.5, 8.0, 500)
    T = flight_time(small_params, t, w)
    res = time_equation_residual(small_params, t, w, t + T)
    assert np.max(np.abs(res)) < 1e-12


def test_grazing_rule_and_error(small_params):
    s = VelocityState(0.3, 0.0)
    assert step_velocity(small_params, s) == s
    with pytest.raises(GrazingImpact):
        step_energy(small_params, EnergyState(0.3, 0.0))
    fdot = small_params.profile.eval(0.75, 1)
    with pytest.raises(GrazingImpact):
        next_impact_time(small_params, 0.75, fdot)


def test_periodic_in_time(small_params):
    a = step_energy(small_params, EnergyState(0.2, 1.3))
    b = step_energy(small_params, EnergyState(1.2, 1.3))
    assert b.t - a.t == pytest.approx(1.0, abs=1e-12)
    assert b.e == pytest.approx(a.e, abs=1e-12)


@pytest.mark.parametrize("amp", [0.01, 0.05])
def test_jacobian_matches_central_differences(amp):
    params = MapParams(ForcingProfile.single_cosine(amp))
    T, E = energy_grid(params, 8, 8)
    _, _, jac = step_energy_arrays(params, T, E, jacobian=True)
    h = 1e-6
    tp, ep = step_energy_arrays(params, T + h, E)
    tm, em = step_energy_arrays(params, T - h, E)
    he = h * np.maximum(1.0, E)
    tpe, epe = step_energy_arrays(params, T, E + he)
    tme, eme = step_energy_arrays(params, T, E - he)
    fd = np.empty_like(jac)
    fd[..., 0, 0] = (tp - tm) / (2 * h)
    fd[..., 1, 0] = (ep - em) / (2 * h)
    fd[..., 0, 1] = (tpe - tme) / (2 * he)
    fd[..., 1, 1] = (epe - eme) / (2 * he)
    np.testing.assert_allclose(jac, fd, rtol=1e-6, atol=1e-7)


def test_jacobian_area_preserving_and_twist(small_params):
    T, E = energy_grid(small_params, 60, 60)
    _, _, jac = step_energy_arrays(small_params, T, E, jacobian=True)
    assert np.max(np.abs(np.linalg.det(jac) - 1.0)) < 1e-10
    assert np.all(jac[..., 0, 1] > 0.0)
    single = jacobian_energy(small_params, EnergyState(0.1, 1.0))
    assert single.det == pytest.approx(1.0, abs=1e-12)


def test_iterate_agrees_with_single_steps(small_params):
    s0 = EnergyState(0.15, 2.0)
    states, jac = iterate(small_params, s0, 3)
    s = s0
    for ref in states[1:]:
        s = step_energy(small_params, s)
        assert s.t == pytest.approx(ref.t, abs=1e-13)
        assert s.e == pytest.approx(ref.e, abs=1e-13)
    assert np.linalg.det(jac) == pytest.approx(1.0, abs=1e-10)


def test_iterate_domain_exit(small_params):
    with pytest.raises(DomainExit):
        iterate_arrays(small_params, np.array([0.1, 0.2]), np.array([1.0, -1.0]), 2)
    times, energies, _ = iterate_arrays(
        small_params, np.array([0.1, 0.2]), np.array([1.0, -1.0]), 2, strict=False
    )
    assert np.all(np.isfinite(times[:, 0]))
    assert np.all(np.isnan(energies[1:, 1]))


def test_injectivity_probe_finds_no_folds(small_params):
    assert injectivity_probe(small_params, 40, 40) == 0


def test_simulate_flat_and_csv(flat_params, tmp_path):
    traj = simulate_bouncing(flat_params, VelocityState(0.0, 1.0), 4)
    np.testing.assert_array_equal(traj.t, [0, 2, 4, 6, 8])
    assert traj.all_falling
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["n", "t", "v", "e", "grazing_flag"]
    assert [r[1] for r in rows[1:]] == ["0", "2", "4", "6", "8"]
    traj.to_csv(path, form="energy")
    assert path.read_text().splitlines()[0] == "n,t,e"


def test_simulate_grazing_rows_flagged(small_params):
    traj = simulate_bouncing(small_params, VelocityState(0.4, 0.0), 3)
    assert traj.grazing.all()
    assert traj.first_grazing_step == 0
    np.testing.assert_array_equal(traj.t, 0.4)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.8, 30.0))
def test_energy_drift_bound_one_step(t, e):
    params = MapParams(ForcingProfile((0.0, 0.03), (0.01,)))
    t1, e1 = step_energy(params, EnergyState(t, e))
    assert abs(np.sqrt(2 * e1) - np.sqrt(2 * e)) <= 4 * params.fdot_norm + 1e-12
    assert t1 > t
