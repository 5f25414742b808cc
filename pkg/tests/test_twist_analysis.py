from __future__ import annotations

import json

import numpy as np
import pytest

import oracles
from bouncelab.errors import DomainExit
from bouncelab.forcing import ForcingProfile
from bouncelab.impact_map import EnergyState, MapParams
from bouncelab.twist_analysis import (
    DerivativeMethod,
    TwistReport,
    apriori_bounds_check,
    dtq_de,
    f_tilde,
    twist_certificate,
)


@pytest.mark.parametrize("method", list(DerivativeMethod))
def test_flat_derivative_is_exact(flat_params, method):
    assert dtq_de(flat_params, 0.0, 0.5, 2, method) == pytest.approx(4.0, rel=1e-9)
    assert abs(f_tilde(flat_params, 0.3, 7.0, 3, method)) < 1e-8


def test_single_step_against_physics_oracle(small_params):
    f, fd = oracles.trig([0.0, 0.01])
    e, h = 2.0, 1e-5
    t_plus, _ = oracles.next_impact(f, fd, 1.0, 0.0, np.sqrt(2 * (e + h)))
    t_minus, _ = oracles.next_impact(f, fd, 1.0, 0.0, np.sqrt(2 * (e - h)))
    reference = (t_plus - t_minus) / (2 * h)
    for method in DerivativeMethod:
        assert dtq_de(small_params, 0.0, e, 1, method) == pytest.approx(reference, rel=1e-7)


def test_three_bounce_against_physics_oracle(small_params):
    f, fd = oracles.trig([0.0, 0.01])
    e, h = 5.0, 1e-5
    tp, _ = oracles.orbit(f, fd, 1.0, 0.2, np.sqrt(2 * (e + h)), 3)
    tm, _ = oracles.orbit(f, fd, 1.0, 0.2, np.sqrt(2 * (e - h)), 3)
    reference = (tp[-1] - tm[-1]) / (2 * h)
    assert dtq_de(small_params, 0.2, e, 3, DerivativeMethod.RECURRENCE) == pytest.approx(reference, rel=1e-7)


def test_methods_agree_on_grid(small_params):
    t, e = np.meshgrid(np.arange(20) / 20, np.linspace(1.0, 20.0, 20), indexing="ij")
    vals = [dtq_de(small_params, t, e, 3, m) for m in DerivativeMethod]
    for v in vals[1:]:
        np.testing.assert_allclose(v, vals[0], rtol=1e-5)


def test_domain_error(small_params):
    with pytest.raises(DomainExit):
        dtq_de(small_params, 0.0, -1.0, 1)


def test_certificate_flat(flat_params):
    report = twist_certificate(flat_params, 2, (0.5, 10.0), 8)
    assert report.f_tilde_max < 1e-10
    assert report.bound_holds
    assert report.e_q_threshold == 0.5


def test_certificate_small_forcing_single_bounce(small_params):
    report = twist_certificate(small_params, 1, (5.0, 50.0), 16)
    assert report.bound_holds
    assert report.method_agreement < 1e-5
    assert len(report.level_margins) == 16


def test_certificate_large_forcing_reports_failure():
    params = MapParams(ForcingProfile.single_cosine(0.5))
    report = twist_certificate(params, 3, (0.5, 5.0), 8)
    assert not report.bound_holds
    assert report.e_q_threshold is None


def test_report_serialisation(small_params, tmp_path):
    report = twist_certificate(small_params, 1, (5.0, 10.0), 4)
    path = tmp_path / "twist.json"
    report.to_json(path)
    again = TwistReport.from_dict(json.loads(path.read_text()))
    assert again.to_dict() == report.to_dict()
    report.write_csv(tmp_path / "twist.csv")
    lines = (tmp_path / "twist.csv").read_text().splitlines()
    assert lines[0] == "t,e,f_tilde" and len(lines) == 17


def test_apriori_flat_equality(flat_params):
    report = apriori_bounds_check(flat_params, EnergyState(0.0, 0.5), 10)
    assert report.holds
    np.testing.assert_allclose(report.time_slack, 0.0, atol=1e-12)
    np.testing.assert_allclose(report.velocity_slack, 0.0, atol=1e-12)


@pytest.mark.parametrize(("amp", "state", "n"), [(0.01, (0.0, 0.5), 10), (0.05, (0.0, 2.0), 20)])
def test_apriori_forced(amp, state, n):
    params = MapParams(ForcingProfile.single_cosine(amp))
    report = apriori_bounds_check(params, EnergyState(*state), n)
    assert report.holds
    assert min(report.time_slack[1:]) > 0.0
