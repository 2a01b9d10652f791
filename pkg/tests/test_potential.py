import math

import numpy as np
import pytest

from capmono import metrics as mt
from capmono.potential import (
    FakeDistance,
    capacity,
    fake_distance,
    level_radius,
    solve_radial,
)
from capmono.potential.radial import SolverError

PI = math.pi


@pytest.fixture(scope="module")
def schw():
    return solve_radial(mt.schwarzschild(1.0))


@pytest.fixture(scope="module")
def flat():
    return solve_radial(mt.flat_exterior(1.0))


@pytest.fixture(scope="module")
def truncated():
    return solve_radial(mt.conformal_radial("1 + m/(2*r)", 1.0, {"m": 1.0}))


def test_schwarzschild_capacity_and_potential(schw):
    assert schw.C == pytest.approx(1.0, abs=1e-10)
    assert schw.u(1.0) == pytest.approx(1.0 / 3.0, abs=1e-10)
    # closed form u = 1 - (r0 + m/2)/(r + m/2)
    for r in (0.6, 2.0, 17.0):
        assert schw.u(r) == pytest.approx(1.0 - 1.0 / (r + 0.5), abs=1e-12)
    assert schw.grad_norm(0.5) == pytest.approx(0.25, abs=1e-12)


def test_flat_potential(flat):
    assert flat.C == pytest.approx(1.0, abs=1e-13)
    assert flat.u(2.0) == pytest.approx(0.5, abs=1e-13)


def test_truncated_capacity(truncated):
    assert truncated.C == pytest.approx(1.5, abs=1e-10)


def test_capacity_report(schw, flat, truncated):
    for pot, C in ((schw, 1.0), (flat, 1.0), (truncated, 1.5)):
        cap = capacity(pot)
        assert cap.C_flux == pytest.approx(C, abs=1e-8 * C)
        assert cap.C_energy == pytest.approx(C, abs=1e-8 * C)
        assert cap.ok
        assert all(f == pytest.approx(C, abs=1e-8 * C) for f in cap.level_fluxes)


def test_fake_distance_values(schw, flat):
    assert fake_distance(schw, schw.r0) == pytest.approx(schw.C / 2.0, rel=1e-13)
    for r in (0.5, 1.0, 4.0, 123.0):
        assert fake_distance(schw, r) == pytest.approx(r, rel=1e-12)
    assert fake_distance(flat, 2.0) == pytest.approx(1.5, rel=1e-13)


def test_level_radius_examples(flat):
    assert level_radius(flat, 1.5) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(SolverError):
        level_radius(flat, 0.3)  # below C/2


def test_fake_distance_roundtrip(schw, flat, truncated):
    for pot in (schw, flat, truncated):
        ts = np.geomspace(pot.C / 2.0 * (1 + 1e-9), 1e3 * pot.C, 60)
        r = pot.level_radius(ts)
        back = pot.rho(r)
        assert np.max(np.abs(back / ts - 1.0)) < 1e-10


def test_level_value_map(schw):
    fd = FakeDistance(schw)
    assert fd.level(schw.C / 2.0) == 0.0
    assert fd.level(1e9) == pytest.approx(1.0, abs=1e-8)
    assert fd.to_radius(7.25) == pytest.approx(7.25, rel=1e-12)


def test_radial_flux_identity(schw, truncated):
    # |grad u| * area = 4 pi C at every sampled level
    for pot in (schw, truncated):
        ts = np.geomspace(pot.C / 2.0 * (1 + 1e-6), 500 * pot.C, 25)
        r = pot.level_radius(ts)
        f = np.asarray(pot.metric.f(r=r))
        flux = pot.grad_norm(r) * 4.0 * PI * f * f
        assert np.max(np.abs(flux / (4 * PI * pot.C) - 1.0)) < 1e-12


def test_no_critical_points_radially(schw):
    ts = np.geomspace(schw.C / 2.0 * (1 + 1e-9), 1e3 * schw.C, 40)
    r = schw.level_radius(ts)
    assert np.min(schw.grad_norm(r)) > 0.0


def test_query_below_boundary_rejected(schw):
    with pytest.raises(SolverError):
        schw.u(0.4)


def test_tolerance_floor():
    with pytest.raises(SolverError):
        solve_radial(mt.flat_exterior(1.0), tol=1e-14)


def test_parabolic_end_detected():
    # f = sqrt(r): integrand sqrt(a)/f^2 = 1/r, a non-integrable tail
    with pytest.raises(SolverError, match="parabolic"):
        solve_radial(mt.warped("1", "sqrt(r)", 1.0))


def test_residual_consistency_against_quad(schw, truncated):
    # independent check of the cumulative tables against scipy adaptive quadrature
    from scipy.integrate import quad

    for pot in (schw, truncated):
        m = pot.metric

        def w(r):
            return math.sqrt(float(m.a(r=r))) / float(m.f(r=r)) ** 2

        for r in (pot.r0 * 1.7, pot.r0 * 9.0):
            val, _ = quad(w, pot.r0, r, epsabs=1e-13, epsrel=1e-13)
            assert pot.u(r) == pytest.approx(pot.C * val, abs=5e-12)
