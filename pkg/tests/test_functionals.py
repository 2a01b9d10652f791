import math

import numpy as np
import pytest

from capmono import functionals as fn
from capmono import levelset as ls
from capmono import metrics as mt
from capmono.potential import solve_radial

PI = math.pi


@pytest.fixture(scope="module")
def flat():
    return solve_radial(mt.flat_exterior(1.0))


@pytest.fixture(scope="module")
def schw():
    return solve_radial(mt.schwarzschild(1.0))


@pytest.fixture(scope="module")
def conformal():
    return solve_radial(mt.conformal_radial("1 + 1/r - 0.1/r^2", 1.0))


def _sample(pot, t):
    return ls.sample_radial(pot, t)


def test_F_closed_form_flat(flat):
    # F(t) = -8 pi - 3 pi / t
    for t in (0.5, 1.0, 2.0, 10.0, 100.0):
        assert fn.F_of(_sample(flat, t), flat.C) == pytest.approx(-8 * PI - 3 * PI / t, rel=1e-12)


def test_G_closed_form_flat(flat):
    # G(t) = pi/t^2 + pi/(4 t^3)
    for t in (0.5, 1.0, 4.0, 50.0):
        assert fn.G_of(_sample(flat, t), flat.C) == pytest.approx(PI / t**2 + PI / (4 * t**3), rel=1e-12)
    assert fn.G_of(_sample(flat, 4.0), flat.C) == pytest.approx(PI / 16 + PI / 256, rel=1e-12)


def test_G_prime_flat(flat):
    assert fn.G_prime(_sample(flat, 1.0), flat.C) == pytest.approx(-2.75 * PI, rel=1e-12)
    # closed form derivative -2 pi/t^3 - 3 pi/(4 t^4)
    for t in (0.7, 3.0, 40.0):
        expected = -2 * PI / t**3 - 3 * PI / (4 * t**4)
        assert fn.G_prime(_sample(flat, t), flat.C) == pytest.approx(expected, rel=1e-11)
    # G decays to zero from above at the far end
    far = fn.G_prime(_sample(flat, 1e3), flat.C)
    assert far < 0 and abs(far) < 1e-7


def test_F_G_vanish_on_schwarzschild(schw):
    for t in (0.5, 1.0, 7.0, 300.0):
        assert abs(fn.F_of(_sample(schw, t), schw.C)) < 1e-9
        assert abs(fn.G_of(_sample(schw, t), schw.C)) < 1e-9


def test_F_prime_geometric(flat, schw):
    assert fn.F_prime_geometric(flat, 1.0) == pytest.approx(3 * PI, rel=1e-10)
    assert fn.F_prime_geometric(flat, 2.0) == pytest.approx(3 * PI / 4, rel=1e-10)
    for t in (0.5, 2.0, 90.0):
        assert abs(fn.F_prime_geometric(schw, t)) < 1e-9


def test_F_prime_rejects_non_radial(flat):
    with pytest.raises(TypeError):
        fn.F_prime_geometric(object(), 1.0)


def test_identity_F_equals_4t3_Gprime(flat, schw, conformal):
    for pot in (flat, schw, conformal):
        curve = fn.build_curve(pot, mt.adm_mass(pot.metric) if pot is not schw else 1.0)
        scale = 8 * PI * max(pot.C, 1.0)
        for i, s in enumerate(curve.samples):
            lhs = curve.F[i]
            rhs = 4.0 * s.t**3 / pot.C**2 * curve.G_prime[i]
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs), scale)


def test_endpoint_values(flat, schw):
    b = _sample(flat, 0.5)
    ep = fn.endpoint_values(b, 1.0, 0.0)
    assert ep.F_start == pytest.approx(-14 * PI, rel=1e-12)
    assert ep.G_start == pytest.approx(6 * PI, rel=1e-12)
    assert ep.F_limit_bound == pytest.approx(-8 * PI, rel=1e-12)
    assert ep.G_limit == 0.0
    bs = _sample(schw, 0.5)
    eps = fn.endpoint_values(bs, 1.0, 1.0)
    assert abs(eps.F_start) < 1e-10 and abs(eps.G_start) < 1e-10 and abs(eps.F_limit_bound) < 1e-9


def test_endpoints_match_curve_start(flat):
    curve = fn.build_curve(flat, 0.0)
    ab = fn.ab_quantities(curve.samples[0], flat.C)
    assert curve.F[0] == pytest.approx(ab.B, rel=1e-12)
    assert curve.G[0] == pytest.approx(-ab.A, rel=1e-12)


def test_truncated_endpoints():
    pot = solve_radial(mt.conformal_radial("1 + m/(2*r)", 1.0, {"m": 1.0}))
    b = ls.sample_radial(pot, pot.C / 2.0)
    ab = fn.ab_quantities(b, pot.C)
    assert ab.A == pytest.approx(-7 * PI / 3, rel=1e-10)
    assert ab.B == pytest.approx(-5 * PI, rel=1e-10)
    ep = fn.endpoint_values(b, pot.C, 1.0)
    assert ep.F_start == pytest.approx(-5 * PI, rel=1e-10)
    assert ep.G_start == pytest.approx(7 * PI / 3, rel=1e-10)


def test_monotonicity_audit_schwarzschild(schw):
    curve = fn.build_curve(schw, 1.0)
    rep = fn.monotonicity_audit(curve, r_nonnegative=True, g_hypothesis=True)
    assert rep.f_asserted and rep.g_asserted
    assert not rep.f_violations and not rep.g_violations
    assert rep.ok


def test_monotonicity_audit_flat_records_G_decrease(flat):
    curve = fn.build_curve(flat, 0.0)
    rep = fn.monotonicity_audit(curve, r_nonnegative=True, g_hypothesis=False)
    assert not rep.f_violations  # F = -8pi - 3pi/t is increasing
    assert rep.g_violations  # G decreases; recorded but not asserted
    assert not rep.g_asserted
    assert rep.ok
    assert rep.f_bound_ok  # sup F <= 8 pi (0 - 1) approached from below
    assert rep.F_limit_estimate == pytest.approx(-8 * PI, abs=1e-3)


def test_monotonicity_audit_gates_on_R(flat):
    curve = fn.build_curve(flat, 0.0)
    rep = fn.monotonicity_audit(curve, r_nonnegative=False, g_hypothesis=False)
    assert not rep.f_asserted
    assert any("scalar curvature" in n for n in rep.notes)


def test_divX_consistency(flat, schw):
    assert fn.divX_consistency(schw, 0.5, 5.0) < 1e-9
    # F(2) - F(1) = 1.5 pi equals the integral of 3 pi / tau^2
    assert fn.divX_consistency(flat, 1.0, 2.0) < 1e-9
    assert fn.divX_consistency(flat, 0.5, 10.0) < 1e-8


def test_rigidity_detector(flat, schw):
    schw2 = solve_radial(mt.schwarzschild(2.0))
    curve2 = fn.build_curve(schw2, 2.0)
    verdict = fn.rigidity_detect(curve2, curve2.samples[0])
    assert verdict.fired
    assert verdict.mass == pytest.approx(2.0, abs=1e-9)

    curve_flat = fn.build_curve(flat, 0.0)
    v_flat = fn.rigidity_detect(curve_flat, curve_flat.samples[0])
    assert not v_flat.fired
    assert v_flat.max_F_dev == pytest.approx(14 * PI, rel=1e-10)

    conf = solve_radial(mt.conformal_radial("1 + 1/r - 0.1/r^2", 1.0))
    curve_c = fn.build_curve(conf, mt.adm_mass(conf.metric))
    assert not fn.rigidity_detect(curve_c, curve_c.samples[0]).fired


def test_first_variation_identity(flat, schw, conformal):
    for pot in (flat, schw, conformal):
        for t in (0.9 * pot.C, 2.3 * pot.C, 21.0 * pot.C):
            assert fn.first_variation_defect(pot, t) < 1e-6


def test_hessian_identity_on_schwarzschild(schw):
    for r in np.geomspace(0.5, 80.0, 10):
        assert fn.hessian_identity_defect(schw, float(r)) < 1e-10


def test_F_prime_nonnegative_and_matches_slope(conformal):
    m_adm = mt.adm_mass(conformal.metric)
    curve = fn.build_curve(conformal, m_adm)
    assert np.min(curve.F_prime) >= -1e-10
    # central-difference slope of sampled F vs the geometric derivative
    ts = curve.ts
    for i in range(5, len(ts) - 5, 13):
        t = ts[i]
        dt = 1e-4 * t
        lo = fn.F_of(ls.sample_radial(conformal, t - dt), conformal.C)
        hi = fn.F_of(ls.sample_radial(conformal, t + dt), conformal.C)
        slope = (hi - lo) / (2 * dt)
        geo = fn.F_prime_geometric(conformal, t)
        assert abs(slope - geo) <= 1e-5 * max(abs(geo), 1e-6)


def test_curve_grid_shape(flat):
    curve = fn.build_curve(flat, 0.0, n_points=50, t_max_factor=100.0)
    ts = curve.ts
    assert ts[0] == flat.C / 2.0  # exact boundary point included
    assert len(ts) == 51
    assert np.all(np.diff(ts) > 0)
    assert bool(curve.regular.all())


def test_extrapolate_limit():
    ts = np.geomspace(1.0, 1000.0, 120)
    vals = 5.0 - 2.0 / ts
    assert fn.extrapolate_limit(ts, vals) == pytest.approx(5.0, abs=1e-9)
