import math

import numpy as np
import pytest

from capmono import metrics as mt

PI = math.pi


def test_schwarzschild_definition():
    s = mt.schwarzschild(1.0)
    assert s.phi(r=0.5) == 2.0
    assert s.r0 == 0.5
    rad = s.as_radial()
    f0 = float(rad.f(r=0.5))
    assert 4 * PI * f0 * f0 == pytest.approx(16 * PI, rel=1e-14)
    assert mt.schwarzschild(2.0).r0 == 1.0
    with pytest.raises(mt.MetricError):
        mt.schwarzschild(-1.0)


def test_scalar_curvature_flat_is_zero():
    flat = mt.flat_exterior(1.0)
    r = np.geomspace(1.0, 500.0, 50)
    assert np.max(np.abs(np.broadcast_to(mt.scalar_curvature(flat, r), r.shape))) == 0.0


def test_scalar_curvature_schwarzschild_vanishes():
    s = mt.schwarzschild(1.0)
    assert abs(mt.scalar_curvature(s, 1.0)) < 1e-10
    r = np.geomspace(0.5, 100.0, 300)
    assert np.max(np.abs(mt.scalar_curvature(s, r))) < 1e-9
    # also through the warped-product formula
    rad = s.as_radial()
    assert np.max(np.abs(mt.scalar_curvature(rad, r))) < 1e-9


def test_scalar_curvature_conformal_value():
    c = mt.conformal_radial("1 + 1/r - 0.1/r^2", 1.0)
    # R = -8 phi^-5 lap(phi), lap(r^-2) = 2 r^-4, phi(2) = 1.475
    expected = -8.0 * 1.475 ** (-5) * (2.0 * (-0.1) / 16.0)
    assert mt.scalar_curvature(c, 2.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.014323, abs=2e-6)


def _fd_christoffel_scalar_curvature(metric, r0pt, dtheta=math.pi / 2):
    """Independent oracle: Christoffel contraction with finite differences.

    Coordinates (r, theta, phi); metric diag(a, f^2, f^2 sin^2 theta).
    Derivatives of the Christoffel symbols use Richardson-extrapolated central
    differences on top of analytically assembled first derivatives.
    """
    rad = metric.as_radial() if isinstance(metric, mt.ConformalMetric) else metric

    def gmat(x):
        r, th = x
        a = float(rad.a(r=r))
        f = float(rad.f(r=r))
        return np.diag([a, f * f, f * f * math.sin(th) ** 2])

    def dg(x):
        out = np.zeros((2, 3, 3))
        h = (1e-5 * x[0], 1e-5)
        for k in range(2):
            xp = list(x)
            xm = list(x)
            xp[k] += h[k]
            xm[k] -= h[k]
            out[k] = (gmat(xp) - gmat(xm)) / (2 * h[k])
        return out

    def christoffel(x):
        g = gmat(x)
        ginv = np.linalg.inv(g)
        d = np.zeros((3, 3, 3))  # d[l, i, j] = del_l g_ij; phi-derivative is zero
        d[0] = dg(x)[0]
        d[1] = dg(x)[1]
        gam = np.zeros((3, 3, 3))
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    s = 0.0
                    for l in range(3):
                        s += ginv[k, l] * (d[i][j, l] + d[j][i, l] - d[l][i, j])
                    gam[k, i, j] = 0.5 * s
        return gam

    def ricci_scalar(x, step):
        g = gmat(x)
        ginv = np.linalg.inv(g)
        gam = christoffel(x)
        dgam = np.zeros((3, 3, 3, 3))  # dgam[l, k, i, j] = del_l Gamma^k_ij
        hs = (step * x[0], step)
        for l in range(2):
            xp = list(x)
            xm = list(x)
            xp[l] += hs[l]
            xm[l] -= hs[l]
            dgam[l] = (christoffel(xp) - christoffel(xm)) / (2 * hs[l])
        ric = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                t = 0.0
                for k in range(3):
                    t += dgam[k][k, i, j] if k < 2 else 0.0
                    t -= dgam[i][k, k, j] if i < 2 else 0.0
                    for l in range(3):
                        t += gam[k, k, l] * gam[l, i, j] - gam[k, i, l] * gam[l, k, j]
                ric[i, j] = t
        return float(np.sum(ginv * ric))

    # Richardson on the outer step kills the leading quadratic truncation
    c1 = ricci_scalar((r0pt, dtheta), 2e-4)
    c2 = ricci_scalar((r0pt, dtheta), 1e-4)
    return (4.0 * c2 - c1) / 3.0


@pytest.mark.parametrize(
    "a_src,f_src,r",
    [
        ("1 + 0.8/r", "r*(1 + 0.3/r)", 1.3),
        ("1 + 1/r + 0.2/(r*r)", "r", 1.1),
        ("(1 + 0.5/r)^2", "r*(1 - 0.1/r)", 1.7),
    ],
)
def test_scalar_curvature_matches_christoffel_oracle(a_src, f_src, r):
    metric = mt.warped(a_src, f_src, 1.0)
    sym = float(mt.scalar_curvature(metric, r))
    fd = _fd_christoffel_scalar_curvature(metric, r)
    assert abs(sym) > 1e-3  # the comparison is meaningful only away from zero
    assert abs(sym - fd) <= 1e-6 * max(1.0, abs(sym))


def test_schwarzschild_curvature_against_oracle():
    fd = _fd_christoffel_scalar_curvature(mt.schwarzschild(1.0), 1.0)
    assert abs(fd) < 1e-6  # R identically zero; oracle sees only its own noise


def test_check_nonnegative_R():
    assert mt.check_nonnegative_R(mt.schwarzschild(1.0)).ok
    assert mt.check_nonnegative_R(mt.conformal_radial("1 + 1/r - 0.1/r^2", 1.0)).ok
    bad = mt.check_nonnegative_R(mt.conformal_radial("1 + 1/r + 0.1/r^2", 1.0))
    assert not bad.ok
    assert bad.min_R < 0


def test_mean_curvature_sphere():
    flat = mt.flat_exterior(1.0)
    for r in (1.0, 2.5, 7.0):
        assert mt.mean_curvature_sphere(flat, r) == pytest.approx(2.0 / r, rel=1e-14)
    s = mt.schwarzschild(1.0)
    assert abs(mt.mean_curvature_sphere(s, 0.5)) < 1e-12
    assert mt.mean_curvature_sphere(s, 1.0) == pytest.approx(8.0 / 27.0, rel=1e-13)
    # paper-form cross-check at another radius: H = (2/r)(1 - m/2r)/(1 + m/2r)^3
    r = 2.0
    expected = (2.0 / r) * (1 - 0.25) / (1 + 0.25) ** 3
    assert mt.mean_curvature_sphere(s, r) == pytest.approx(expected, rel=1e-13)


def test_hawking_mass_constant_on_schwarzschild():
    s = mt.schwarzschild(1.0)
    r = np.geomspace(0.5, 200.0, 40)
    m = np.asarray(mt.hawking_mass(s, r))
    assert np.max(np.abs(m - 1.0)) < 1e-10


def test_adm_mass_values():
    assert mt.adm_mass(mt.schwarzschild(1.0)) == pytest.approx(1.0, abs=1e-9)
    assert mt.adm_mass(mt.flat_exterior(1.0)) == pytest.approx(0.0, abs=1e-12)
    c = mt.conformal_radial("1 + 1/r - 0.1/r^2", 1.0)
    assert mt.adm_mass(c) == pytest.approx(2.0, rel=1e-6)


def test_adm_mass_conformal_family_equals_2c1():
    rng = np.random.default_rng(7)
    for _ in range(8):
        c1 = rng.uniform(-2.0, 2.0)
        c2 = rng.uniform(-1.0, 1.0)
        metric = mt.conformal_radial("1 + c1/r + c2/r^2", 4.0, {"c1": c1, "c2": c2})
        m = mt.adm_mass(metric)
        assert m == pytest.approx(2.0 * c1, rel=1e-6, abs=1e-7)


def test_decay_order():
    assert 0.9 < mt.decay_order(mt.schwarzschild(1.0)) < 1.1
    assert mt.decay_order(mt.flat_exterior(1.0)) == math.inf
    slow = mt.warped("1 + r^(-0.4)", "r", 1.0)
    tau = mt.decay_order(slow)
    assert tau == pytest.approx(0.4, abs=0.05)
    diag = mt.validate(slow)
    assert any("tau" in w for w in diag.warnings)


def test_validate_aborts_on_bad_metrics():
    with pytest.raises(mt.MetricError):
        mt.validate(mt.warped("1 - 2/r", "r", 1.0))  # a(r0) < 0
    with pytest.raises(mt.MetricError):
        mt.validate(mt.warped("1", "1/r + 2", 1.0))  # f' < 0


def test_validate_accepts_minimal_boundary():
    diag = mt.validate(mt.schwarzschild(1.0))
    assert diag.min_df >= 0.0
    assert not diag.warnings


def test_curvature_sample():
    cs = mt.curvature_sample(mt.flat_exterior(1.0), 2.0)
    assert cs.R == 0.0
    assert cs.H_sphere == pytest.approx(1.0)


def test_adm_mass_divergence_is_reported():
    # slow decay: the Hawking quantity grows like r^0.6, the ladder must not
    # silently truncate
    with pytest.raises(mt.MetricError, match="extrapolation"):
        mt.adm_mass(mt.warped("1 + r^(-0.4)", "r", 1.0))
