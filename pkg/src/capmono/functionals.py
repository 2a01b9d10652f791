"""The two monotone quantities F and G along level sets, and their audits.

With C the boundary capacity, t the fake-distance parameter and the level-set
moments I2 = int |grad u|^2, IH = int |grad u| H, the monotone quantities are

    F(t) = 4 pi t + (t + C/2)^3 (1 - 3C/2t) I2 / C^2 - (t + C/2)^2 IH / C,
    G(t) = - pi C^2 / t + (t + C/2)^4 I2 / (4 t^3),

with G'(t) = pi C^2/t^2 + (t + C/2)^3 (1 - 3C/2t) I2/(4t^3) - C (t+C/2)^2 IH/(4t^3),
linked by F(t) = (4 t^3 / C^2) G'(t).  F is nondecreasing whenever scalar
curvature is nonnegative and all regular level sets are connected; G is
nondecreasing under the additional mean-curvature hypothesis on the boundary.
F starts at B = C [2 pi - 2 I2 - IH] (boundary values), is bounded above by
8 pi (m_ADM - C); G starts at -A with A = 2 C [pi - I2] and tends to 0.

In radial symmetry the geometric form of F' is available pointwise:

    F' = 4 pi - int R^Sigma/2 + int [ R/2 + (3/4)(4u/(1-u^2) |grad u| - H)^2 ],

where the round level sets make the tangential-gradient and traceless second
fundamental form contributions vanish and int R^Sigma/2 = 4 pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .levelset import LevelSetSample, sample_radial_many
from .metrics import scalar_curvature
from .potential.radial import RadialPotential

__all__ = [
    "ABQuantities",
    "EndpointValues",
    "MonotoneCurve",
    "MonotonicityReport",
    "RigidityVerdict",
    "F_of",
    "G_of",
    "G_prime",
    "F_prime_geometric",
    "endpoint_values",
    "ab_quantities",
    "build_curve",
    "curve_from_samples",
    "monotonicity_audit",
    "divX_consistency",
    "rigidity_detect",
    "extrapolate_limit",
    "hessian_identity_defect",
    "first_variation_defect",
    "schwarzschild_area_bound",
]

T_GRID_POINTS = 200
T_MAX_FACTOR = 1e3
T_START_OFFSET = 1e-9  # first interior grid point at C/2 * (1 + offset)


def F_of(sample: LevelSetSample, C: float) -> float:
    """First monotone quantity at the sample's parameter."""
    t = sample.t
    s = t + C / 2.0
    return float(
        4.0 * math.pi * t
        + s**3 * (1.0 - 3.0 * C / (2.0 * t)) * sample.I2 / C**2
        - s**2 * sample.IH / C
    )


def G_of(sample: LevelSetSample, C: float) -> float:
    """Second monotone quantity at the sample's parameter."""
    t = sample.t
    s = t + C / 2.0
    return float(-math.pi * C**2 / t + s**4 * sample.I2 / (4.0 * t**3))


def G_prime(sample: LevelSetSample, C: float) -> float:
    """Derivative formula for G; satisfies F = (4 t^3 / C^2) G'."""
    t = sample.t
    s = t + C / 2.0
    return float(
        math.pi * C**2 / t**2
        + s**3 * (1.0 - 3.0 * C / (2.0 * t)) * sample.I2 / (4.0 * t**3)
        - C * s**2 * sample.IH / (4.0 * t**3)
    )


def _F_prime_at_radius(pot: RadialPotential, r: np.ndarray) -> np.ndarray:
    """Geometric F' evaluated on level spheres of coordinate radius r."""
    m = pot.metric
    r = np.asarray(r, dtype=float)
    f = np.broadcast_to(np.asarray(m.f(r=r), dtype=float), r.shape)
    a = np.broadcast_to(np.asarray(m.a(r=r), dtype=float), r.shape)
    df = np.broadcast_to(np.asarray(m.df(r=r), dtype=float), r.shape)
    R = np.broadcast_to(np.asarray(scalar_curvature(m, r), dtype=float), r.shape)
    H = 2.0 * df / (f * np.sqrt(a))
    w = pot.C / f**2
    one_minus = pot.one_minus_u(r)
    u = 1.0 - one_minus
    one_minus_sq = one_minus * (1.0 + u)  # 1 - u^2 without cancellation
    W = 4.0 * u / one_minus_sq * w - H
    area = 4.0 * math.pi * f**2
    R_sigma = 2.0 / f**2  # round level sets
    return 4.0 * math.pi - 0.5 * R_sigma * area + area * (0.5 * R + 0.75 * W * W)


def F_prime_geometric(pot: RadialPotential, t) -> float | np.ndarray:
    """Geometric derivative of F; radial metrics only (umbilic round level sets).

    Nonnegative whenever the scalar curvature is nonnegative.
    """
    if not isinstance(pot, RadialPotential):
        raise TypeError("geometric F' requires a radial potential")
    r = pot.level_radius(t)
    out = _F_prime_at_radius(pot, np.atleast_1d(np.asarray(r, dtype=float)))
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class ABQuantities:
    """Boundary quantities A = 2C[pi - I2(dM)] and B = C[2pi - 2 I2 - IH](dM).

    B = F(C/2) and A = -G(C/2).
    """

    A: float
    B: float


def ab_quantities(boundary: LevelSetSample, C: float) -> ABQuantities:
    A = 2.0 * C * (math.pi - boundary.I2)
    B = C * (2.0 * math.pi - 2.0 * boundary.I2 - boundary.IH)
    return ABQuantities(A=float(A), B=float(B))


@dataclass(frozen=True)
class EndpointValues:
    F_start: float
    G_start: float
    F_limit_bound: float
    G_limit: float = 0.0


def endpoint_values(boundary: LevelSetSample, C: float, m_adm: float) -> EndpointValues:
    ab = ab_quantities(boundary, C)
    return EndpointValues(
        F_start=ab.B,
        G_start=-ab.A,
        F_limit_bound=8.0 * math.pi * (m_adm - C),
    )


def schwarzschild_area_bound(t, C: float):
    """Model area of the level sphere: 4 pi t^2 (1 + C/2t)^4."""
    t = np.asarray(t, dtype=float)
    return 4.0 * math.pi * (t + C / 2.0) ** 4 / (t * t)


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


@dataclass
class MonotoneCurve:
    """Sampled F and G along an increasing fake-distance grid."""

    samples: list[LevelSetSample]
    C: float
    m_adm: float
    F: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    G_prime: np.ndarray = field(repr=False)
    F_prime: np.ndarray | None = field(default=None, repr=False)  # radial only
    regular: np.ndarray = field(default=None, repr=False)

    @property
    def ts(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def rows(self) -> list[dict]:
        out = []
        for i, s in enumerate(self.samples):
            out.append(
                {
                    "t": s.t,
                    "level": s.level,
                    "area": s.area,
                    "I2": s.I2,
                    "IH": s.IH,
                    "IH2": s.IH2,
                    "F": float(self.F[i]),
                    "G": float(self.G[i]),
                    "Fprime": float(self.F_prime[i]) if self.F_prime is not None else None,
                    "Gprime": float(self.G_prime[i]),
                    "regular": bool(self.regular[i]),
                }
            )
        return out


def default_t_grid(C: float, n_points: int = T_GRID_POINTS, t_max_factor: float = T_MAX_FACTOR) -> np.ndarray:
    """Geometric grid on [C/2, t_max_factor * C] plus the exact boundary point."""
    interior = np.geomspace(C / 2.0 * (1.0 + T_START_OFFSET), t_max_factor * C, n_points)
    return np.concatenate([[C / 2.0], interior])


def curve_from_samples(
    samples: list[LevelSetSample],
    C: float,
    m_adm: float,
    regular: np.ndarray | None = None,
    with_F_prime: RadialPotential | None = None,
) -> MonotoneCurve:
    F = np.array([F_of(s, C) for s in samples])
    G = np.array([G_of(s, C) for s in samples])
    Gp = np.array([G_prime(s, C) for s in samples])
    Fp = None
    if with_F_prime is not None:
        ts = np.array([s.t for s in samples])
        Fp = np.asarray(F_prime_geometric(with_F_prime, ts), dtype=float)
    if regular is None:
        regular = np.array([s.min_grad > 0 for s in samples])
    return MonotoneCurve(samples=samples, C=C, m_adm=m_adm, F=F, G=G, G_prime=Gp,
                         F_prime=Fp, regular=np.asarray(regular, dtype=bool))


def build_curve(
    pot: RadialPotential,
    m_adm: float,
    n_points: int = T_GRID_POINTS,
    t_max_factor: float = T_MAX_FACTOR,
) -> MonotoneCurve:
    ts = default_t_grid(pot.C, n_points, t_max_factor)
    samples = sample_radial_many(pot, ts)
    return curve_from_samples(samples, pot.C, m_adm, with_F_prime=pot)


def extrapolate_limit(ts: np.ndarray, vals: np.ndarray) -> float:
    """Limit at t -> infinity by a least-squares v = v_inf + b/t fit on the last decade."""
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    mask = ts >= ts[-1] / 10.0
    if np.count_nonzero(mask) < 3:
        mask = np.zeros_like(ts, dtype=bool)
        mask[-3:] = True
    A = np.stack([np.ones(np.count_nonzero(mask)), 1.0 / ts[mask]], axis=1)
    coef, *_ = np.linalg.lstsq(A, vals[mask], rcond=None)
    return float(coef[0])


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonotonicityReport:
    f_violations: tuple[tuple[float, float, float], ...]
    g_violations: tuple[tuple[float, float, float], ...]
    sup_F: float
    F_limit_estimate: float
    F_bound: float
    f_bound_ok: bool
    g_max: float
    G_limit_estimate: float
    g_nonpositive_ok: bool | None
    f_asserted: bool
    g_asserted: bool
    tol_F: float
    tol_G: float
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        if self.f_asserted and (self.f_violations or not self.f_bound_ok):
            return False
        if self.g_asserted and (self.g_violations or self.g_nonpositive_ok is False):
            return False
        return True


def monotonicity_audit(
    curve: MonotoneCurve,
    *,
    r_nonnegative: bool,
    connected: bool = True,
    g_hypothesis: bool = False,
    tol: float | None = None,
    bound_tol: float = 1e-6,
) -> MonotonicityReport:
    """List adjacent regular-sample decreases of F (and of G when claimed).

    The F claim is only asserted when the scalar-curvature gate passed and all
    regular level sets are connected; the G claim additionally requires the
    boundary mean-curvature hypothesis.  Otherwise violations are recorded as
    informational.
    """
    notes = []
    f_asserted = bool(r_nonnegative and connected)
    if not r_nonnegative:
        notes.append("scalar curvature gate failed: F-monotonicity not asserted")
    if not connected:
        notes.append("disconnected regular level set: monotonicity claims withdrawn")
    g_asserted = bool(f_asserted and g_hypothesis)

    ts = curve.ts
    reg = curve.regular
    scaleF = 8.0 * math.pi * max(curve.C, abs(curve.m_adm), 1e-300)
    base = 1e-8 if tol is None else tol

    f_viol = []
    g_viol = []
    idx = np.flatnonzero(reg)
    for a, b in zip(idx[:-1], idx[1:]):
        tol_i = base * (1.0 + abs(float(curve.F[a]))) if tol is None else tol
        drop = float(curve.F[b] - curve.F[a])
        if drop < -tol_i:
            f_viol.append((float(ts[a]), float(ts[b]), drop))
        tol_g = base * (1.0 + abs(float(curve.G[a]))) if tol is None else tol
        gdrop = float(curve.G[b] - curve.G[a])
        if gdrop < -tol_g:
            g_viol.append((float(ts[a]), float(ts[b]), gdrop))

    sup_F = float(np.max(curve.F[reg])) if reg.any() else -math.inf
    F_bound = 8.0 * math.pi * (curve.m_adm - curve.C)
    f_bound_ok = sup_F <= F_bound + bound_tol * max(1.0, scaleF / (8.0 * math.pi))
    F_limit = extrapolate_limit(ts[reg], curve.F[reg])
    G_limit = extrapolate_limit(ts[reg], curve.G[reg])
    g_max = float(np.max(curve.G[reg])) if reg.any() else -math.inf
    g_nonpos = None
    if g_hypothesis:
        # the zero-limit check: the extrapolated value must be small against
        # the data it was fitted to (the 1/t fit cannot resolve below the
        # magnitude of the tail it extrapolates)
        ts_reg = ts[reg]
        window = np.abs(curve.G[reg][ts_reg >= ts_reg[-1] / 10.0])
        g_window = float(np.max(window)) if len(window) else 0.0
        limit_tol = max(bound_tol, 0.5 * g_window)
        g_nonpos = bool(g_max <= base * math.pi * max(curve.C, 1.0)) and abs(G_limit) <= limit_tol

    return MonotonicityReport(
        f_violations=tuple(f_viol),
        g_violations=tuple(g_viol),
        sup_F=sup_F,
        F_limit_estimate=F_limit,
        F_bound=F_bound,
        f_bound_ok=bool(f_bound_ok),
        g_max=g_max,
        G_limit_estimate=G_limit,
        g_nonpositive_ok=g_nonpos,
        f_asserted=f_asserted,
        g_asserted=g_asserted,
        tol_F=base,
        tol_G=base,
        notes=tuple(notes),
    )


def divX_consistency(pot: RadialPotential, t: float, T: float, n_segments: int = 160) -> float:
    """|F(T) - F(t) - integral of F' over [t, T]| in the smooth radial case.

    The parameter integral is pulled back to coordinate radius (d tau =
    rho'(r) dr) and evaluated by composite Gauss-Legendre; the coarea route
    and the direct route must agree.
    """
    if not (pot.C / 2.0 <= t < T):
        raise ValueError(f"need C/2 <= t < T, got t={t}, T={T}")
    samples = sample_radial_many(pot, np.array([t, T]))
    direct = F_of(samples[1], pot.C) - F_of(samples[0], pot.C)

    r_lo, r_hi = pot.level_radius(t), pot.level_radius(T)
    edges = np.geomspace(r_lo, r_hi, n_segments + 1)
    from .potential.radial import _GL_W, _GL_X  # shared fixed-order rule

    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    vals = _F_prime_at_radius(pot, pts) * pot.rho_prime(pts)
    integral = float(np.sum((vals.reshape(len(lo), -1) @ _GL_W) * half))
    return abs(direct - integral)


@dataclass(frozen=True)
class RigidityVerdict:
    fired: bool
    mass: float | None
    max_F_dev: float
    max_G_dev: float
    max_area_rel_dev: float
    detail: str


def rigidity_detect(
    curve: MonotoneCurve,
    boundary: LevelSetSample,
    tol_rig: float = 1e-6,
) -> RigidityVerdict:
    """Fire the model verdict iff F and G vanish and areas match the model.

    The three conditions: max |F| <= tol * 8 pi C, max |G| <= tol * pi C, and
    area(Sigma_t) within tol relative of 4 pi t^2 (1 + C/2t)^4 at all regular
    samples.
    """
    C = curve.C
    reg = curve.regular
    max_F = float(np.max(np.abs(curve.F[reg])))
    max_G = float(np.max(np.abs(curve.G[reg])))
    ts = curve.ts
    areas = np.array([s.area for s in curve.samples])
    bound = np.asarray(schwarzschild_area_bound(ts, C))
    area_dev = float(np.max(np.abs(areas[reg] / bound[reg] - 1.0)))
    ok = (
        max_F <= tol_rig * 8.0 * math.pi * C
        and max_G <= tol_rig * math.pi * C
        and area_dev <= tol_rig
    )
    if ok:
        detail = f"model manifold detected with mass = C = {C:.12g}"
    else:
        dev_desc = []
        if max_F > tol_rig * 8.0 * math.pi * C:
            dev_desc.append(f"max|F| = {max_F:.6g}")
        if max_G > tol_rig * math.pi * C:
            dev_desc.append(f"max|G| = {max_G:.6g}")
        if area_dev > tol_rig:
            dev_desc.append(f"area deviation {area_dev:.3%}")
        detail = "non-rigid: " + ", ".join(dev_desc)
    return RigidityVerdict(
        fired=bool(ok),
        mass=C if ok else None,
        max_F_dev=max_F,
        max_G_dev=max_G,
        max_area_rel_dev=area_dev,
        detail=detail,
    )


# ---------------------------------------------------------------------------
# Pointwise identities (used by the validation suite)
# ---------------------------------------------------------------------------


def hessian_identity_defect(pot: RadialPotential, r: float) -> float:
    """Radial Hessian identity |Hess u|^2 = |grad u|^2 |h|^2 + |grad|grad u||^2.

    The tangential-gradient term of the general identity vanishes radially.
    Returns the relative defect at radius r.
    """
    m = pot.metric
    C = pot.C
    a = float(m.a(r=r))
    f = float(m.f(r=r))
    da = float(m.da(r=r))
    df = float(m.df(r=r))
    w_r = C * math.sqrt(a) / f**2  # u'(r)
    # u'' from u' = C sqrt(a)/f^2
    upp = C * (da / (2.0 * math.sqrt(a) * f**2) - 2.0 * math.sqrt(a) * df / f**3)
    hess_rr = upp - da * w_r / (2.0 * a)
    hess_ang = f * df * w_r / a  # theta-theta component (phi-phi carries sin^2)
    hess_sq = (hess_rr / a) ** 2 + 2.0 * (hess_ang / f**2) ** 2

    grad_sq = C**2 / f**4
    H = 2.0 * df / (f * math.sqrt(a))
    h_sq = H * H / 2.0  # umbilic: |h|^2 = H^2/2
    dwdr = -2.0 * C * df / f**3  # d|grad u|/dr
    grad_of_grad_sq = dwdr * dwdr / a

    lhs = hess_sq
    rhs = grad_sq * h_sq + grad_of_grad_sq
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale


def first_variation_defect(pot: RadialPotential, t: float, rel_step: float = 1e-5) -> float:
    """Defect of d/dt I2(t) = -(C/t^2)(1 + C/2t)^{-2} IH(t), by central difference."""
    dt = rel_step * t
    lo, hi = sample_radial_many(pot, np.array([t - dt, t + dt]))
    mid = sample_radial_many(pot, np.array([t]))[0]
    fd = (hi.I2 - lo.I2) / (2.0 * dt)
    C = pot.C
    rhs = -(C / t**2) * (1.0 + C / (2.0 * t)) ** (-2) * mid.IH
    scale = max(abs(fd), abs(rhs), 1e-300)
    return abs(fd - rhs) / scale
