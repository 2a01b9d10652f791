"""Metric families: curvature, coordinate-sphere mean curvature, ADM mass.

Two families are supported, both spherically symmetric at the level of the
input data:

* ``RadialMetric``: a warped product  a(r) dr x dr + f(r)^2 g_{S^2}  on
  [r0, infinity) x S^2.
* ``ConformalMetric``: phi(r)^4 times the flat metric outside the ball of
  radius r0 (phi radial; this is also the family the 3D grid solver accepts).

Scalar curvature uses the orthonormal-frame warped-product form

    R = -4 f_ss / f + 2 (1 - f_s^2) / f^2,   f_s = f' / sqrt(a),

which is exactly zero on flat space, avoiding the cancellation pitfalls of a
coordinate-Christoffel expansion.  All derivatives are symbolic via `expr`.

The ADM mass is computed from the Hawking-type quantity (f/2)(1 - f_s^2) on
coordinate spheres (exact for the model families), Richardson-extrapolated
along dyadic radii; conformal metrics are additionally checked against the
flux-integral form, which for phi^4 times flat reduces to -2 r^2 phi^3 phi'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import Expr, parse

__all__ = [
    "MetricError",
    "RadialMetric",
    "ConformalMetric",
    "CurvatureSample",
    "RCheck",
    "schwarzschild",
    "flat_exterior",
    "conformal_radial",
    "warped",
    "scalar_curvature",
    "mean_curvature_sphere",
    "curvature_sample",
    "check_nonnegative_R",
    "hawking_mass",
    "adm_mass",
    "adm_mass_flux",
    "decay_order",
    "validate",
]

R_MAX_FACTOR = 1e3  # default outer radius for tail diagnostics, in units of r0
TOL_R = 1e-10  # absolute tolerance for the nonnegative-scalar-curvature gate


class MetricError(Exception):
    """Metric fails a hard validity requirement (a <= 0 or f' <= 0)."""


@dataclass
class RadialMetric:
    """Warped product a(r) dr x dr + f(r)^2 g_{S^2} on r >= r0."""

    r0: float
    a: Expr
    f: Expr
    da: Expr = field(init=False, repr=False)
    df: Expr = field(init=False, repr=False)
    d2f: Expr = field(init=False, repr=False)

    def __post_init__(self):
        if self.r0 <= 0:
            raise MetricError(f"inner radius must be positive, got {self.r0}")
        self.da = self.a.diff("r")
        self.df = self.f.diff("r")
        self.d2f = self.df.diff("r")

    def f_s(self, r):
        """Derivative of f with respect to proper radial arclength."""
        return self.df(r=r) / np.sqrt(self.a(r=r))

    def f_ss(self, r):
        a = self.a(r=r)
        return self.d2f(r=r) / a - self.df(r=r) * self.da(r=r) / (2.0 * a * a)


@dataclass
class ConformalMetric:
    """g = phi(r)^4 * flat outside the ball of radius r0, phi -> 1 at infinity."""

    r0: float
    phi: Expr
    dphi: Expr = field(init=False, repr=False)
    d2phi: Expr = field(init=False, repr=False)

    def __post_init__(self):
        if self.r0 <= 0:
            raise MetricError(f"inner radius must be positive, got {self.r0}")
        self.dphi = self.phi.diff("r")
        self.d2phi = self.dphi.diff("r")

    def as_radial(self) -> RadialMetric:
        """Equivalent warped-product view: a = phi^4, f = r phi^2."""
        r = Expr.variable("r")
        return RadialMetric(self.r0, self.phi**4, r * self.phi**2)


@dataclass(frozen=True)
class CurvatureSample:
    r: float
    R: float
    H_sphere: float


@dataclass(frozen=True)
class RCheck:
    ok: bool
    min_R: float
    argmin: float


def schwarzschild(m: float) -> ConformalMetric:
    """Exterior Schwarzschild manifold of mass m: phi = 1 + m/(2r), r0 = m/2."""
    if m <= 0:
        raise MetricError(f"mass must be positive, got {m}")
    return ConformalMetric(m / 2.0, parse("1 + m/(2*r)", {"r"}, {"m": m}))


def flat_exterior(r0: float) -> RadialMetric:
    """Flat space outside the sphere of radius r0 (a = 1, f = r)."""
    return RadialMetric(r0, parse("1", {"r"}), parse("r", {"r"}))


def conformal_radial(phi_src: str, r0: float, params=None) -> ConformalMetric:
    return ConformalMetric(r0, parse(phi_src, {"r"}, params or {}))


def warped(a_src: str, f_src: str, r0: float, params=None) -> RadialMetric:
    params = params or {}
    return RadialMetric(r0, parse(a_src, {"r"}, params), parse(f_src, {"r"}, params))


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------


def scalar_curvature(metric, r):
    """Scalar curvature at radius r (vectorized over r)."""
    if isinstance(metric, ConformalMetric):
        phi = metric.phi(r=r)
        lap = metric.d2phi(r=r) + 2.0 * metric.dphi(r=r) / r
        return -8.0 * lap / phi**5
    f = metric.f(r=r)
    fs = metric.f_s(r)
    fss = metric.f_ss(r)
    return -4.0 * fss / f + 2.0 * (1.0 - fs * fs) / (f * f)


def mean_curvature_sphere(metric, r):
    """Mean curvature of {r = const} w.r.t. the infinity-pointing normal."""
    if isinstance(metric, ConformalMetric):
        metric = metric.as_radial()
    return 2.0 * metric.df(r=r) / (metric.f(r=r) * np.sqrt(metric.a(r=r)))


def curvature_sample(metric, r: float) -> CurvatureSample:
    return CurvatureSample(r, float(scalar_curvature(metric, r)), float(mean_curvature_sphere(metric, r)))


def check_nonnegative_R(metric, r_grid=None, tol: float = TOL_R, r_max_factor: float = R_MAX_FACTOR) -> RCheck:
    """min scalar curvature over a diagnostic grid; ok iff min >= -tol."""
    if r_grid is None:
        r_grid = np.geomspace(metric.r0, r_max_factor * metric.r0, 400)
    R = np.asarray(scalar_curvature(metric, np.asarray(r_grid, dtype=float)))
    i = int(np.argmin(R))
    return RCheck(bool(R[i] >= -tol), float(R[i]), float(np.asarray(r_grid)[i]))


# ---------------------------------------------------------------------------
# ADM mass
# ---------------------------------------------------------------------------


def hawking_mass(metric, r):
    """(f/2)(1 - f_s^2) on the coordinate sphere of radius r."""
    if isinstance(metric, ConformalMetric):
        metric = metric.as_radial()
    fs = metric.f_s(r)
    return 0.5 * metric.f(r=r) * (1.0 - fs * fs)


def _richardson_limit(values: np.ndarray, max_order: int = 5) -> tuple[float, float]:
    """Extrapolate v_k sampled at dyadic radii assuming a 1/r power series.

    Returns (limit, error_estimate).  Raises MetricError when the ladder
    diverges instead of silently truncating.
    """
    values = np.asarray(values, dtype=float)
    scale0 = max(1.0, float(np.max(np.abs(values))))
    inc = np.abs(np.diff(values))
    if len(inc) >= 3 and inc[-1] > inc[-2] > inc[-3] and inc[-1] > 1e-9 * scale0:
        raise MetricError(
            "ADM extrapolation diverged: the sphere quantity grows under radius doubling"
        )
    rows = [values]
    for j in range(1, max_order + 1):
        prev = rows[-1]
        if len(prev) < 2:
            break
        w = 2.0**j
        rows.append((w * prev[1:] - prev[:-1]) / (w - 1.0))
    best = float(rows[0][-1])
    best_err = math.inf
    prev_tail = float(rows[0][-1])
    for row in rows[1:]:
        tail = float(row[-1])
        err = abs(tail - prev_tail)
        if err < best_err:
            best, best_err = tail, err
        prev_tail = tail
    if not math.isfinite(best) or not math.isfinite(best_err):
        raise MetricError("ADM extrapolation diverged (non-finite ladder)")
    scale = max(abs(best), 1e-30)
    if best_err > 0.2 * scale and abs(best) > 1e-10 * max(1.0, values[0]):
        raise MetricError(
            f"ADM extrapolation did not converge: estimate {best:.6g}, spread {best_err:.3g}"
        )
    return best, best_err


def adm_mass(metric, return_error: bool = False):
    """ADM mass via the Hawking-type limit, Richardson-extrapolated.

    For conformal metrics the flux-integral form is evaluated as well and
    required to agree within 1e-6 relative.
    """
    radial = metric.as_radial() if isinstance(metric, ConformalMetric) else metric
    r_base = 64.0 * radial.r0
    radii = r_base * 2.0 ** np.arange(14)
    vals = np.asarray(hawking_mass(radial, radii), dtype=float)
    m, err = _richardson_limit(vals)
    if isinstance(metric, ConformalMetric):
        m_flux, _ = adm_mass_flux(metric, return_error=True)
        denom = max(abs(m), abs(m_flux), metric.r0)
        if abs(m - m_flux) > 1e-6 * denom:
            raise MetricError(
                f"Hawking-limit mass {m:.12g} and flux-integral mass {m_flux:.12g} disagree"
            )
    return (m, err) if return_error else m


def adm_mass_flux(metric: ConformalMetric, return_error: bool = False):
    """Flux-integral ADM mass for phi^4 * flat: limit of -2 r^2 phi^3 phi'."""
    r_base = 64.0 * metric.r0
    radii = r_base * 2.0 ** np.arange(14)
    phi = metric.phi(r=radii)
    vals = -2.0 * radii**2 * phi**3 * metric.dphi(r=radii)
    m, err = _richardson_limit(np.asarray(vals, dtype=float))
    return (m, err) if return_error else m


# ---------------------------------------------------------------------------
# Asymptotic-flatness diagnostics
# ---------------------------------------------------------------------------


def decay_order(metric, r_max_factor: float = R_MAX_FACTOR) -> float:
    """Log-log slope estimate of |g - delta| decay; math.inf for exactly flat."""
    radial = metric.as_radial() if isinstance(metric, ConformalMetric) else metric
    radii = 8.0 * radial.r0 * 2.0 ** np.arange(12)
    dev_a = np.abs(np.asarray(radial.a(r=radii), dtype=float) - 1.0)
    dev_f = np.abs(np.asarray(radial.f(r=radii), dtype=float) / radii - 1.0)
    dev = np.maximum(dev_a, dev_f)
    if np.max(dev) < 1e-13:
        return math.inf
    mask = dev > 1e-14
    if np.count_nonzero(mask) < 3:
        return math.inf
    slope = np.polyfit(np.log(radii[mask]), np.log(dev[mask]), 1)[0]
    return float(-slope)


@dataclass(frozen=True)
class MetricDiagnostics:
    decay_tau: float
    min_a: float
    min_f: float
    min_df: float
    warnings: tuple[str, ...]


def validate(metric, r_max_factor: float = R_MAX_FACTOR) -> MetricDiagnostics:
    """Positivity and asymptotics checks.

    a <= 0 or f' <= 0 abort with MetricError; decay-order and limit issues are
    reported as warnings only.
    """
    radial = metric.as_radial() if isinstance(metric, ConformalMetric) else metric
    grid = np.geomspace(radial.r0, r_max_factor * radial.r0, 600)
    a = np.asarray(radial.a(r=grid), dtype=float)
    f = np.asarray(radial.f(r=grid), dtype=float)
    df = np.asarray(radial.df(r=grid), dtype=float)
    if np.min(a) <= 0.0:
        raise MetricError(f"a(r) <= 0 at r = {grid[int(np.argmin(a))]:.6g}")
    if np.min(f) <= 0.0:
        raise MetricError(f"f(r) <= 0 at r = {grid[int(np.argmin(f))]:.6g}")
    # f'(r0) = 0 is legal (minimal boundary, e.g. Schwarzschild); beyond r0 the
    # coordinate spheres must strictly foliate.  The boundary gets roundoff
    # headroom: a symbolic zero can evaluate to -1e-17.
    df = np.broadcast_to(np.asarray(df, dtype=float), grid.shape)
    df_tol = 1e-10 * max(1.0, float(np.max(np.abs(df))))
    if df[0] < -df_tol or np.min(df[1:]) <= 0.0:
        bad = grid[0] if df[0] < -df_tol else grid[1 + int(np.argmin(df[1:]))]
        raise MetricError(f"f'(r) <= 0 at r = {bad:.6g}: coordinate spheres do not foliate")
    warnings = []
    tau = decay_order(radial)
    if tau <= 0.5:
        warnings.append(f"decay order tau ~ {tau:.3g} <= 1/2: outside the asymptotically flat class")
    far = r_max_factor * radial.r0
    a_far = float(radial.a(r=far))
    f_far = float(radial.f(r=far)) / far
    if abs(a_far - 1.0) > 0.1:
        warnings.append(f"a(r) -> {a_far:.4g} at r = {far:.4g}, expected 1")
    if abs(f_far - 1.0) > 0.1:
        warnings.append(f"f(r)/r -> {f_far:.4g} at r = {far:.4g}, expected 1")
    return MetricDiagnostics(
        decay_tau=tau,
        min_a=float(np.min(a)),
        min_f=float(np.min(f)),
        min_df=float(np.min(df)),
        warnings=tuple(warnings),
    )
