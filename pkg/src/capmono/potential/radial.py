"""Radial capacitary potential by quadrature.

In radial symmetry the Dirichlet problem (harmonic u, u = 0 on the inner
sphere, u -> 1 at infinity) integrates in closed form:

    u(r) = C * integral_{r0}^{r} sqrt(a)/f^2 ds,
    C    = [ integral_{r0}^{infinity} sqrt(a)/f^2 ds ]^{-1},
    |grad u|(r) = C / f(r)^2.

The improper tail is handled by the substitution s = 1/r, which turns the
integrand into a bounded smooth function on (0, 1/r0] and makes the capacity
exact for rational integrands.  Two cumulative tables are kept: U(r) from the
inner boundary out (used while u <= 1/2) and the tail T(r) = (1-u)/C from
infinity in (used while u > 1/2), so that both u and 1-u are available at
full relative precision; 1-u enters the fake-distance map

    rho = (C/2) (1+u)/(1-u)

whose accuracy at rho >> C hinges on a cancellation-free 1-u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..metrics import ConformalMetric, RadialMetric, validate

__all__ = [
    "SolverError",
    "RadialPotential",
    "FakeDistance",
    "CapacityEstimates",
    "solve_radial",
    "capacity",
    "fake_distance",
    "level_radius",
    "level_value",
]


class SolverError(Exception):
    """Quadrature non-convergence or a non-integrable (parabolic) tail."""


def _gl_nodes(K: int = 20):
    x, w = np.polynomial.legendre.leggauss(K)
    return x, w


_GL_X, _GL_W = _gl_nodes(20)


def _composite_gl(fun, edges: np.ndarray) -> np.ndarray:
    """Per-segment Gauss-Legendre integrals for consecutive edge pairs."""
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = fun(pts.ravel()).reshape(pts.shape)
    return half * (vals @ _GL_W)


def _partial_gl(fun, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Vectorized GL integral over per-point intervals [lo_i, hi_i]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[..., None] + half[..., None] * _GL_X
    vals = fun(pts.ravel()).reshape(pts.shape)
    return half * (vals @ _GL_W)


def level_value(t, C: float):
    """Level of u cut by the fake-distance parameter t: (1 - C/2t)/(1 + C/2t)."""
    t = np.asarray(t, dtype=float)
    return (1.0 - C / (2.0 * t)) / (1.0 + C / (2.0 * t))


@dataclass
class RadialPotential:
    """Solved radial capacitary potential with cumulative quadrature tables."""

    metric: RadialMetric
    C: float
    tol: float
    r_nodes: np.ndarray = field(repr=False)
    U_nodes: np.ndarray = field(repr=False)
    s_nodes: np.ndarray = field(repr=False)
    T_nodes: np.ndarray = field(repr=False)
    I_tot: float
    r_half: float

    # normalization constant of the far-field expansion u = 1 - C/|x| + ...
    @property
    def k(self) -> float:
        return self.C

    @property
    def r0(self) -> float:
        return self.metric.r0

    def _w(self, r):
        m = self.metric
        return np.sqrt(m.a(r=r)) / m.f(r=r) ** 2

    def _w_tilde(self, s):
        r = 1.0 / s
        return self._w(r) / (s * s)

    def _U(self, r):
        r = np.asarray(r, dtype=float)
        idx = np.clip(np.searchsorted(self.r_nodes, r, side="right") - 1, 0, len(self.r_nodes) - 1)
        base = self.U_nodes[idx]
        return base + _partial_gl(self._w, self.r_nodes[idx], r)

    def _T(self, r):
        """Tail integral from infinity: (1 - u(r)) / C, cancellation-free."""
        r = np.asarray(r, dtype=float)
        s = 1.0 / r
        idx = np.clip(np.searchsorted(self.s_nodes, s, side="right") - 1, 0, len(self.s_nodes) - 1)
        base = self.T_nodes[idx]
        return base + _partial_gl(self._w_tilde, self.s_nodes[idx], s)

    def u(self, r):
        """Potential value, vectorized over r >= r0."""
        r = np.asarray(r, dtype=float)
        if np.any(r < self.r0 * (1.0 - 1e-12)):
            raise SolverError(f"u(r) queried below the inner boundary r0 = {self.r0}")
        r = np.maximum(r, self.r0)
        out = np.where(r <= self.r_half, self.C * self._U(np.minimum(r, self.r_half)),
                       1.0 - self.C * self._T(np.maximum(r, self.r_half)))
        return out if out.shape else float(out)

    def one_minus_u(self, r):
        r = np.asarray(r, dtype=float)
        out = self.C * self._T(np.maximum(r, self.r0))
        return out if out.shape else float(out)

    def grad_norm(self, r):
        """|grad u| = C / f(r)^2."""
        r = np.asarray(r, dtype=float)
        out = self.C / self.metric.f(r=r) ** 2
        return out if out.shape else float(out)

    def u_prime(self, r):
        """Coordinate derivative u'(r) = C sqrt(a)/f^2."""
        return self.C * self._w(np.asarray(r, dtype=float))

    def rho(self, r):
        """Euclidean fake distance (C/2)(1+u)/(1-u)."""
        r = np.asarray(r, dtype=float)
        low = r <= self.r_half
        uu = np.where(low, self.C * self._U(np.minimum(r, self.r_half)), 0.0)
        one_minus = np.where(low, 1.0 - uu, self.C * self._T(np.maximum(r, self.r_half)))
        one_plus = np.where(low, 1.0 + uu, 2.0 - one_minus)
        out = 0.5 * self.C * one_plus / one_minus
        return out if out.shape else float(out)

    def rho_prime(self, r):
        r = np.asarray(r, dtype=float)
        one_minus = np.where(r <= self.r_half, 1.0 - self.C * self._U(np.minimum(r, self.r_half)),
                             self.C * self._T(np.maximum(r, self.r_half)))
        out = self.C * self.u_prime(r) / one_minus**2
        return out if out.shape else float(out)

    def level_radius(self, t):
        """Inverse of rho: radius of the level set {rho = t}, t >= C/2.

        Bisection bracketing followed by Newton polishing, to better than
        1e-12 relative.
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < self.C / 2.0 * (1.0 - 1e-12)):
            raise SolverError(f"level parameter below C/2 = {self.C / 2.0}")
        t_arr = np.maximum(t_arr, self.C / 2.0)
        lo = np.full_like(t_arr, self.r0)
        hi = np.maximum(4.0 * t_arr, 4.0 * self.r0)
        for _ in range(200):
            mask = self.rho(hi) < t_arr
            if not np.any(mask):
                break
            hi[mask] *= 2.0
        else:
            raise SolverError("failed to bracket level radius")
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            below = self.rho(mid) < t_arr
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        r = 0.5 * (lo + hi)
        for _ in range(3):
            step = (self.rho(r) - t_arr) / self.rho_prime(r)
            r = np.clip(r - step, self.r0, None)
        return r if np.ndim(t) else float(r[0])


@dataclass(frozen=True)
class FakeDistance:
    """The reparametrization t <-> r along level sets, rho(r0) = C/2."""

    potential: RadialPotential

    @property
    def C(self) -> float:
        return self.potential.C

    def from_radius(self, r):
        return self.potential.rho(r)

    def to_radius(self, t):
        return self.potential.level_radius(t)

    def level(self, t):
        return level_value(t, self.potential.C)


def _tail_slope(w_tilde, s_ref: float) -> float:
    s1, s2 = 1e-4 * s_ref, 1e-9 * s_ref
    v1, v2 = float(w_tilde(np.array([s1]))[0]), float(w_tilde(np.array([s2]))[0])
    if not (math.isfinite(v1) and math.isfinite(v2)) or v1 <= 0 or v2 <= 0:
        return -math.inf
    return math.log(v2 / v1) / math.log(s2 / s1)


def solve_radial(metric, tol: float = 1e-12, n_segments: int = 256) -> RadialPotential:
    """Solve the radial Dirichlet problem by cumulative Gauss-Legendre tables."""
    if tol < 1e-13:
        raise SolverError(f"tolerance {tol} below the supported floor 1e-13")
    if isinstance(metric, ConformalMetric):
        metric = metric.as_radial()
    validate(metric)
    r0 = metric.r0

    def w(r):
        return np.sqrt(metric.a(r=r)) / metric.f(r=r) ** 2

    def w_tilde(s):
        r = 1.0 / s
        return w(r) / (s * s)

    slope = _tail_slope(w_tilde, 1.0 / r0)
    if slope <= -0.9:
        raise SolverError(
            f"non-integrable tail (parabolic end): integrand ~ s^{slope:.2f} as s -> 0"
        )

    r_split = 1e3 * r0
    r_nodes = np.geomspace(r0, r_split, n_segments + 1)
    U_nodes = np.concatenate([[0.0], np.cumsum(_composite_gl(w, r_nodes))])

    # tail table: s from 0 to 1/r0, linear segments (the integrand is smooth there)
    s_nodes = np.linspace(0.0, 1.0 / r0, n_segments + 1)
    T_seg = _composite_gl(w_tilde, s_nodes)
    if not np.all(np.isfinite(T_seg)):
        raise SolverError("quadrature non-convergence in the tail integral")
    T_nodes = np.concatenate([[0.0], np.cumsum(T_seg)])
    I_tot = float(T_nodes[-1])
    if not math.isfinite(I_tot) or I_tot <= 0:
        raise SolverError("total integral is not finite and positive")
    C = 1.0 / I_tot

    i_half = int(np.searchsorted(C * U_nodes, 0.5))
    r_half = float(r_nodes[min(i_half, len(r_nodes) - 1)])

    pot = RadialPotential(
        metric=metric, C=C, tol=tol,
        r_nodes=r_nodes, U_nodes=U_nodes, s_nodes=s_nodes, T_nodes=T_nodes,
        I_tot=I_tot, r_half=r_half,
    )

    # residual check: the two cumulative tables must reproduce u' f^2/sqrt(a) = C,
    # i.e. C*(U(r) + T(r)) = 1, at sample radii
    samples = np.geomspace(r0 * 1.0000001, r_split * 0.99, 9)
    resid = np.abs(C * (pot._U(samples) + pot._T(samples)) - 1.0)
    if np.max(resid) > max(50.0 * tol, 5e-13):
        raise SolverError(f"quadrature tables inconsistent: residual {np.max(resid):.3g}")
    return pot


@dataclass(frozen=True)
class CapacityEstimates:
    C_flux: float
    C_energy: float
    level_fluxes: tuple[float, ...]
    ok: bool
    max_rel_dev: float


def capacity(pot: RadialPotential, rel_tol: float = 1e-8) -> CapacityEstimates:
    """Surface-flux and Dirichlet-energy capacity with a level-set flux cross-check.

    A cross-check failure does not raise; it flags solver inaccuracy in the
    returned report.
    """
    m = pot.metric
    f0 = float(m.f(r=pot.r0))
    C_flux = pot.grad_norm(pot.r0) * (4.0 * math.pi * f0 * f0) / (4.0 * math.pi)

    # fresh energy quadrature with a different segmentation than the solver's
    def integrand(r):
        return np.sqrt(m.a(r=r)) / m.f(r=r) ** 2

    r_split = 1.7e3 * pot.r0
    edges = np.geomspace(pot.r0, r_split, 174)
    inner = float(np.sum(_composite_gl(integrand, edges)))

    def tail(s):
        r = 1.0 / s
        return integrand(r) / (s * s)

    s_edges = np.linspace(0.0, 1.0 / r_split, 98)
    outer = float(np.sum(_composite_gl(tail, s_edges)))
    C_energy = pot.C**2 * (inner + outer)

    ts = pot.C / 2.0 * np.array([1.5, 3.0, 8.0, 25.0, 120.0])
    radii = pot.level_radius(ts)
    fluxes = pot.grad_norm(radii) * 4.0 * math.pi * np.asarray(m.f(r=radii)) ** 2 / (4.0 * math.pi)
    devs = [abs(C_flux - C_energy) / pot.C]
    devs += [abs(fl - pot.C) / pot.C for fl in fluxes]
    max_dev = float(max(devs))
    return CapacityEstimates(
        C_flux=float(C_flux),
        C_energy=float(C_energy),
        level_fluxes=tuple(float(x) for x in fluxes),
        ok=bool(max_dev <= rel_tol),
        max_rel_dev=max_dev,
    )


def fake_distance(pot: RadialPotential, r):
    """rho(r) = (C/2)(1+u)/(1-u); rho(r0) = C/2."""
    return pot.rho(r)


def level_radius(pot: RadialPotential, t):
    """Radius of the level set at fake-distance parameter t."""
    return pot.level_radius(t)
