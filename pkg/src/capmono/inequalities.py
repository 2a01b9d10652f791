"""Theorem-level inequalities with margins, hypothesis feasibility, gating.

The mass-capacity comparison bounds m_ADM / C from below by the central term

    5/4 + (1/64 pi) int H^2 - (1/4 pi) int (|grad u| + H/4)^2     (over dM)

which expands in boundary moments and always equals 1 + B/(8 pi C).  Under
the boundary mean-curvature hypothesis

    H <= alpha (1 - 4 C |grad u|)   on dM,  alpha in (-1/(2C), 1/(2C)],

the central term is >= 1, giving m_ADM >= C, and the capacity is bounded by
sqrt(area(dM)/16 pi); each level set obeys area >= 4 pi t^2 (1 + C/2t)^4.

Assertions are gated: a theorem margin is enforced (a violation aborts the
run) only when the declared topology flag holds and the alpha-hypothesis is
feasible; otherwise margins are informational.  Hypothesis failure correctly
shields the theorems on the counterexample families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .functionals import ABQuantities, ab_quantities, schwarzschild_area_bound
from .levelset import LevelSetSample

__all__ = [
    "TheoremViolationError",
    "InequalityConsistencyError",
    "HypothesisReport",
    "MassCapacity",
    "GatedMargin",
    "alpha_feasible",
    "mass_capacity_margin",
    "bray_check",
    "area_capacity_margin",
    "levelset_area_margin",
    "levelset_area_margin_rel",
    "weak_condition_check",
    "weak_condition_feasible",
]

ALPHA_EPS_D = 1e-9  # |1 - 4C|grad u|| below this is treated as degenerate
ALPHA_EPS_H = 1e-9  # degenerate points then require H <= this
ASSERT_REL_TOL = 1e-8  # asserted margins must be >= -ASSERT_REL_TOL * C
WEAK_SLACK = 1e-10  # slack (times C) in the weak B >= (1 - 2 C alpha) A check


class TheoremViolationError(Exception):
    """An asserted theorem margin came out negative: the strongest self-test."""


class InequalityConsistencyError(Exception):
    """Internal moment-expansion inconsistency (central term vs 1 + B/8piC)."""


@dataclass(frozen=True)
class HypothesisReport:
    """Gating state: declared topology and mean-curvature hypothesis feasibility.

    ``assert_via_weak`` is the opt-in route that accepts the weak B/A
    inequality in place of the pointwise alpha condition.
    """

    h2_trivial: bool
    alpha_interval: tuple[float, float] | None
    weak_condition: bool | None = None
    assert_via_weak: bool = False
    notes: tuple[str, ...] = ()

    @property
    def alpha_ok(self) -> bool:
        return self.alpha_interval is not None

    @property
    def asserting(self) -> bool:
        if self.h2_trivial and self.alpha_ok:
            return True
        return self.h2_trivial and self.assert_via_weak and bool(self.weak_condition)


@dataclass(frozen=True)
class MassCapacity:
    lhs: float
    central_term: float
    margin: float


@dataclass(frozen=True)
class GatedMargin:
    margin: float
    asserted: bool
    ok: bool


def alpha_feasible(boundary_points, C: float) -> tuple[float, float] | None:
    """Intersect the pointwise constraints H_i <= alpha (1 - 4 C |grad u|_i).

    ``boundary_points`` is an iterable of (H_i, grad_i); in radial symmetry a
    single point suffices.  Returns the feasible closed interval intersected
    with (-1/(2C), 1/(2C)] (left end open by epsilon), or None if empty.
    """
    lo = -1.0 / (2.0 * C) * (1.0 - 1e-12)
    hi = 1.0 / (2.0 * C)
    for H_i, grad_i in boundary_points:
        d_i = 1.0 - 4.0 * C * grad_i
        if abs(d_i) <= ALPHA_EPS_D:
            if H_i > ALPHA_EPS_H:
                return None  # pointwise inequality demands H <= 0 when d = 0
            continue
        bound = H_i / d_i
        if d_i > 0:
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    if lo > hi:
        return None
    return (lo, hi)


def mass_capacity_margin(m_adm: float, C: float, boundary: LevelSetSample) -> MassCapacity:
    """lhs = m_ADM/C against the central term, expanded in boundary moments."""
    central = (
        5.0 / 4.0
        + boundary.IH2 / (64.0 * math.pi)
        - (boundary.I2 + boundary.IH / 2.0 + boundary.IH2 / 16.0) / (4.0 * math.pi)
    )
    ab = ab_quantities(boundary, C)
    alt = 1.0 + ab.B / (8.0 * math.pi * C)
    if abs(central - alt) > 1e-10 * max(1.0, abs(central)):
        raise InequalityConsistencyError(
            f"central term {central!r} inconsistent with 1 + B/(8 pi C) = {alt!r}"
        )
    lhs = m_adm / C
    return MassCapacity(lhs=float(lhs), central_term=float(central), margin=float(lhs - central))


def bray_check(m_adm: float, C: float, hypothesis: HypothesisReport) -> GatedMargin:
    """m_ADM >= C, asserted only under (topology and alpha-feasibility) gating."""
    margin = m_adm - C
    asserted = hypothesis.asserting
    ok = margin >= -ASSERT_REL_TOL * C
    if asserted and not ok:
        raise TheoremViolationError(
            f"mass-capacity violated with hypotheses satisfied: m_ADM - C = {margin:.6g}"
        )
    return GatedMargin(margin=float(margin), asserted=asserted, ok=bool(ok or not asserted))


def area_capacity_margin(boundary_area: float, C: float, hypothesis: HypothesisReport) -> GatedMargin:
    """sqrt(area(dM)/16 pi) >= C under the same gating as the mass bound."""
    margin = math.sqrt(boundary_area / (16.0 * math.pi)) - C
    asserted = hypothesis.asserting
    ok = margin >= -ASSERT_REL_TOL * C
    if asserted and not ok:
        raise TheoremViolationError(
            f"area-capacity violated with hypotheses satisfied: margin = {margin:.6g}"
        )
    return GatedMargin(margin=float(margin), asserted=asserted, ok=bool(ok or not asserted))


def levelset_area_margin(sample: LevelSetSample, C: float) -> float:
    """Raw margin area(Sigma_t) - 4 pi t^2 (1 + C/2t)^4 (units of area)."""
    return float(sample.area - schwarzschild_area_bound(sample.t, C))


def levelset_area_margin_rel(sample: LevelSetSample, C: float) -> float:
    """Dimensionless margin area/bound - 1; the gated form of the area bound."""
    return float(sample.area / schwarzschild_area_bound(sample.t, C) - 1.0)


def weak_condition_check(ab: ABQuantities, C: float, alpha: float) -> bool:
    """The closing-remark replacement for the pointwise hypothesis:
    B >= (1 - 2 C alpha) A, for an admissible alpha."""
    if not (-1.0 / (2.0 * C) < alpha <= 1.0 / (2.0 * C)):
        raise ValueError(f"alpha = {alpha} outside (-1/(2C), 1/(2C)]")
    return bool(ab.B >= (1.0 - 2.0 * C * alpha) * ab.A - WEAK_SLACK * C)


def weak_condition_feasible(ab: ABQuantities, C: float) -> bool:
    """True iff B >= (1 - 2 C alpha) A holds for some admissible alpha.

    The factor (1 - 2 C alpha) ranges over [0, 2) as alpha sweeps the
    admissible interval (left end open by epsilon, matching alpha_feasible).
    """
    if ab.A >= 0:
        best = 0.0  # attained at alpha = 1/(2C)
    else:
        best = (1.0 + (1.0 - 1e-12)) * ab.A
    return bool(ab.B >= best - WEAK_SLACK * C)
