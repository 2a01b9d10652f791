"""capmono: monotone-quantity audits along capacitary level sets.

Numerically instantiates two monotone quantities along the level sets of the
boundary capacitary potential of an asymptotically flat 3-manifold, audits
the mass-capacity and area-capacity inequalities with their equality cases,
and validates every computable identity against closed-form model metrics.
"""

from __future__ import annotations

from importlib import resources

from .config import ConfigError, ExperimentConfig, build_metric, parse_config, parse_config_text
from .expr import Expr, ExprDomainError, ExprError, ExprSyntaxError, parse
from .functionals import (
    F_of,
    F_prime_geometric,
    G_of,
    G_prime,
    MonotoneCurve,
    build_curve,
    divX_consistency,
    endpoint_values,
    monotonicity_audit,
    rigidity_detect,
)
from .inequalities import (
    HypothesisReport,
    TheoremViolationError,
    alpha_feasible,
    area_capacity_margin,
    bray_check,
    levelset_area_margin,
    mass_capacity_margin,
    weak_condition_check,
)
from .levelset import LevelSetSample, TriMesh, extract_isosurface, sample_radial, surface_integrals
from .metrics import (
    ConformalMetric,
    MetricError,
    RadialMetric,
    adm_mass,
    check_nonnegative_R,
    decay_order,
    flat_exterior,
    mean_curvature_sphere,
    scalar_curvature,
    schwarzschild,
)
from .pipeline import Report, run_audit, run_grid_validate, run_sweep
from .potential import RadialPotential, capacity, fake_distance, level_radius, solve_radial

__version__ = "0.1.0"


def shipped_configs() -> dict[str, str]:
    """Name -> text of the configuration files shipped with the package."""
    out = {}
    root = resources.files("capmono") / "configs"
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".cfg"):
            out[entry.name] = entry.read_text(encoding="utf-8")
    return out
