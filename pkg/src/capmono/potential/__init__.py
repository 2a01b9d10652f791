"""Capacitary potential solvers: closed-form radial quadrature and a 3D grid mode."""

from __future__ import annotations

from .radial import (
    CapacityEstimates,
    FakeDistance,
    RadialPotential,
    SolverError,
    capacity,
    fake_distance,
    level_radius,
    level_value,
    solve_radial,
)

__all__ = [
    "CapacityEstimates",
    "FakeDistance",
    "RadialPotential",
    "SolverError",
    "capacity",
    "fake_distance",
    "level_radius",
    "level_value",
    "solve_radial",
    "GridPotential",
    "solve_grid3d",
    "capacity_grid",
]


def __getattr__(name):
    # grid mode pulls in numba; import lazily so radial-only runs stay light
    if name in ("GridPotential", "solve_grid3d", "capacity_grid"):
        from . import grid

        return getattr(grid, name)
    raise AttributeError(name)
