"""Shared fixtures: one small electrode model reused across the suite.

The two-ring layout with 120 um pixels meshes to ~900 panels, which a
dense solve handles in well under a second; everything except the
acceptance gate runs against it.  The full calibrated layout is only
built where a check genuinely needs it, through a session-wide basis
cache so the cost is paid once.
"""

import math

import numpy as np
import pytest

from pixeltrap.analysis import MagneticField
from pixeltrap.bem import solve_basis
from pixeltrap.constants import Ca40_plus
from pixeltrap.geometry import build_pixel_layout, mesh_layout
from pixeltrap.optimizer import (
    RegularizationConfig,
    TargetSpec,
    solve_voltages,
)

SMALL_RINGS = 2
SMALL_DIAMETER = 120e-6
SMALL_GAP = 8e-6
SMALL_PANELS = 900


@pytest.fixture(scope="session")
def small_layout():
    return build_pixel_layout(SMALL_RINGS, SMALL_DIAMETER, SMALL_GAP)


@pytest.fixture(scope="session")
def small_mesh(small_layout):
    return mesh_layout(small_layout, SMALL_PANELS)


@pytest.fixture(scope="session")
def small_basis(small_mesh):
    return solve_basis(small_mesh)


@pytest.fixture(scope="session")
def b7():
    return MagneticField(7.0)


@pytest.fixture(scope="session")
def well_voltages(small_basis):
    """A 1 MHz axial well at 100 um over the small layout centre."""
    omega = 2.0 * math.pi * 1.0e6
    k = Ca40_plus.mass * omega * omega / Ca40_plus.charge
    target = TargetSpec.harmonic_well(np.array([0.0, 0.0, 1.0e-4]), k,
                                      halfwidth=15e-6)
    sol = solve_voltages(target, RegularizationConfig(lam=1e-8), small_basis,
                         free_offset=True)
    return sol.voltages


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """Session-wide basis cache shared by CLI and acceptance runs."""
    return tmp_path_factory.mktemp("basis_cache")
