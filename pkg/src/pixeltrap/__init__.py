"""Design and simulation toolkit for planar hexagonal-pixel Penning traps."""

__version__ = "0.1.0"

from .analysis import MagneticField, TrapSite, characterize_site
from .bem import BemField, ChargeBasis, solve_basis
from .constants import SPECIES, Ca40_plus, ParticleSpecies, electron
from .dynamics import ParticleState, RotatingWallDrive, Trajectory, simulate
from .errors import ComputationError, InputError, PixeltrapError
from .geometry import ElectrodeLayout, PanelMesh, build_pixel_layout, mesh_layout
from .optimizer import (
    RegularizationConfig,
    TargetSpec,
    TransportPlan,
    lateral_transport_plan,
    solve_voltages,
    vertical_transport_plan,
)
