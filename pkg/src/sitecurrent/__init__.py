"""Site-resolved current measurement and bath-driven transport in small Bose-Hubbard lattices."""

__version__ = "0.1.0"

from .dynamics import IntegratorConfig, QuantumState, evolve
from .fockspace import BasisIndex, ModeSpec, lattice_basis
from .measurement import CurrentStatistics, beamsplitter_protocol, current_operator
from .model import BathSpec, DriveSchedule, LatticeSpec, PiecewiseLinear, mhz, to_mhz

__all__ = [
    "BasisIndex",
    "BathSpec",
    "CurrentStatistics",
    "DriveSchedule",
    "IntegratorConfig",
    "LatticeSpec",
    "ModeSpec",
    "PiecewiseLinear",
    "QuantumState",
    "beamsplitter_protocol",
    "current_operator",
    "evolve",
    "lattice_basis",
    "mhz",
    "to_mhz",
]
