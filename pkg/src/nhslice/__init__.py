"""nhslice: energy-consistent nonhydrostatic dynamical core on a periodic
vertical slice.

Lorenz-staggered hybrid mass coordinate in the vertical, degree-3
collocated spectral elements in the horizontal, HEVI IMEX time stepping
with per-column Newton solves, and a complete energy-audit subsystem.
"""

__version__ = "0.1.0"

from . import energy, hops, model, remap, timeint, vcoord, vops  # noqa: F401
from .model import ModelConfig, PrognosticState, SliceModel  # noqa: F401
from .vcoord import DRY_AIR, PhysicalConstants  # noqa: F401
