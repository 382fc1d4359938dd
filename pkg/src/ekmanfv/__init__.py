"""1D turbulent Ekman column with a finite-volume spline discretization
whose first-cell treatment follows Monin-Obukhov surface-layer theory."""

__version__ = "0.1.0"

from .grid import VerticalGrid, build_stretched, build_uniform, load_levels, refine
from .surface import MOParameters, SchemeKind, SurfaceState
from .dynamics import ColumnState, SimulationConfig, integrate, step

__all__ = [
    "VerticalGrid", "build_uniform", "build_stretched", "load_levels", "refine",
    "MOParameters", "SchemeKind", "SurfaceState",
    "ColumnState", "SimulationConfig", "integrate", "step",
    "__version__",
]
