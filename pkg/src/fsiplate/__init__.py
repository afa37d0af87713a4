"""Compressible viscous fluid coupled to an elastic plate on a moving ALE grid."""
from .errors import FsiError, ValidationError
from .geometry_ale import Grid, PlateField, ScalarField, VectorField
from .fluid import FluidParams, FluidState
from .plate import PlateModel, PlateState
from .coupling import CoupledState, InitialData, SchemeConfig, run, step

__version__ = "0.1.0"
