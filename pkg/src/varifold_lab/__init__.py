"""Numerical laboratory for integral 2-varifolds given as weighted triangle meshes."""
from .errors import *  # noqa: F401,F403
from .mesh import (DiscreteVarifold, ball_mass, ball_masses, build, diameter, normalize_mass,
                   total_mass)
from .zoo import ZooSpec, analytic_reference, generate

__version__ = "0.1.0"
