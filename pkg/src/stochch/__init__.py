"""Mixed finite element solver for the stochastic Cahn-Hilliard equation with
gradient-type multiplicative noise, plus Monte Carlo convergence studies."""
__version__ = "0.1.0"

from .assembly import Operators, VectorFieldX, assemble_operators
from .mesh import Mesh, build_uniform_mesh, prolongate
from .noise import BrownianPath, coarsen, generate_path
from .stepper import SchemeParams, Stepper, Trajectory, run_path

__all__ = [
    "BrownianPath", "Mesh", "Operators", "SchemeParams", "Stepper", "Trajectory", "VectorFieldX",
    "assemble_operators", "build_uniform_mesh", "coarsen", "generate_path", "prolongate", "run_path",
]
