"""Drift-diffusion flows, weighted transport distances, and the
functional inequalities connecting them, on a truncated 1D grid weighted
by a log-concave reference measure."""

from .action import (ActionValue, action_density, action_functional,
                     convexity_certificate, entropy_production,
                     first_moment_bound_check, moment_bound_check, recession)
from .densities import make_density
from .entropy import (CustomMobility, EntropyModel, f_and_l_psi, mccann_check,
                      psi_alpha, relative_entropy, shifted_entropy)
from .flow import FlowTrace, KFPSolver, commutation_defect, evolve
from .geodesic import (ExtrapolatedDistance, GeodesicResult, SpaceTimePath,
                       constant_speed_check, distance_to_gamma_via_flow,
                       distance_with_extrapolation, oracle_hminus1,
                       oracle_w2_quantile, path_from_flow, solve_geodesic)
from .grid import (DensityField, GammaGrid, GridMismatchError, VectorField,
                   build_grid)
from .potentials import (Potential, builtin_potentials, certify_linear_bound,
                         harmonic, make_potential, quartic_blend, soft_abs,
                         validate_convexity, yosida_approx)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
