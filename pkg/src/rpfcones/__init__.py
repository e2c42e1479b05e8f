"""Transfer operators, projective cone metrics and sequential RPF triplets for countable-branch systems."""

__version__ = "0.1.0"

from .errors import RpfConesError
from .function_space import DiscreteFunction, Grid, chebyshev_grid, cylinder_grid, interval_grid, tower_grid
from .metrics import (
    FunctionalFamily,
    LinearFunctional,
    birkhoff_contraction_bound,
    complex_cone_contains,
    delta_distance,
    hilbert_distance,
    real_cone_contains,
)
from .systems import doubling_stage, full_shift_stage, gauss_stage, geometric_tower_spec, nonlinear_three_branch_stage, tower_build
from .transfer import TransferStage, TwistWindow, compose_window, lasota_yorke_report, log_potential
from .rpf import SolverConfig, convergence_rate, rpf_residuals, solve_rpf
from .cones import LogHolderConeParams, TowerConeParams, perturbation_radius, tower_cone_params
from .statistics import gauss_spectrum_oracle, lambda_derivatives, monte_carlo_clt, pressure_samples
