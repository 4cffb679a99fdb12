"""Variable-exponent Luxemburg norms and Rayleigh-quotient asymptotics on
masked planar triangulations."""

from .asymptotics import MuResult, SweepReport, SweepRow, direct_mu, sweep_j, sweep_l
from .distance_ridge import DistanceResult, detect_ridge, distance_field, eikonal_check
from .domain_grid import (DomainSpec, ScalarField, TriGrid, build_grid,
                          centroid_values, gradient, sup_norm_and_argmax)
from .errors import (ConfigError, DegenerateField, ExprSyntaxError, LuxminError,
                     NonAdmissibleExponent, UnknownIdentifier, ZeroField)
from .exponents import (ExponentField, check_subcritical, evaluate,
                        parse_exponent, print_exponent, sample_exponent)
from .infinity_operator import (ResidualStats, SmoothProbe, infinity_laplacian,
                                infinity_px_operator, limit_residual,
                                p_laplacian_divergence_fd, p_laplacian_expanded,
                                smoothed_probe)
from .modular_norms import (ModularValue, luxemburg_norm, modular,
                            sup_directional_derivative)
from .rayleigh_solver import (MinimizeResult, QuotientEval, SolverOptions,
                              el_residual, evaluate_quotient, gateaux_dK,
                              gateaux_dk, minimize_quotient)

__version__ = "0.1.0"
