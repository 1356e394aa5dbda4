"""Simulation-free transient-stability contingency screening.

Pipeline: parse a network document, solve the stable equilibrium, build
Lyapunov certificates from linear matrix inequalities, turn them into
algebraic lower bounds on the critical clearing time, and validate
against a built-in time-domain oracle.
"""

from .netmodel import (Bus, Line, NetworkModel, NetworkError, parse_network,
                       build_system_matrices, incidence_matrix,
                       line_selector, robust_selector)
from .equilibrium import (Equilibrium, EquilibriumError, SectorBound,
                          solve_sep, compute_beta, angle_gap,
                          pre_fault_offset)
from .lmi import (CertificateMatrices, LmiError, LmiSolveConfig, SolveResult,
                  assemble_stability_lmi, assemble_bounding_lmi,
                  assemble_schur_lmi, solve_certificate, max_gamma,
                  psd_slack)
from .lyapunov import LyapunovFunction, RegionEstimate, compute_vmin, in_region
from .cct import (CctEstimate, ScreenConfig, ScreeningReport, cct_bound,
                  procedure1, procedure2, robust_screen, screen,
                  default_gamma_grid)
from .sim import (Trajectory, StabilityVerdict, SimulationError,
                  rhs_postfault, rhs_faulton, integrate, classify,
                  run_fault_scenario, true_cct, trajectory_csv)

__version__ = "0.1.0"
