"""Desk-scale numerical laboratory for the random conductance model on Z^d."""

from ._accel import HAVE_NUMBA, USE_NUMBA
from .calculus import (BondField, SpaceTimeField, VertexField, apply_generator,
                       divergence, gradient, lp, measure_m, midpoint, norm,
                       oscillation, oscillation_on)
from .environment import (ConductanceField, EnvironmentLaw, generate, load,
                          pareto_mixture_moment, restrict, save, shift,
                          trap_environment)
from .exponents import (ExponentSet, cbar, constant_C, derive_exponents,
                        g_eval, g_prime, gaussian_kernel, lambda_pq,
                        weak_harnack_constants)
from .inequalities import (appendix_property_tests, affine_cutoff,
                           caccioppoli_check, cutoff_bound,
                           log_caccioppoli_check, optimal_radial_cutoff,
                           oscillation_ratio, radial_profile_field, sobolev_probe)
from .lattice import (Bond, BondSet, LatticeBox, VertexSet, ball, bonds_within,
                      interior_boundary, sphere_bonds)
from .solvers import (BoxOperator, HeatKernelColumn, SolverConfig,
                      bessel_reference, evolve, heat_kernel, heat_kernel_ladder,
                      solve_caloric_ibvp, solve_harmonic)
from .walker import (EmpiricalKernel, PathSample, SigmaEstimate,
                     empirical_kernel, estimate_sigma, sample_path)

__version__ = "0.1.0"
