"""Weighted K-stability computations on labelled polytopes.

Extremal affine functions, Donaldson-Futaki invariants, boundary norms,
weighted Abreu curvature of symplectic potentials and the relative K-energy.
"""
from .curvature import (AffinePower, CurvatureSample, abreu_curvature, abreu_residual_norm,
                        boundary_condition_residuals, integration_by_parts_residual,
                        sample_curvature, weighted_scalar_curvature)
from .energy import (EnergyModel, EnergyValue, MinimizeOptions, MinimizeResult, k_energy,
                     k_energy_convexity_check, k_energy_gradient, minimize_k_energy)
from .errors import *  # noqa: F401,F403
from .polynomial import Polynomial
from .polytope import (AffineFunction, LabelledPolytope, build_polytope, cube, facet_measure,
                       interval, load_polytope_spec, parse_polytope_spec, square,
                       standard_simplex, validate_weight)
from .potentials import (PLConvexFunction, PotentialJet, SymplecticPotential,
                         guillemin_potential, make_pl, normalize, potential_jet)
from .quadrature import (QuadratureScheme, integrate_boundary, integrate_interior,
                         weighted_moments)
from .stability import (ExtremalAffineSolution, ScanConfig, StabilityReport, boundary_norm,
                        extremal_affine, futaki, futaki_mabuchi_form, stability_scan,
                        taming_constant)

__version__ = "0.1.0"
