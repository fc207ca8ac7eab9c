"""Constrained energy problems for generalized condensers with Riesz kernels."""
from __future__ import annotations

__version__ = "0.1.0"

from .balayage import (BalayageResult, Sweeper, balayage_closed_form, balayage_numeric, mass_diagnostic,
                       sweep_measure)
from .clouds import PointCloud
from .energy import EnergyReport, green_energy, mutual_energy, potential, standard_energy
from .equilibrium import EquilibriumResult, green_equilibrium, riesz_capacity, riesz_equilibrium
from .errors import CondenserError
from .experiments import (continuity_experiment, scaled_constraint_family, unsolvability_demo,
                          weak_vs_standard_refinement_study)
from .geometry import DomainGeometry, Profile, rotation_body_slice
from .green import green_matrix
from .kernels import DiagonalPolicy, KernelSpec, assemble_kernel_matrix, riesz_kernel_eval
from .measures import Constraint, DiscreteMeasure, SignedCondenserMeasure
from .sampling import sample_set
from .solver import (CondenserProblem, SolveReport, assemble_condenser_solution, solve_green_gauss,
                     support_identity_check, verify_optimality)
from .thinness import ThinnessVerdict, wiener_thinness_diagnostic
from .weak import weak_energy

__all__ = [
    "BalayageResult", "CondenserError", "CondenserProblem", "Constraint", "DiagonalPolicy",
    "DiscreteMeasure", "DomainGeometry", "EnergyReport", "EquilibriumResult", "KernelSpec", "PointCloud",
    "Profile", "SignedCondenserMeasure", "SolveReport", "Sweeper", "ThinnessVerdict",
    "assemble_condenser_solution", "assemble_kernel_matrix", "balayage_closed_form", "balayage_numeric",
    "continuity_experiment", "green_energy", "green_equilibrium", "green_matrix", "mass_diagnostic",
    "mutual_energy", "potential", "riesz_capacity", "riesz_equilibrium", "riesz_kernel_eval",
    "rotation_body_slice", "sample_set", "scaled_constraint_family", "solve_green_gauss",
    "standard_energy", "support_identity_check", "sweep_measure", "unsolvability_demo",
    "verify_optimality", "weak_energy", "weak_vs_standard_refinement_study",
    "wiener_thinness_diagnostic",
]
