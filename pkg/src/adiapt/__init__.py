"""Adiabatic perturbation theory for two-component quantum systems.

The package builds first- and second-order effective equations for one
adiabatic level of a fast subsystem coupled to a slow coordinate, solves
them in a basis, and compares them with the full coupled problem on a
two-level Morse diatomic and the linear E x e Jahn-Teller model.
"""

from .adiabatic import AdiabaticData, build_adiabatic, build_polar_adiabatic
from .effective_solver import (
    EffectiveProblem,
    SpectrumResult,
    assemble_first_order,
    assemble_second_order,
    solve_effective,
)
from .exact_solver import CoupledBasis, CoupledState, assemble_exact, expectation
from .jt_analytic import JTQuantumNumbers, analytic_energy
from .models import JahnTellerModel, MorseModel
from .reconstruction import G1Operator, build_g1, reconstruct

__version__ = "0.1.0"

__all__ = [
    "AdiabaticData",
    "build_adiabatic",
    "build_polar_adiabatic",
    "EffectiveProblem",
    "SpectrumResult",
    "assemble_first_order",
    "assemble_second_order",
    "solve_effective",
    "CoupledBasis",
    "CoupledState",
    "assemble_exact",
    "expectation",
    "JTQuantumNumbers",
    "analytic_energy",
    "JahnTellerModel",
    "MorseModel",
    "G1Operator",
    "build_g1",
    "reconstruct",
]
