"""Shape derivatives of convex variational minima on simplicial meshes.

The package solves ``min int f(grad u) + g(u)`` with P1 elements, builds a
dual field, and evaluates the derivative of ``J = -min`` under domain
perturbations ``x -> x + eps V(x)`` through the energy-momentum tensor.
"""
__version__ = "0.1.0"

from .integrands import (AbsNorm, CustomIntegrand, CustomScalar, ExtendedReal, HingeOneMinus,
                         Linear, NonsmoothTorsion, Power, PowerNorm, Quadratic)
from .geometry import SimplicialMesh, VelocityField, deform, disk, interval, square
from .fem import P0VectorField, P1Function, dual_energy, primal_energy
from .solvers import SolverOptions, duality_gap, reconstruct_dual, solve_primal
from .shapederiv import boundary_form, minmax_form, tensor_A, volume_form

__all__ = [
    "AbsNorm", "CustomIntegrand", "CustomScalar", "ExtendedReal", "HingeOneMinus", "Linear",
    "NonsmoothTorsion", "Power", "PowerNorm", "Quadratic", "SimplicialMesh", "VelocityField",
    "deform", "disk", "interval", "square", "P0VectorField", "P1Function", "dual_energy",
    "primal_energy", "SolverOptions", "duality_gap", "reconstruct_dual", "solve_primal",
    "boundary_form", "minmax_form", "tensor_A", "volume_form",
]
