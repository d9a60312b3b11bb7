"""Mixed diffusion/transport operators on metric graphs.

Boundary conditions are given by an orthogonal projector P and an operator L
on the boundary space; the package checks them, computes point spectra from
secular determinants, applies the resolvent through its Green's kernel,
time-steps the generated semigroup and handles a boundary-delay model.
"""

from .boundary import BoundaryConditions, DissipativityReport, presets, report, validate
from .errors import MixGraphError
from .graph import BoundaryVector, EdgeFunction, MetricGraph, cotrace, norms, trace
from .spectral import EigenvalueRecord, SecularSystem, find_eigenvalues
from .resolvent import GreenKernel, apply_resolvent, assemble_kernel, kernel_eval
from .evolution import DiscreteOperator, Trajectory, assemble, evolve, laplace_evolve, step
from .delay import DelayedProblem, build_bdprime, compare_bd_bdprime, solve_bd_direct

__all__ = [
    "BoundaryConditions",
    "BoundaryVector",
    "DelayedProblem",
    "DiscreteOperator",
    "DissipativityReport",
    "EdgeFunction",
    "EigenvalueRecord",
    "GreenKernel",
    "MetricGraph",
    "MixGraphError",
    "SecularSystem",
    "Trajectory",
    "apply_resolvent",
    "assemble",
    "assemble_kernel",
    "build_bdprime",
    "compare_bd_bdprime",
    "cotrace",
    "evolve",
    "find_eigenvalues",
    "kernel_eval",
    "laplace_evolve",
    "norms",
    "presets",
    "report",
    "solve_bd_direct",
    "step",
    "trace",
    "validate",
]
