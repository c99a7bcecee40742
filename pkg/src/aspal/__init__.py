"""Adaptive proximal augmented Lagrangian solver for linearly constrained
smooth nonconvex composite optimization."""

from .adapfista import AdapFistaConfig, AdapFistaResult, adap_fista
from .core import (AffineConstraint, LinearMap, ProblemInstance, ProxFunction,
                   SetConstraint, SmoothFunction, Tolerances, eval_aug_lagrangian,
                   eval_aug_lagrangian_generalized, stationarity_residuals)
from .kernels import BACKEND
from .solver import AspalConfig, SolutionCertificate, ratio_report, solve

__version__ = "0.1.0"
