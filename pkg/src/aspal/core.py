"""Problem containers, oracle contracts and augmented Lagrangian evaluation.

All variables are flat float64 vectors. Matrix-valued problems store their
variable row-major and rely on the Frobenius inner product, which coincides
with the Euclidean one on the flattened representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import math

import numpy as np


class NumericalError(ArithmeticError):
    """Raised when an oracle produces a non-finite value."""


class OracleInconsistencyError(RuntimeError):
    """Raised when oracle output contradicts its declared contract.

    Typical causes are a gradient that does not match its function (line
    search never succeeds) or a step size driven to underflow.
    """


def _finite(value, what):
    ok = math.isfinite(value) if isinstance(value, float) else np.isfinite(value).all()
    if not ok:
        raise NumericalError(f"non-finite {what}")
    return value


@dataclass(frozen=True)
class SmoothFunction:
    """Differentiable function with optional curvature hints.

    ``m_f`` is the weak-convexity modulus and ``L_f`` the gradient Lipschitz
    constant. Solvers never rely on them; generators fill them in so that
    invariants depending on them can be checked. ``joint``, when given,
    returns ``(value, grad)`` in one pass and lets expensive oracles share
    work such as a factorization.
    """

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    m_f: Optional[float] = None
    L_f: Optional[float] = None
    joint: Optional[Callable[[np.ndarray], tuple]] = None

    def __post_init__(self):
        if self.m_f is not None and self.L_f is not None and self.m_f > self.L_f:
            raise ValueError("curvature hints must satisfy m_f <= L_f")

    def __call__(self, z):
        return self.value(z)

    def value_and_grad(self, z):
        if self.joint is not None:
            return self.joint(z)
        return self.value(z), self.grad(z)


@dataclass(frozen=True)
class ProxFunction:
    """Closed convex function given through its value and proximal map.

    ``prox(v, gamma)`` returns ``argmin_x h(x) + |x - v|^2 / (2 gamma)``.
    ``value`` may return ``inf`` outside the domain.
    """

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]
    M_h: Optional[float] = None
    D_h: Optional[float] = None
    name: str = "h"

    def __call__(self, z):
        return self.value(z)


def zero_function():
    """The function h = 0, whose prox is the identity."""
    return ProxFunction(value=lambda z: 0.0, prox=lambda v, gamma: np.array(v, dtype=float),
                        M_h=0.0, name="zero")


@dataclass(frozen=True)
class LinearMap:
    """Linear operator R^n -> R^l given by its action and adjoint."""

    apply: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    shape: tuple

    def __call__(self, z):
        return self.apply(z)

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2:
            raise ValueError("expected a 2-d array")
        return cls(apply=lambda z: M @ z, adjoint=lambda p: M.T @ p, shape=M.shape)

    @classmethod
    def identity(cls, n):
        return cls(apply=lambda z: np.array(z, dtype=float),
                   adjoint=lambda p: np.array(p, dtype=float), shape=(n, n))


@dataclass(frozen=True)
class AffineConstraint:
    """The constraint A z = b."""

    A: LinearMap
    b: np.ndarray

    def residual(self, z):
        return self.A.apply(z) - self.b

    def infeasibility(self, z):
        return self.residual(z)


@dataclass(frozen=True)
class SetConstraint:
    """The constraint A z in S, with S given by its Euclidean projection."""

    A: LinearMap
    project: Callable[[np.ndarray], np.ndarray]

    def infeasibility(self, z):
        Az = self.A.apply(z)
        return Az - self.project(Az)


@dataclass
class ProblemInstance:
    """min f(z) + h(z) subject to a linear constraint, started from ``z0``.

    ``shape`` records the natural shape of the variable (e.g. ``(n, n)`` for
    matrix problems); the solver only sees flat vectors. ``data`` holds the
    raw arrays an instance was built from, for serialization.
    """

    f: SmoothFunction
    h: ProxFunction
    constraint: object
    z0: np.ndarray
    shape: tuple = None
    metadata: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    feasible_point: Optional[np.ndarray] = None

    def __post_init__(self):
        self.z0 = np.asarray(self.z0, dtype=float).ravel()
        if self.shape is None:
            self.shape = self.z0.shape
        if not np.isfinite(self.h.value(self.z0)):
            raise ValueError("initial point is outside the domain of h")

    @property
    def A(self):
        return self.constraint.A

    @property
    def is_affine(self):
        return isinstance(self.constraint, AffineConstraint)


@dataclass(frozen=True)
class Tolerances:
    rho_hat: float
    eta_hat: float

    def __post_init__(self):
        if not (self.rho_hat > 0 and self.eta_hat > 0):
            raise ValueError("tolerances must be positive")


def _penalty_terms(z, p, c, prob):
    """Value and gradient of the multiplier and penalty part of the AL.

    Both constraint kinds are written as
    ``(c/2)|y - P(y)|^2 - |p|^2/(2c)`` with ``y = Az + p/c``, which for
    ``P = b`` expands to ``<p, Az - b> + (c/2)|Az - b|^2``. The affine branch
    uses the expanded form because it is better conditioned.
    """
    con = prob.constraint
    Az = con.A.apply(z)
    if isinstance(con, AffineConstraint):
        r = Az - con.b
        val = float(p @ r) + 0.5 * c * float(r @ r)
        dual = p + c * r
    else:
        y = Az + p / c
        d = y - con.project(y)
        val = 0.5 * c * float(d @ d) - float(p @ p) / (2.0 * c)
        dual = c * d
    return val, dual


def eval_aug_lagrangian(z, p, c, prob):
    """L_c(z, p) = f + h + <p, Az - b> + (c/2)|Az - b|^2 for an affine constraint."""
    if not isinstance(prob.constraint, AffineConstraint):
        raise TypeError("eval_aug_lagrangian needs an affine constraint")
    return _aug_lagrangian(z, p, c, prob)


def eval_aug_lagrangian_generalized(z, p, c, prob):
    """AL for A z in S: f + h - |p|^2/(2c) + (c/2) dist(Az + p/c, S)^2."""
    con = prob.constraint
    if isinstance(con, AffineConstraint):
        con = SetConstraint(con.A, lambda y, b=con.b: np.broadcast_to(b, y.shape).copy())
    z = np.asarray(z, dtype=float)
    p = np.asarray(p, dtype=float)
    y = con.A.apply(z) + p / c
    d = y - con.project(y)
    val = prob.f.value(z) + prob.h.value(z) - float(p @ p) / (2.0 * c) + 0.5 * c * float(d @ d)
    return float(_finite(val, "augmented Lagrangian value"))


def _aug_lagrangian(z, p, c, prob):
    if c <= 0:
        raise ValueError("penalty parameter must be positive")
    z = np.asarray(z, dtype=float)
    p = np.asarray(p, dtype=float)
    pen, _ = _penalty_terms(z, p, c, prob)
    val = prob.f.value(z) + prob.h.value(z) + pen
    return float(_finite(val, "augmented Lagrangian value"))


def aug_lagrangian(z, p, c, prob):
    """AL value for whichever constraint kind ``prob`` carries."""
    return _aug_lagrangian(z, p, c, prob)


def aug_lagrangian_smooth(z, p, c, prob):
    """Value and gradient of L_c(., p) - h at z."""
    pen, dual = _penalty_terms(z, p, c, prob)
    fv, fg = prob.f.value_and_grad(z)
    val = fv + pen
    grad = fg + prob.constraint.A.adjoint(dual)
    return _finite(float(val), "smooth AL value"), _finite(grad, "smooth AL gradient")


def dual_update(z, p, c, prob):
    """Full multiplier step p + c(Az - b), or its set-constraint analogue."""
    _, dual = _penalty_terms(z, p, c, prob)
    return dual


def feasibility_residual(z, prob):
    """Vector whose norm measures infeasibility: Az - b or Az - P_S(Az)."""
    return prob.constraint.infeasibility(np.asarray(z, dtype=float))


def stationarity_residuals(z0, triple, prob):
    """Relative residuals (rho_rel, eta_rel) of a candidate triple (z, p, w).

    rho_rel = |w| / (1 + |grad f(z0)|) and
    eta_rel = |Az - b| / (1 + |Az0 - b|), with the set-distance analogue for
    set constraints.
    """
    z, _, w = triple
    rho = np.linalg.norm(w) / (1.0 + np.linalg.norm(prob.f.grad(np.asarray(z0, dtype=float))))
    eta = (np.linalg.norm(feasibility_residual(z, prob))
           / (1.0 + np.linalg.norm(feasibility_residual(z0, prob))))
    return float(rho), float(eta)
