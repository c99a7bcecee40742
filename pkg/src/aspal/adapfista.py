"""Adaptive accelerated composite gradient method for possibly nonconvex
smooth-plus-convex problems.

Given ``psi = psi_s + psi_n`` with ``psi_s`` smooth (maybe nonconvex) and
``psi_n`` convex with a cheap prox, :func:`adap_fista` searches for a pair
``(y, u)`` with ``u in grad psi_s(y) + d psi_n(y)`` and
``|u| <= sigma |y - x0|``. It runs an accelerated scheme tuned to a
presumed strong-convexity modulus ``mu`` and a backtracked Lipschitz
estimate; if the iterates behave in a way that cannot happen for a
``mu``-strongly convex ``psi_s`` it stops with a failure instead of wasting
iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import OracleInconsistencyError

L_CAP = 1e18
ROUNDOFF = 8 * np.finfo(float).eps
FIXED_POINT_TOL = 64 * np.finfo(float).eps
VALUE_NOISE = 1024 * np.finfo(float).eps


class SafeguardExhausted(RuntimeError):
    """The iteration safeguard ran out before success or failure was reached."""


class Interrupted(RuntimeError):
    """A cooperative stop request (e.g. a time limit) was honoured."""


@dataclass(frozen=True)
class AdapFistaConfig:
    mu: float = 0.25
    L0: float = 1.0
    chi: float = 0.5005
    beta: float = 1.25
    sigma: float = 0.1
    max_iters: int = 10**6

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.L0 > self.mu:
            raise ValueError("L0 must exceed mu")
        if not 0 < self.chi < 1:
            raise ValueError("chi must lie in (0, 1)")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass
class AdapFistaState:
    x: np.ndarray
    y: np.ndarray
    A: float = 0.0
    tau: float = 1.0
    L: float = 1.0
    j: int = 0
    resolvents: int = 0


@dataclass
class AdapFistaResult:
    """Outcome of one call. ``y``/``u`` are only meaningful on success."""

    success: bool
    y: Optional[np.ndarray]
    u: Optional[np.ndarray]
    L: float
    iterations: int
    resolvents: int
    history: list = field(default_factory=list)


def step_coefficient(tau, A, L, mu):
    """Largest root ``a`` of ``(L - mu) a^2 = tau (A + a)``."""
    if not L > mu:
        raise ValueError("step_coefficient needs L > mu")
    Lm = L - mu
    return (tau + math.sqrt(tau * tau + 4.0 * tau * A * Lm)) / (2.0 * Lm)


def composite_prox_step(x_tilde, L, psi_s, psi_n, grad=None):
    """Minimizer of the linearization of psi_s at x_tilde plus psi_n plus
    (L/2)|. - x_tilde|^2. Costs one resolvent evaluation."""
    if not L > 0:
        raise ValueError("L must be positive")
    g = psi_s.grad(x_tilde) if grad is None else grad
    return psi_n.prox(x_tilde - g / L, 1.0 / L)


def _upper_model_holds(y, x_tilde, fx, gx, L, chi, psi_s):
    d = y - x_tilde
    curv = 0.5 * (1.0 - chi) * L * float(d @ d)
    gd = float(gx @ d)
    fy = psi_s.value(y)
    if curv + abs(gd) > VALUE_NOISE * (1.0 + abs(fx) + abs(fy)):
        # allowance for cancellation in fy - fx
        slack = ROUNDOFF * (abs(fx) + abs(fy))
        return fx + gd + curv + slack >= fy
    # the model terms sit below the round-off of the function values, so
    # fy - fx carries no information; use the gradient form of the same
    # curvature condition, which is exact for quadratics
    gdiff = psi_s.grad(y) - gx
    return 0.5 * float(gdiff @ d) <= curv + ROUNDOFF * np.linalg.norm(gdiff) * np.linalg.norm(d)


def _is_fixed_point(y, x, L, g):
    # snapping y to x moves the implied residual by L |y - x|, so the
    # tolerance is on that quantity rather than on the distance itself
    return L * np.linalg.norm(y - x) <= FIXED_POINT_TOL * (1.0 + np.linalg.norm(g))


def lipschitz_backtrack(x_tilde, L_in, psi_s, psi_n, chi, beta):
    """Increase L geometrically from ``L_in`` until the prox step satisfies the
    upper quadratic model with slack ``(1 - chi)``.

    Returns ``(y, L_out, resolvents)``. Here x_tilde is held fixed; the
    solver itself re-forms x_tilde for every trial L (see :func:`adap_fista`).
    """
    if not L_in > 0:
        raise ValueError("L_in must be positive")
    fx = psi_s.value(x_tilde)
    gx = psi_s.grad(x_tilde)
    L = L_in
    count = 0
    while True:
        y = composite_prox_step(x_tilde, L, psi_s, psi_n, grad=gx)
        count += 1
        if _upper_model_holds(y, x_tilde, fx, gx, L, chi, psi_s):
            return y, L, count
        L *= beta
        if L > L_CAP:
            raise OracleInconsistencyError("Lipschitz estimate exceeded cap; gradient suspect")


def momentum_update(state, y_next, x_tilde, L_next, a, mu):
    """Accumulate ``a`` into (A, tau) and form the next auxiliary point x."""
    tau_next = state.tau + a * mu
    s = (L_next - mu) * (x_tilde - y_next)
    x_next = (mu * a * y_next + state.tau * state.x - a * s) / tau_next
    return AdapFistaState(x=x_next, y=y_next, A=state.A + a, tau=tau_next, L=L_next,
                          j=state.j + 1, resolvents=state.resolvents)


def failure_test(y_next, x0, A_next, L_next, x_tilde, chi):
    """True when the iteration may continue (ties continue)."""
    dy = y_next - x0
    dt = y_next - x_tilde
    return dy @ dy >= chi * A_next * L_next * (dt @ dt)


def residual(y_next, x_tilde, psi_s, L_next, grad_x_tilde=None, grad_y=None):
    """u = grad psi_s(y) - grad psi_s(x_tilde) + L (x_tilde - y)."""
    gy = psi_s.grad(y_next) if grad_y is None else grad_y
    gx = psi_s.grad(x_tilde) if grad_x_tilde is None else grad_x_tilde
    return gy - gx + L_next * (x_tilde - y_next)


def adap_fista(psi_s, psi_n, x0, cfg=None, record=False,
               should_stop: Optional[Callable[[], bool]] = None, check_every=256):
    """Run the adaptive accelerated method from ``x0``.

    Parameters
    ----------
    psi_s : SmoothFunction
    psi_n : ProxFunction
    x0 : ndarray
        Starting point, inside the domain of ``psi_n``.
    cfg : AdapFistaConfig
    record : bool
        If true, ``result.history`` holds one dict per iteration with the
        scalars of the recursion (``tau``, ``A``, ``a``, ``L``).
    should_stop : callable, optional
        Polled every ``check_every`` iterations; a true return raises
        :class:`Interrupted`.

    Returns
    -------
    AdapFistaResult
    """
    cfg = cfg or AdapFistaConfig()
    mu, chi, beta, sigma = cfg.mu, cfg.chi, cfg.beta, cfg.sigma
    x0 = np.asarray(x0, dtype=float)
    state = AdapFistaState(x=x0.copy(), y=x0.copy(), L=cfg.L0)
    history = []
    resolvents = 0

    for j in range(cfg.max_iters):
        if should_stop is not None and j % check_every == check_every - 1 and should_stop():
            raise Interrupted("stop requested")
        L = state.L
        while True:
            a = step_coefficient(state.tau, state.A, L, mu)
            if state.A == 0.0:
                # the convex combination is x itself; dividing a*x by a can
                # move it by an ulp, which a stationary start cannot absorb
                x_tilde = state.x.copy()
            else:
                x_tilde = (state.A * state.y + a * state.x) / (state.A + a)
            fx = psi_s.value(x_tilde)
            gx = psi_s.grad(x_tilde)
            y = composite_prox_step(x_tilde, L, psi_s, psi_n, grad=gx)
            resolvents += 1
            if _is_fixed_point(y, x_tilde, L, gx):
                # x_tilde is stationary to working precision; keep it exactly
                y = x_tilde.copy()
            if _upper_model_holds(y, x_tilde, fx, gx, L, chi, psi_s):
                break
            L *= beta
            if L > L_CAP:
                raise OracleInconsistencyError(
                    "Lipschitz estimate exceeded cap; gradient suspect")

        tau_prev, A_prev = state.tau, state.A
        state = momentum_update(state, y, x_tilde, L, a, mu)
        if record:
            history.append({"j": j, "tau_prev": tau_prev, "A_prev": A_prev, "a": a,
                            "A": state.A, "tau": state.tau, "L": L, "mu": mu})

        if not failure_test(y, x0, state.A, L, x_tilde, chi):
            return AdapFistaResult(False, None, None, L, j + 1, resolvents, history)

        u = residual(y, x_tilde, psi_s, L, grad_x_tilde=gx)
        if np.linalg.norm(u) <= sigma * np.linalg.norm(y - x0):
            return AdapFistaResult(True, y, u, L, j + 1, resolvents, history)

    raise SafeguardExhausted(f"no decision after {cfg.max_iters} iterations")
