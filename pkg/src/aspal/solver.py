"""Adaptive proximal augmented Lagrangian method.

Each outer iteration approximately solves the proximal AL subproblem

    min_z  lam * L_c(z, p_{k-1}) + |z - z_{k-1}|^2 / 2

with :func:`~aspal.adapfista.adap_fista`, halving the prox stepsize ``lam``
whenever the inner solver fails or the accepted point does not decrease the
subproblem enough, and then takes a full multiplier step. The penalty ``c``
is doubled when the averaged AL decrease over the current cycle becomes too
small compared with the stationarity residuals seen in that cycle.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .adapfista import AdapFistaConfig, Interrupted, adap_fista
from .core import (OracleInconsistencyError, SmoothFunction, aug_lagrangian,
                   aug_lagrangian_smooth, dual_update, feasibility_residual)

LAMBDA_FLOOR = 1e-18
_EPS = np.finfo(float).eps

CONVERGED = "Converged"
TIME_LIMIT = "TimeLimit"
ITER_LIMIT = "IterLimit"


@dataclass(frozen=True)
class AspalConfig:
    """Solver parameters. Defaults follow the tuned implementation variant:
    sigma=0.1, mu=1/4, chi=0.5005, beta=1.25 and prox stepsize doubling."""

    sigma: float = 0.1
    chi: float = 0.5005
    beta: float = 1.25
    lambda_bar: Optional[float] = None
    c1: float = 1.0
    mu_inner: float = 0.25
    M0_initial: float = 1.0
    doubling: bool = True
    doubling_threshold: int = 75
    fixed_lambda: Optional[float] = None
    time_limit: float = math.inf
    max_outer_iters: int = 100_000
    lambda_max: float = 1e12
    relative: bool = True
    inner_max_iters: int = 10**6
    roundoff_slack: bool = True

    def __post_init__(self):
        if not 0 < self.sigma < 0.5:
            raise ValueError("sigma must lie in (0, 1/2)")
        if not 0 < self.chi < 1:
            raise ValueError("chi must lie in (0, 1)")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")
        if not self.mu_inner > 0:
            raise ValueError("mu_inner must be positive")
        if self.M0_initial < 1:
            raise ValueError("M0_initial must be at least 1")
        if self.lambda_bar is not None and not self.lambda_bar > 0:
            raise ValueError("lambda_bar must be positive")
        if self.fixed_lambda is not None and not self.fixed_lambda > 0:
            raise ValueError("fixed_lambda must be positive")

    @classmethod
    def theory(cls, **kw):
        """Parameters of the analysed method: mu=1/2 and no stepsize doubling."""
        kw.setdefault("mu_inner", 0.5)
        kw.setdefault("doubling", False)
        return cls(**kw)

    @property
    def C_sigma(self):
        return c_sigma(self.sigma)

    def initial_lambda(self):
        if self.fixed_lambda is not None:
            return self.fixed_lambda
        if self.lambda_bar is None:
            raise ValueError("lambda_bar must be supplied (no default without m_f)")
        return self.lambda_bar

    @property
    def doubling_active(self):
        return self.doubling and self.fixed_lambda is None


def c_sigma(sigma):
    return 2.0 * (1.0 - sigma) ** 2 / (1.0 - 2.0 * sigma)


@dataclass
class AspalState:
    k: int
    z: np.ndarray
    p: np.ndarray
    lam: float
    c: float
    k_hat: int = 1
    cycle: int = 1
    M0: float = 1.0
    anchor_al: Optional[float] = None
    sum_lam: float = 0.0
    sum_lam_w2: float = 0.0
    outer_iters: int = 0
    acg_iters: int = 0
    resolvents: int = 0


@dataclass
class OuterStep:
    z: np.ndarray
    u: np.ndarray
    w: np.ndarray
    p: np.ndarray
    lam: float
    halvings: int
    acg_iters: int
    resolvents: int
    last_call_iters: int
    L_last: float


@dataclass
class SolutionCertificate:
    z: np.ndarray
    p: np.ndarray
    w: np.ndarray
    rho_rel: float
    eta_rel: float
    outer_iters: int
    acg_iters: int
    resolvents: int
    runtime: float
    status: str
    lam: float = math.nan
    c: float = math.nan
    trace: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == CONVERGED


def build_subproblem(z_prev, p_prev, lam, c, prob):
    """Smooth and nonsmooth parts of the prox AL subproblem.

    psi_s(u) = lam * (L_c(u, p_prev) - h(u)) + |u - z_prev|^2 / 2 and
    psi_n = lam * h.
    """
    if not (lam > 0 and c > 0):
        raise ValueError("lam and c must be positive")
    z_prev = np.asarray(z_prev, dtype=float)
    # the inner solver asks for value and gradient at the same point in
    # turn, so the last joint evaluation is kept
    last = {}

    def joint(u):
        if "u" in last and (last["ref"] is u or np.array_equal(last["u"], u)):
            return last["vg"]
        v, g = aug_lagrangian_smooth(u, p_prev, c, prob)
        d = u - z_prev
        vg = (lam * v + 0.5 * float(d @ d), lam * g + d)
        last["ref"], last["u"], last["vg"] = u, u.copy(), vg
        return vg

    def value(u):
        return joint(u)[0]

    def grad(u):
        return joint(u)[1]

    h = prob.h
    psi_s = SmoothFunction(value=value, grad=grad, joint=joint)
    psi_n = replace(h, value=lambda u: lam * h.value(u),
                    prox=lambda v, gamma: h.prox(v, lam * gamma))
    return psi_s, psi_n


def _descent_terms(z_prev, z, u, lam, c, p, prob):
    lhs_prev = lam * aug_lagrangian(z_prev, p, c, prob)
    d = z - z_prev
    lhs_new = lam * aug_lagrangian(z, p, c, prob) + 0.5 * float(d @ d)
    rhs = float(u @ (z_prev - z))
    return lhs_prev - lhs_new, rhs, abs(lhs_prev) + abs(lhs_new)


def descent_check(z_prev, z, u, lam, c, p, prob, slack=0.0):
    """lam L_c(z_prev, p) - [lam L_c(z, p) + |z - z_prev|^2/2] >= <u, z_prev - z>.

    ``slack`` is an absolute allowance subtracted from the right-hand side.
    """
    gap, rhs, _ = _descent_terms(z_prev, z, u, lam, c, p, prob)
    return gap >= rhs - slack


def outer_step(state, prob, cfg, should_stop=None):
    """Steps 1-2: call the inner solver, halving lam until a point is accepted."""
    lam = state.lam
    halvings = acg = res = 0
    L0 = max(state.M0, 1.0)
    if L0 <= cfg.mu_inner:
        L0 = 2.0 * cfg.mu_inner
    inner_cfg = AdapFistaConfig(mu=cfg.mu_inner, L0=L0, chi=cfg.chi, beta=cfg.beta,
                                sigma=cfg.sigma, max_iters=cfg.inner_max_iters)
    while True:
        psi_s, psi_n = build_subproblem(state.z, state.p, lam, state.c, prob)
        out = adap_fista(psi_s, psi_n, state.z, inner_cfg, should_stop=should_stop)
        acg += out.iterations
        res += out.resolvents
        if out.success:
            gap, rhs, scale = _descent_terms(state.z, out.y, out.u, lam, state.c, state.p, prob)
            slack = 64 * _EPS * scale if cfg.roundoff_slack else 0.0
            if gap >= rhs - slack:
                break
        lam *= 0.5
        halvings += 1
        if lam < LAMBDA_FLOOR:
            raise OracleInconsistencyError("prox stepsize underflow")

    z, u = out.y, out.u
    w = (u + state.z - z) / lam
    p = dual_update(z, state.p, state.c, prob)
    return OuterStep(z=z, u=u, w=w, p=p, lam=lam, halvings=halvings, acg_iters=acg,
                     resolvents=res, last_call_iters=out.iterations, L_last=out.L)


def delta_k_test(state, al_current, p_norm, rho_hat, C_sigma):
    """Averaged AL decrease over the current cycle and the doubling decision.

    Returns ``(delta, double)``; ``delta`` is None when the cycle has only one
    index so far.
    """
    if state.k < state.k_hat + 1:
        return None, False
    num = state.anchor_al - al_current - p_norm ** 2 / (2.0 * state.c)
    delta = num / state.sum_lam
    bound = max(state.sum_lam_w2 / (2.0 * C_sigma * state.sum_lam),
                rho_hat ** 2 / (2.0 * C_sigma))
    return delta, delta <= bound


def ratio_report(times_a, times_b):
    """Average of per-instance runtime ratios a_i / r_i."""
    if len(times_a) == 0:
        raise ValueError("empty runtime lists")
    if len(times_a) != len(times_b):
        raise ValueError("runtime lists differ in length")
    a = np.asarray(times_a, dtype=float)
    r = np.asarray(times_b, dtype=float)
    if np.any(a <= 0) or np.any(r <= 0):
        raise ValueError("runtimes must be positive")
    return float(np.mean(a / r))


def solve(prob, tol, cfg=None, callback: Optional[Callable[[dict], None]] = None):
    """Find an approximate stationary triple (z, p, w) of ``prob``.

    Parameters
    ----------
    prob : ProblemInstance
    tol : Tolerances
        Stationarity and feasibility tolerances, relative unless
        ``cfg.relative`` is false.
    cfg : AspalConfig
    callback : callable, optional
        Called synchronously with a header dict and then one dict per outer
        iteration; the same dicts are kept in ``certificate.trace``.

    Returns
    -------
    SolutionCertificate
    """
    cfg = cfg or AspalConfig()
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_limit

    def out_of_time():
        return time.perf_counter() > deadline

    z0 = prob.z0.copy()
    l = prob.A.shape[0]
    state = AspalState(k=1, z=z0, p=np.zeros(l), lam=cfg.initial_lambda(), c=cfg.c1,
                       M0=cfg.M0_initial)
    grad0 = float(np.linalg.norm(prob.f.grad(z0)))
    feas0 = float(np.linalg.norm(feasibility_residual(z0, prob)))
    rho_scale = 1.0 + grad0 if cfg.relative else 1.0
    eta_scale = 1.0 + feas0 if cfg.relative else 1.0
    rho_test = tol.rho_hat * rho_scale
    C_sig = cfg.C_sigma
    lam_bar = cfg.initial_lambda()

    trace = []
    header = {"type": "header", "c1": cfg.c1, "lambda_bar": lam_bar, "sigma": cfg.sigma,
              "C_sigma": C_sig, "rho_test": rho_test, "rho_hat": tol.rho_hat,
              "eta_hat": tol.eta_hat, "affine": prob.is_affine,
              "doubling": cfg.doubling_active, "m_f": prob.f.m_f,
              "relative": cfg.relative}
    trace.append(header)
    if callback is not None:
        callback(header)

    w = np.full_like(z0, np.nan)
    rho_rel = eta_rel = math.inf
    status = ITER_LIMIT
    try:
        while state.k <= cfg.max_outer_iters:
            if out_of_time():
                status = TIME_LIMIT
                break
            p_prev = state.p
            step = outer_step(state, prob, cfg, should_stop=out_of_time)
            state.outer_iters += 1
            state.acg_iters += step.acg_iters
            state.resolvents += step.resolvents

            al_prev_mult = aug_lagrangian(step.z, p_prev, state.c, prob)
            al_new = aug_lagrangian(step.z, step.p, state.c, prob)
            if state.k == state.k_hat:
                state.anchor_al = al_prev_mult
                state.sum_lam = state.sum_lam_w2 = 0.0
            else:
                state.sum_lam += step.lam
                state.sum_lam_w2 += step.lam * float(step.w @ step.w)

            w = step.w
            w_norm = float(np.linalg.norm(w))
            feas = float(np.linalg.norm(feasibility_residual(step.z, prob)))
            rho_rel = w_norm / rho_scale
            eta_rel = feas / eta_scale
            converged = rho_rel <= tol.rho_hat and eta_rel <= tol.eta_hat
            p_norm = float(np.linalg.norm(step.p))
            delta, double = (None, False) if converged else delta_k_test(
                state, al_new, p_norm, rho_test, C_sig)

            rec = {"type": "iter", "k": state.k, "lambda": step.lam, "c": state.c,
                   "k_hat": state.k_hat, "w_norm": w_norm, "feas_norm": feas,
                   "acg_iters": step.acg_iters, "resolvents": step.resolvents,
                   "al_value": al_new, "al_prev_multiplier": al_prev_mult,
                   "dp_norm": float(np.linalg.norm(step.p - p_prev)), "p_norm": p_norm,
                   "u_norm": float(np.linalg.norm(step.u)),
                   "dz_norm": float(np.linalg.norm(step.z - state.z)),
                   "lam_w_norm": float(np.linalg.norm(step.lam * w)),
                   "halvings": step.halvings, "delta": delta, "doubled": bool(double),
                   "rho_rel": rho_rel, "eta_rel": eta_rel, "L_last": step.L_last,
                   "total_acg_iters": state.acg_iters, "total_resolvents": state.resolvents,
                   "elapsed": time.perf_counter() - t0}
            trace.append(rec)
            if callback is not None:
                callback(rec)

            state.z, state.p, state.lam = step.z, step.p, step.lam
            if converged:
                status = CONVERGED
                break
            if double:
                state.c *= 2.0
                state.k_hat = state.k + 1
                state.cycle += 1
            if (cfg.doubling_active and step.halvings == 0
                    and step.last_call_iters <= cfg.doubling_threshold):
                state.lam = min(2.0 * state.lam, cfg.lambda_max)
            state.M0 = max(1.0, step.L_last)
            state.k += 1
    except Interrupted:
        status = TIME_LIMIT

    return SolutionCertificate(z=state.z, p=state.p, w=w, rho_rel=rho_rel, eta_rel=eta_rel,
                               outer_iters=state.outer_iters, acg_iters=state.acg_iters,
                               resolvents=state.resolvents,
                               runtime=time.perf_counter() - t0, status=status,
                               lam=state.lam, c=state.c, trace=trace)


def certificate_row(cert):
    """Scalar summary of a certificate, suitable for tables."""
    d = asdict(cert)
    for key in ("z", "p", "w", "trace"):
        d.pop(key)
    return d
