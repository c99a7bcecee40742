"""Independent checks of solver output.

Nothing here looks at solver internals. Certificates are checked against the
problem oracles and traces are replayed from their logged scalars, so a bug
in the solver cannot hide behind the same bug in its checker.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

INCLUSION_TOL = 1e-8
AL_IDENTITY_TOL = 1e-9
FEASIBILITY_TOL = 1e-12
DELTA_TOL = 1e-12
# allowance for rounding in norms that are logged separately and compared
_NORM_SLACK = 1e-12

_ITER_KEYS = ("k", "lambda", "c", "k_hat", "w_norm", "feas_norm", "acg_iters",
              "al_value", "al_prev_multiplier", "dp_norm", "p_norm", "u_norm",
              "dz_norm", "lam_w_norm", "halvings", "delta", "doubled",
              "total_acg_iters", "total_resolvents")
_HEADER_KEYS = ("c1", "lambda_bar", "sigma", "C_sigma", "rho_test", "affine", "doubling")


def check_inclusion(z, p, w, prob, gamma=1.0, tol=INCLUSION_TOL):
    """Residual of ``w in grad f(z) + dh(z) + A* p``.

    Uses ``v in dh(z)  <=>  z = prox_h(z + gamma v, gamma)`` with
    ``v = w - grad f(z) - A* p``.

    Returns
    -------
    (residual, passed) : (float, bool)
        ``residual = |z - prox_h(z + gamma v, gamma)| / (1 + |z|)``.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    z = np.asarray(z, dtype=float)
    v = np.asarray(w, dtype=float) - prob.f.grad(z) - prob.A.adjoint(np.asarray(p, dtype=float))
    r = np.linalg.norm(z - prob.h.prox(z + gamma * v, gamma)) / (1.0 + np.linalg.norm(z))
    return float(r), bool(r <= tol)


def finite_diff_grad_check(f, z, step, n_dirs=10, seed=0):
    """Largest relative disagreement between ``f.grad`` and central differences.

    Along ``n_dirs`` seeded unit directions ``d`` compares
    ``(f(z + step d) - f(z - step d)) / (2 step)`` with ``<grad f(z), d>``;
    errors are scaled by ``max(1, |grad f(z)|)``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    z = np.asarray(z, dtype=float)
    g = f.grad(z)
    scale = max(1.0, float(np.linalg.norm(g)))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_dirs):
        d = rng.standard_normal(z.shape)
        d /= np.linalg.norm(d)
        fd = (f.value(z + step * d) - f.value(z - step * d)) / (2.0 * step)
        worst = max(worst, abs(fd - float(g @ d)) / scale)
    return worst


@dataclass
class Check:
    passed: bool
    max_violation: float = 0.0
    detail: str = ""


@dataclass
class VerificationReport:
    """Outcome of :func:`check_trace`; ``checks`` maps a name to a :class:`Check`.

    Checks that do not apply to the trace (for instance the AL identity for a
    set constraint) are left out rather than reported as passed.
    """

    checks: dict = field(default_factory=dict)
    rho_rel: float = math.nan
    eta_rel: float = math.nan
    inclusion_residual: float = math.nan
    cycle_lengths: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def failures(self):
        return [name for name, c in self.checks.items() if not c.passed]

    def summary(self):
        lines = []
        for name, c in self.checks.items():
            tag = "ok  " if c.passed else "FAIL"
            extra = f"  {c.detail}" if c.detail else ""
            lines.append(f"{tag} {name:<22} max violation {c.max_violation:.3e}{extra}")
        return "\n".join(lines)


def _split(trace):
    if not trace:
        raise ValueError("empty trace")
    header = trace[0]
    if header.get("type") != "header":
        raise ValueError("trace must start with a header record")
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ValueError(f"header lacks {missing}")
    iters = trace[1:]
    if not iters:
        raise ValueError("trace has no iteration records")
    for i, rec in enumerate(iters):
        if rec.get("type") != "iter":
            raise ValueError(f"record {i + 1} is not an iteration record")
        missing = [k for k in _ITER_KEYS if k not in rec]
        if missing:
            raise ValueError(f"record {i + 1} lacks {missing}")
    return header, iters


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _al_identity(iters):
    # L_c(z_k, p_k) - L_c(z_k, p_{k-1}) = |p_k - p_{k-1}|^2 / c_k
    worst = 0.0
    for r in iters:
        lhs = r["al_value"] - r["al_prev_multiplier"]
        rhs = r["dp_norm"] ** 2 / r["c"]
        scale = max(1.0, abs(r["al_value"]), abs(r["al_prev_multiplier"]))
        worst = max(worst, abs(lhs - rhs) / scale)
    return Check(worst <= AL_IDENTITY_TOL, worst)


def _feasibility_identity(iters):
    # |A z_k - b| = |p_k - p_{k-1}| / c_k; the multiplier step loses about
    # eps |p| / c absolutely, so that enters the scale
    worst = 0.0
    for r in iters:
        a, b = r["feas_norm"], r["dp_norm"] / r["c"]
        scale = max(1.0, a, b, r["p_norm"] / r["c"])
        worst = max(worst, abs(a - b) / scale)
    return Check(worst <= FEASIBILITY_TOL, worst)


def _penalty_schedule(header, iters):
    """c_k = 2^(l-1) c1 exactly, k_hat moves to k+1 after a doubling and
    nowhere else, and every completed cycle has at least two indices."""
    c1 = header["c1"]
    cycle, k_hat = 1, iters[0]["k"]
    lengths, bad_c, bad_anchor, short = [], 0, 0, 0
    for r in iters:
        if r["c"] != c1 * 2.0 ** (cycle - 1):
            bad_c += 1
        if r["k_hat"] != k_hat:
            bad_anchor += 1
        if r["doubled"]:
            length = r["k"] - k_hat + 1
            lengths.append(length)
            if length < 2:
                short += 1
            cycle += 1
            k_hat = r["k"] + 1
    checks = {
        "penalty_power_of_two": Check(bad_c == 0, float(bad_c),
                                      f"{bad_c} records off the 2^(l-1) c1 schedule"),
        "cycle_anchor": Check(bad_anchor == 0, float(bad_anchor)),
        "cycle_length": Check(short == 0, float(short), f"completed cycles {lengths}"),
    }
    return checks, lengths


def _delta_replay(header, iters):
    """Recompute the averaged AL decrease and the doubling decision."""
    C = header["C_sigma"]
    rho = header["rho_test"]
    worst, disagreements = 0.0, 0
    anchor = sum_lam = sum_lam_w2 = None
    for r in iters:
        if r["k"] == r["k_hat"]:
            anchor = r["al_prev_multiplier"]
            sum_lam = sum_lam_w2 = 0.0
            expect_delta = None
        else:
            if anchor is None:
                raise ValueError("trace does not contain the start of its first cycle")
            sum_lam += r["lambda"]
            sum_lam_w2 += r["lambda"] * r["w_norm"] ** 2
            num = anchor - r["al_value"] - r["p_norm"] ** 2 / (2.0 * r["c"])
            expect_delta = num / sum_lam
        logged = r["delta"]
        if logged is None:
            # only the first index of a cycle and the final, converged
            # iteration skip the test
            if expect_delta is not None and r is not iters[-1]:
                disagreements += 1
            if r["doubled"]:
                disagreements += 1
            continue
        if expect_delta is None:
            disagreements += 1
            continue
        worst = max(worst, _rel(logged, expect_delta))
        bound = max(sum_lam_w2 / (2.0 * C * sum_lam), rho ** 2 / (2.0 * C))
        fire = expect_delta <= bound
        # a decision exactly at the threshold may go either way under rounding
        if fire != bool(r["doubled"]) and _rel(expect_delta, bound) > DELTA_TOL:
            disagreements += 1
    return {
        "delta_recompute": Check(worst <= DELTA_TOL, worst),
        "doubling_decision": Check(disagreements == 0, float(disagreements),
                                   f"{disagreements} disagreeing records"),
    }


def _stepsize_floor(header, iters, m_f):
    lam_bar = header["lambda_bar"]
    floor = min(lam_bar, 1.0 / (4.0 * m_f))
    low = min(r["lambda"] for r in iters)
    viol = max(0.0, (floor - low) / floor)
    late_halvings = 0
    lam_in = lam_bar
    for r in iters:
        if lam_in <= 1.0 / (2.0 * m_f) and r["halvings"] > 0:
            late_halvings += 1
        lam_in = r["lambda"]
    return {
        "lambda_floor": Check(low >= floor, viol, f"min lambda {low:.4g}, floor {floor:.4g}"),
        "no_late_halving": Check(late_halvings == 0, float(late_halvings)),
    }


def _inner_acceptance(header, iters):
    sigma = header["sigma"]
    worst_u = worst_w = 0.0
    for r in iters:
        dz = r["dz_norm"]
        allow = _NORM_SLACK * (1.0 + dz)
        worst_u = max(worst_u, r["u_norm"] - sigma * dz - allow)
        worst_w = max(worst_w, r["lam_w_norm"] - (1.0 + sigma) * dz - allow)
    return {
        "inner_residual_bound": Check(worst_u <= 0, max(worst_u, 0.0)),
        "w_bound": Check(worst_w <= 0, max(worst_w, 0.0)),
    }


def _counters(iters):
    bad = 0
    acg = res = 0
    for prev, r in zip([None] + iters[:-1], iters):
        acg += r["acg_iters"]
        res += r.get("resolvents", 0)
        if r["total_acg_iters"] != acg or r["total_resolvents"] != res:
            bad += 1
        # every inner iteration costs at least one resolvent, and every
        # outer iteration at least one inner iteration
        if r.get("resolvents", r["acg_iters"]) < r["acg_iters"] or r["acg_iters"] < 1:
            bad += 1
        if prev is not None:
            if r["k"] != prev["k"] + 1 or r["c"] < prev["c"]:
                bad += 1
            if "elapsed" in r and r["elapsed"] < prev["elapsed"]:
                bad += 1
    return Check(bad == 0, float(bad), f"{bad} inconsistent records")


def check_trace(trace, hints=None):
    """Replay a solver trace and test the invariants it must satisfy.

    Parameters
    ----------
    trace : list of dict
        Header record followed by one record per outer iteration, as passed
        to the solver callback or read back with :func:`read_trace`.
    hints : dict, optional
        ``m_f`` overrides the header's weak-convexity modulus for the
        stepsize-floor checks, which run only when stepsize doubling was off
        and ``m_f`` is known.

    Returns
    -------
    VerificationReport

    Raises
    ------
    ValueError
        If the trace is empty or records lack required fields.
    """
    hints = hints or {}
    header, iters = _split(trace)
    rep = VerificationReport(rho_rel=iters[-1].get("rho_rel", math.nan),
                             eta_rel=iters[-1].get("eta_rel", math.nan))
    if header["affine"]:
        rep.checks["al_identity"] = _al_identity(iters)
        rep.checks["feasibility_identity"] = _feasibility_identity(iters)
    sched, rep.cycle_lengths = _penalty_schedule(header, iters)
    rep.checks.update(sched)
    rep.checks.update(_delta_replay(header, iters))
    m_f = hints.get("m_f", header.get("m_f"))
    if not header["doubling"] and m_f:
        rep.checks.update(_stepsize_floor(header, iters, m_f))
    rep.checks.update(_inner_acceptance(header, iters))
    rep.checks["counters"] = _counters(iters)
    return rep


def verify_certificate(cert, prob, tol=INCLUSION_TOL, hints=None):
    """Trace checks plus the inclusion test of the returned triple."""
    hints = dict(hints or {})
    hints.setdefault("m_f", prob.f.m_f)
    rep = check_trace(cert.trace, hints)
    r, ok = check_inclusion(cert.z, cert.p, cert.w, prob, tol=tol)
    rep.inclusion_residual = r
    rep.checks["inclusion"] = Check(ok, r)
    return rep


# -- trace files --------------------------------------------------------------

def write_trace(path, trace):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")


def read_trace(path):
    """Read a JSON-lines trace; raises ValueError naming the bad line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ValueError(f"{path}:{lineno}: record is not an object")
            out.append(rec)
    return out
