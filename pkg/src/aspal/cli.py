"""Command-line harness: generate instances, solve them, run benchmark grids
and replay solver traces.

    aspal generate spec.json -o inst.zip
    aspal solve inst.zip --rho 1e-4 --eta 1e-4 --trace run.jsonl
    aspal bench grid.json -o results.csv --jobs 2
    aspal verify --trace run.jsonl
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from . import problems
from .core import NumericalError, OracleInconsistencyError, Tolerances
from .solver import CONVERGED, AspalConfig, ratio_report, solve
from .verify import check_trace, read_trace, write_trace

JOBS_ENV = "ASPAL_JOBS"
CSV_COLUMNS = ("family", "n", "l", "m_f", "L_f", "extra_params", "seed", "status",
               "outer_iters", "acg_iters", "resolvents", "runtime_s", "rho_rel", "eta_rel")
ERROR = "Error"

# metadata keys that have their own CSV column or are derived bookkeeping
_SKIP_META = {"family", "n", "l", "m_f", "L_f", "seed", "tau1", "tau2", "curvature_mode",
              "z0_construction", "p", "q", "observed", "source"}


class UsageError(Exception):
    pass


@dataclass
class BenchRecord:
    family: str
    n: int
    l: int
    m_f: float
    L_f: float
    extra_params: str
    seed: int
    status: str
    outer_iters: int
    acg_iters: int
    resolvents: int
    runtime_s: float
    rho_rel: float
    eta_rel: float

    def to_row(self):
        return [getattr(self, c) if not isinstance(getattr(self, c), float)
                else repr(getattr(self, c)) for c in CSV_COLUMNS]

    @classmethod
    def from_row(cls, row):
        if len(row) != len(CSV_COLUMNS):
            raise ValueError(f"expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        kw = {}
        for f, v in zip(fields(cls), row):
            kw[f.name] = v if f.type == "str" else (int(v) if f.type == "int" else float(v))
        return cls(**kw)

    @property
    def converged(self):
        return self.status == CONVERGED


def _extra_params(meta, extra=None):
    items = {k: v for k, v in meta.items() if k not in _SKIP_META and v is not None}
    items.update(extra or {})
    return ";".join(f"{k}={items[k]}" for k in sorted(items))


def make_record(prob, cert, extra=None):
    meta = prob.metadata
    return BenchRecord(family=meta["family"], n=int(meta["n"]), l=int(meta["l"]),
                       m_f=float(meta["m_f"]), L_f=float(meta["L_f"]),
                       extra_params=_extra_params(meta, extra), seed=int(meta.get("seed", 0)),
                       status=cert.status, outer_iters=cert.outer_iters,
                       acg_iters=cert.acg_iters, resolvents=cert.resolvents,
                       runtime_s=float(cert.runtime), rho_rel=float(cert.rho_rel),
                       eta_rel=float(cert.eta_rel))


# -- CSV ------------------------------------------------------------------------

def write_records(path, records, atr=None, append=False):
    """Write (or append) records; the header is written only to a new file.

    An ``ATR=<value>`` footer line is added when ``atr`` is given.
    """
    path = Path(path)
    fresh = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "w" if fresh else "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if fresh:
            w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow(rec.to_row())
        if atr is not None:
            fh.write(f"ATR={atr!r}\n")


def read_records(path):
    """Parse a results CSV. Returns ``(records, atr_values)``.

    Footer lines ``ATR=<value>`` may appear anywhere after the header, which
    keeps files written in several appending runs readable.
    """
    records, atrs = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(next(csv.reader([lines[0]]))) != CSV_COLUMNS:
        raise ValueError(f"{path}: missing or unexpected header")
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        if line.startswith("ATR="):
            atrs.append(float(line[4:]))
            continue
        try:
            records.append(BenchRecord.from_row(next(csv.reader([line]))))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records, atrs


def summary_table(records):
    """Fixed-width text table; runs that did not converge are marked with '*'."""
    head = f"{'family':<11}{'n':>6}{'l':>6}{'m_f':>9}{'L_f':>9}  {'seed':>5}" \
           f"{'outer':>9}{'acg':>10}{'time(s)':>11}  extra"
    out = [head, "-" * len(head)]
    for r in records:
        mark = "" if r.converged else "*"
        out.append(f"{r.family:<11}{r.n:>6}{r.l:>6}{r.m_f:>9.4g}{r.L_f:>9.4g}  {r.seed:>5}"
                   f"{str(r.outer_iters) + mark:>9}{str(r.acg_iters) + mark:>10}"
                   f"{f'{r.runtime_s:.2f}' + mark:>11}  {r.extra_params}")
    if any(not r.converged for r in records):
        out.append("* did not converge (time or iteration limit, or error)")
    return "\n".join(out)


# -- bench configuration ----------------------------------------------------------

def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _tolerances(cfg):
    tols = cfg.get("tolerances")
    if tols is None:
        tols = [{"rho": cfg.get("rho", 1e-4), "eta": cfg.get("eta", 1e-4)}]
    out = []
    for t in _as_list(tols):
        rho, eta = (t["rho"], t["eta"]) if isinstance(t, dict) else (t[0], t[1])
        if not (rho > 0 and eta > 0):
            raise ValueError("tolerances must be positive")
        out.append((float(rho), float(eta)))
    return out


def expand_bench(cfg):
    """Turn a bench configuration into a list of task dicts, one per row.

    Keys: ``family``, ``grid`` (parameter name -> value or list), ``seeds``,
    ``tolerances`` (list of ``{"rho", "eta"}``), ``time_limit``, ``solver``
    (AspalConfig overrides) and optionally ``configs``, a list of
    ``{"name", "solver"}`` entries compared against each other.
    """
    family = cfg.get("family")
    if family not in problems.FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    grid = cfg.get("grid", {})
    names = sorted(grid)
    values = [_as_list(grid[k]) for k in names]
    if any(len(v) == 0 for v in values):
        raise ValueError("grid entries must be nonempty")
    seeds = _as_list(cfg.get("seeds", [0]))
    if not seeds:
        raise ValueError("no seeds given")
    tols = _tolerances(cfg)
    time_limit = float(cfg.get("time_limit", math.inf))
    base = dict(cfg.get("solver", {}))
    configs = cfg.get("configs") or [{"name": None, "solver": {}}]
    tasks = []
    for combo in itertools.product(*values):
        params = dict(zip(names, combo))
        if "m_f" in params and "L_f" in params and params["m_f"] > params["L_f"]:
            raise ValueError(f"grid point {params} has m_f > L_f")
        for seed, (rho, eta), conf in itertools.product(seeds, tols, configs):
            extra = {"rho": rho, "eta": eta}
            if conf.get("name") is not None:
                extra["config"] = conf["name"]
            tasks.append({"spec": {"family": family, "seed": int(seed), **params},
                          "rho": rho, "eta": eta, "time_limit": time_limit,
                          "solver": {**base, **conf.get("solver", {})}, "extra": extra,
                          "config": conf.get("name")})
    return tasks


def _solver_config(prob, overrides, time_limit=math.inf):
    kw = problems.solver_defaults(prob) if prob.metadata.get("family") in problems.FAMILIES \
        else {}
    kw.update(overrides)
    kw["time_limit"] = time_limit
    return AspalConfig(**kw)


def run_task(task):
    """Generate, solve and summarize one bench row. Never raises."""
    spec = task["spec"]
    try:
        prob = problems.generate(spec)
        cfg = _solver_config(prob, task["solver"], task["time_limit"])
        cert = solve(prob, Tolerances(task["rho"], task["eta"]), cfg)
        return make_record(prob, cert, task["extra"]), cert.trace, None
    except (ValueError, KeyError, NumericalError, OracleInconsistencyError, OSError) as exc:
        meta = {k: v for k, v in spec.items() if k not in ("family", "seed")}
        rec = BenchRecord(family=spec["family"], n=int(spec.get("n", 0)),
                          l=int(spec.get("l", 0)), m_f=float(spec.get("m_f", math.nan)),
                          L_f=float(spec.get("L_f", math.nan)),
                          extra_params=_extra_params(meta, task["extra"]),
                          seed=int(spec.get("seed", 0)), status=ERROR, outer_iters=0,
                          acg_iters=0, resolvents=0, runtime_s=math.nan, rho_rel=math.nan,
                          eta_rel=math.nan)
        return rec, None, f"{type(exc).__name__}: {exc}"


def compare_configs(tasks, records):
    """ATR of the first configuration against the second, over rows both solved."""
    names = []
    for t in tasks:
        if t["config"] not in names:
            names.append(t["config"])
    if len(names) != 2:
        return None
    by_key = {}
    for t, r in zip(tasks, records):
        key = (json.dumps(t["spec"], sort_keys=True), t["rho"], t["eta"])
        by_key.setdefault(key, {})[t["config"]] = r
    a, b = [], []
    for pair in by_key.values():
        ra, rb = pair.get(names[0]), pair.get(names[1])
        if ra is not None and rb is not None and ra.converged and rb.converged:
            a.append(ra.runtime_s)
            b.append(rb.runtime_s)
    return ratio_report(a, b) if a else None


# -- commands ---------------------------------------------------------------------

def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def cmd_generate(args):
    spec = problems.GenSpec.from_dict(_load_json(args.spec))
    prob = problems.generate(spec)
    problems.save_instance(args.output, prob)
    print(f"wrote {args.output} ({prob.metadata['family']}, n={prob.metadata['n']})")
    return 0


def cmd_solve(args):
    prob = problems.load_instance(args.instance)
    overrides = {}
    if args.fixed_lambda is not None:
        overrides["fixed_lambda"] = args.fixed_lambda
    if args.lambda_bar is not None:
        overrides["lambda_bar"] = args.lambda_bar
    if args.no_doubling:
        overrides["doubling"] = False
    if args.max_outer is not None:
        overrides["max_outer_iters"] = args.max_outer
    cfg = _solver_config(prob, overrides, args.time_limit)
    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None

    def stream(rec):
        trace_fh.write(json.dumps(rec) + "\n")

    try:
        cert = solve(prob, Tolerances(args.rho, args.eta), cfg,
                     callback=stream if trace_fh else None)
    finally:
        if trace_fh:
            trace_fh.close()
    rec = make_record(prob, cert, {"rho": args.rho, "eta": args.eta})
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([CSV_COLUMNS, rec.to_row()])
    sys.stdout.write(buf.getvalue())
    if args.csv:
        write_records(args.csv, [rec], append=True)
    return 0 if cert.converged else 2


def cmd_bench(args):
    cfg = _load_json(args.config)
    tasks = expand_bench(cfg)
    jobs = args.jobs if args.jobs is not None else int(os.environ.get(JOBS_ENV, "1"))
    if jobs < 1:
        raise UsageError("--jobs must be at least 1")
    if jobs == 1:
        results = [run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_task, tasks))
    records = [r for r, _, _ in results]
    for (rec, _, err) in results:
        if err:
            print(f"row {rec.family} seed={rec.seed} {rec.extra_params}: {err}", file=sys.stderr)
    if args.trace_dir:
        Path(args.trace_dir).mkdir(parents=True, exist_ok=True)
        for i, (_, trace, _) in enumerate(results):
            if trace:
                write_trace(Path(args.trace_dir) / f"row{i:04d}.jsonl", trace)
    atr = compare_configs(tasks, records)
    write_records(args.output, records, atr=atr, append=args.append)
    print(summary_table(records))
    if atr is not None:
        print(f"ATR={atr:.4f}")
    return 0


def cmd_verify(args):
    hints = {"m_f": args.m_f} if args.m_f is not None else None
    rep = check_trace(read_trace(args.trace), hints)
    print(rep.summary())
    print("PASS" if rep.passed else "FAIL: " + ", ".join(rep.failures()))
    return 0 if rep.passed else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="aspal", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build an instance from a JSON spec")
    g.add_argument("spec")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve a saved instance")
    s.add_argument("instance")
    s.add_argument("--rho", type=float, default=1e-4, help="stationarity tolerance (relative)")
    s.add_argument("--eta", type=float, default=1e-4, help="feasibility tolerance (relative)")
    s.add_argument("--time-limit", type=float, default=math.inf, help="seconds")
    s.add_argument("--trace", help="write per-iteration records as JSON lines")
    s.add_argument("--fixed-lambda", type=float, help="keep the prox stepsize constant")
    s.add_argument("--lambda-bar", type=float, help="initial prox stepsize")
    s.add_argument("--no-doubling", action="store_true", help="disable stepsize doubling")
    s.add_argument("--max-outer", type=int)
    s.add_argument("--csv", help="append the result row to this CSV file")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a parameter grid and write a CSV table")
    b.add_argument("config")
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--jobs", type=int, help=f"worker processes (default ${JOBS_ENV} or 1)")
    b.add_argument("--append", action="store_true", help="append to an existing CSV")
    b.add_argument("--trace-dir", help="write one trace file per row here")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="replay a solver trace and check its invariants")
    v.add_argument("--trace", required=True)
    v.add_argument("--m-f", type=float, help="weak-convexity modulus for the stepsize checks")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError, OSError, NumericalError,
            OracleInconsistencyError) as exc:
        msg = f"missing field {exc.args[0]!r}" if isinstance(exc, KeyError) else exc
        print(f"aspal {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
