import json
import math

import numpy as np
import pytest

from aspal import cli, problems
from aspal.cli import (BenchRecord, compare_configs, expand_bench, main, read_records,
                       run_task, summary_table, write_records)
from aspal.verify import check_trace, read_trace

QP_SPEC = {"family": "qp_simplex", "l": 10, "n": 100, "m_f": 10, "L_f": 100, "seed": 42}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def rows_without_runtime(path):
    records, _ = read_records(path)
    return [r.to_row()[:11] + r.to_row()[12:] for r in records]


def stationary_instance(path):
    """QP-box instance whose start is an exact KKT point with zero multiplier."""
    rng = np.random.default_rng(0)
    n = 3
    z = rng.uniform(-0.5, 0.5, n)
    A = rng.random((2, n))
    data = dict(A=A, B=np.eye(n), C=np.eye(n), d=z.copy(), D=np.ones(n), b=A @ z, z0=z.copy(),
                z_feas=z.copy())
    meta = dict(family="qp_box", l=2, n=n, r=1.0, m_f=1.0, L_f=1.0, seed=0, tau1=0.0, tau2=1.0)
    problems.save_instance(path, problems._build_qp(data, meta))


def test_generate_deterministic(tmp_path):
    spec = write_json(tmp_path / "s.json", QP_SPEC)
    assert main(["generate", spec, "-o", str(tmp_path / "a.zip")]) == 0
    assert main(["generate", spec, "-o", str(tmp_path / "b.zip")]) == 0
    assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()


def test_generate_rejects_bad_curvature(tmp_path, capsys):
    spec = write_json(tmp_path / "s.json", {**QP_SPEC, "m_f": 200})
    assert main(["generate", spec, "-o", str(tmp_path / "a.zip")]) == 1
    assert "m_f <= L_f" in capsys.readouterr().err


def test_generate_missing_field(tmp_path, capsys):
    spec = write_json(tmp_path / "s.json", {"family": "qp_box", "l": 2, "n": 5, "m_f": 1,
                                            "L_f": 2})
    assert main(["generate", spec, "-o", str(tmp_path / "a.zip")]) == 1
    assert "missing field 'r'" in capsys.readouterr().err


def test_generate_records_density(tmp_path):
    spec = write_json(tmp_path / "s.json", {"family": "qsdp", "l": 3, "n": 6, "density": 0.05,
                                            "m_f": 1, "L_f": 10, "seed": 1})
    main(["generate", spec, "-o", str(tmp_path / "q.zip")])
    assert problems.load_instance(tmp_path / "q.zip").metadata["density"] == 0.05


def test_solve_trivial_instance(tmp_path, capsys):
    inst = tmp_path / "t.zip"
    stationary_instance(inst)
    csv_path = tmp_path / "out.csv"
    assert main(["solve", str(inst), "--csv", str(csv_path)]) == 0
    (rec,), _ = read_records(csv_path)
    assert rec.status == "Converged" and rec.outer_iters == 1


def test_solve_accuracy_trend_and_trace(tmp_path):
    spec = write_json(tmp_path / "s.json", QP_SPEC)
    inst = str(tmp_path / "i.zip")
    main(["generate", spec, "-o", inst])
    out = tmp_path / "r.csv"
    trace = tmp_path / "t.jsonl"
    assert main(["solve", inst, "--time-limit", "60", "--trace", str(trace),
                 "--csv", str(out)]) == 0
    assert main(["solve", inst, "--rho", "1e-6", "--eta", "1e-6", "--time-limit", "60",
                 "--csv", str(out)]) == 0
    loose, tight = read_records(out)[0]
    assert loose.converged and tight.converged
    assert tight.acg_iters > loose.acg_iters
    assert check_trace(read_trace(trace)).passed
    assert main(["verify", "--trace", str(trace)]) == 0


def test_solve_iteration_limit_exit_code(tmp_path):
    spec = write_json(tmp_path / "s.json", QP_SPEC)
    inst = str(tmp_path / "i.zip")
    main(["generate", spec, "-o", inst])
    assert main(["solve", inst, "--rho", "1e-12", "--max-outer", "1"]) == 2


def test_solve_missing_instance(tmp_path):
    assert main(["solve", str(tmp_path / "nope.zip")]) == 1


def test_verify_reports_failure(tmp_path, capsys):
    spec = write_json(tmp_path / "s.json", QP_SPEC)
    inst = str(tmp_path / "i.zip")
    main(["generate", spec, "-o", inst])
    trace = tmp_path / "t.jsonl"
    main(["solve", inst, "--trace", str(trace)])
    recs = read_trace(trace)
    recs[1]["dp_norm"] += 1.0
    trace.write_text("".join(json.dumps(r) + "\n" for r in recs))
    assert main(["verify", "--trace", str(trace)]) == 1
    assert "al_identity" in capsys.readouterr().out


BENCH = {"family": "qp_simplex", "grid": {"l": 5, "n": 40, "m_f": [5, 10], "L_f": 100},
         "seeds": [1], "tolerances": [{"rho": 1e-3, "eta": 1e-3}, {"rho": 1e-4, "eta": 1e-4}],
         "time_limit": 60}


def test_expand_bench_cardinality():
    assert len(expand_bench(BENCH)) == 4
    with pytest.raises(ValueError):
        expand_bench({**BENCH, "grid": {**BENCH["grid"], "m_f": [500]}})
    with pytest.raises(ValueError):
        expand_bench({**BENCH, "family": "nope"})


def test_bench_rows_and_traces(tmp_path):
    cfg = write_json(tmp_path / "b.json", BENCH)
    out = tmp_path / "res.csv"
    tdir = tmp_path / "traces"
    assert main(["bench", cfg, "-o", str(out), "--trace-dir", str(tdir)]) == 0
    records, atrs = read_records(out)
    assert len(records) == 4 and atrs == []
    assert all(r.converged for r in records)
    for f in sorted(tdir.iterdir()):
        assert main(["verify", "--trace", str(f)]) == 0
    # appending keeps a single header
    assert main(["bench", cfg, "-o", str(out), "--append"]) == 0
    assert len(read_records(out)[0]) == 8
    assert rows_without_runtime(out)[:4] == rows_without_runtime(out)[4:]


def test_atr_of_identical_configs(tmp_path):
    cfg = {**BENCH, "tolerances": [{"rho": 1e-3, "eta": 1e-3}],
           "configs": [{"name": "a", "solver": {}}, {"name": "b", "solver": {}}]}
    tasks = expand_bench(cfg)
    records = [run_task(t)[0] for t in tasks]
    atr = compare_configs(tasks, records)
    assert atr == pytest.approx(1.0, rel=0.5)
    # rows one side failed on are left out
    records[1].status = "TimeLimit"
    only = compare_configs(tasks, records)
    assert only == pytest.approx(records[2].runtime_s / records[3].runtime_s)


def test_run_task_reports_errors():
    task = expand_bench({**BENCH, "grid": {"l": 5, "n": 4, "m_f": 5, "L_f": 100}})[0]
    rec, trace, err = run_task(task)
    assert rec.status == "Error" and trace is None and "l < n" in err


def test_csv_round_trip(tmp_path):
    rec = BenchRecord("qp_box", 10, 2, 1.0, 10.0, "r=1.0;rho=0.0001", 3, "Converged", 5, 60, 61,
                      0.123456789, 1.0000000000000002e-05, math.nan)
    path = tmp_path / "r.csv"
    write_records(path, [rec], atr=0.5)
    (back,), atrs = read_records(path)
    assert atrs == [0.5]
    assert back.to_row() == rec.to_row()
    assert back.rho_rel == rec.rho_rel and math.isnan(back.eta_rel)


def test_read_records_rejects(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_records(path)
    path.write_text(",".join(cli.CSV_COLUMNS) + "\nqp_box,1\n")
    with pytest.raises(ValueError, match=":2:"):
        read_records(path)


def test_summary_marks_unconverged():
    ok = BenchRecord("qp_box", 10, 2, 1.0, 10.0, "", 3, "Converged", 5, 60, 61, 0.1, 0, 0)
    bad = BenchRecord("qp_box", 10, 2, 1.0, 10.0, "", 4, "TimeLimit", 5, 60, 61, 0.1, 1, 1)
    text = summary_table([ok, bad])
    assert "5*" in text and text.count("*") >= 4
    assert "*" not in summary_table([ok])


def test_jobs_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.JOBS_ENV, "0")
    cfg = write_json(tmp_path / "b.json", BENCH)
    assert main(["bench", cfg, "-o", str(tmp_path / "x.csv")]) == 1


def test_parallel_bench_matches_serial(tmp_path):
    cfg = write_json(tmp_path / "b.json", BENCH)
    main(["bench", cfg, "-o", str(tmp_path / "serial.csv")])
    main(["bench", cfg, "-o", str(tmp_path / "par.csv"), "--jobs", "2"])
    assert rows_without_runtime(tmp_path / "serial.csv") == rows_without_runtime(
        tmp_path / "par.csv")
