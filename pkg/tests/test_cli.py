import csv
import json

import pytest

from ttarecovery.artifacts import read_meta
from ttarecovery.cli import main

REC = {"instance": {"alpha": 0.2, "zeta": 0.001, "sigma": 3.0, "delta_W": 3.0, "batch_B": 16},
       "eta": {"rule": "theorem2-prescription", "c": 3.0}, "n_runs": 40, "master_seed": 1}
LEARN = {"instance": {"alpha": 0.5, "zeta": 0.001, "sigma": 1.0, "radius_r": 2.0, "delta_W": 0.1,
                      "batch_B": 4, "rho_mix": 0.5},
         "trajectory": {"kind": "piecewise-constant", "horizon_T": 400,
                        "params": {"jumps": [[200, 0.1]]}}, "n_runs": 30}


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def test_recover_outputs_and_rerun(tmp_path):
    cfg = write(tmp_path, "c.json", REC)
    out = tmp_path / "a"
    assert main(["recover", "-q", "--config", cfg, "--out-dir", str(out), "--emit-plot-data"]) == 0
    table = rows(out / "recover.csv")
    assert table[0] == ["t", "p_fail", "stderr"]
    summary = json.loads((out / "recover.json").read_text())
    for key in ("tau_hat", "estimator", "n_runs", "T_max", "feasible"):
        assert key in summary["result"]
    meta = summary["meta"]
    assert meta["master_seed"] == 1 and meta["version"] and meta["feasibility"]
    assert read_meta(out / "recover.csv")["config"] == meta["config"]
    # re-run from the artifact itself
    out2 = tmp_path / "b"
    assert main(["recover", "-q", "--config", str(out / "recover.json"), "--out-dir",
                 str(out2), "--emit-plot-data"]) == 0
    for name in ("recover.csv", "recover.json", "recover_plot_data.csv"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_recover_sweep_json(tmp_path):
    cfg = write(tmp_path, "c.json", dict(REC, sweep={"param": "batch_B", "values": [4, 16]},
                                         format="json"))
    assert main(["recover", "-q", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    pts = json.loads((tmp_path / "recover.json").read_text())["result"]["points"]
    assert [p["batch_B"] for p in pts] == [4, 16]
    assert not (tmp_path / "recover_sweep.csv").exists()


def test_learnability_and_gate(tmp_path):
    ok = write(tmp_path, "l.json", LEARN)
    assert main(["learnability", "-q", "--config", ok, "--out-dir", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "learnability.json").read_text())["result"]
    assert res["transfer_holds"] and res["regret_holds"] and res["shift_count"] == 1
    bad = write(tmp_path, "b.json", dict(LEARN, instance=dict(LEARN["instance"], delta_W=1.0)))
    assert main(["learnability", "-q", "--config", bad, "--out-dir", str(tmp_path / "x")]) == 2
    gated = json.loads((tmp_path / "x" / "learnability.json").read_text())
    assert gated["result"]["claim"] is None
    assert gated["meta"]["feasibility"]["bridge_ok"]["ok"] is False


def test_bounds(tmp_path):
    cfg = write(tmp_path, "c.json", REC)
    assert main(["bounds", "-q", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "bounds.json").read_text())["result"]
    assert round(rep["lb"], 1) == 4.1 and round(rep["ub"], 1) == 19.5
    assert set(rep["feasibility"]) == {"shift_budget_ok", "alignment_ok", "bridge_ok",
                                       "canonical_regime_ok"}


def test_quantize(tmp_path):
    traj = tmp_path / "t.csv"
    traj.write_text("t,location\n1,0\n2,0.6\n3,1.2\n4,1.8\n5,2.4\n")
    out = tmp_path / "q.csv"
    assert main(["quantize", str(traj), "--delta-w", "2", "--out", str(out), "-q"]) == 0
    r = rows(out)
    assert r[0] == ["t", "location", "anchor", "shift"]
    assert [x[3] for x in r[1:]] == ["false", "false", "true", "false", "true"]
    assert read_meta(out)["summary"]["shift_count"] == 2
    assert main(["quantize", str(traj), "--delta-w", "1", "--out", str(out), "-q"]) == 1


def test_calibrate_mixing(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["calibrate-mixing", "--rho", "0.5", "--lags", "3", "--n-samples", "100000",
                 "--out", str(out), "-q"]) == 0
    r = rows(out)
    assert r[0] == ["lag", "cov", "bound", "ratio", "stderr"] and len(r) == 4
    raw = out.read_bytes()
    assert b"\r" not in raw


def test_independent_chain_ratio_inf(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["calibrate-mixing", "--rho", "0", "--lags", "1", "--n-samples", "1000",
                 "--out", str(out), "-q"]) == 0
    assert rows(out)[1][3] in ("inf", "0.0")


@pytest.mark.parametrize("argv", [
    ["calibrate-mixing", "--rho", "0,5", "--lags", "3"],
    ["calibrate-mixing", "--rho", "nan", "--lags", "3"],
    ["recover", "--config", "/nonexistent.json"],
    ["repro-tables", "--preset", "other"],
])
def test_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        rc = main(argv)
        raise SystemExit(rc)
    assert exc.value.code == 1


def test_unknown_config_key(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", dict(REC, n_rus=3))
    assert main(["recover", "--config", cfg]) == 1
    assert "n_rus" in capsys.readouterr().err


def test_schema(capsys):
    assert main(["schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert schema["additionalProperties"] is False


def test_repro_tables_plot(tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["repro-tables", "-q", "--n-runs", "30", "--out-dir", str(tmp_path), "--plot",
                 "--emit-plot-data"]) == 0
    for name in ("table_alpha.csv", "table_B.csv", "tables.json", "tables_plot_data.csv",
                 "table_alpha.png", "table_B.png"):
        assert (tmp_path / name).stat().st_size > 0
    head = rows(tmp_path / "table_alpha.csv")[0]
    assert head[:5] == ["alpha", "LB", "tau_hat", "UB", "tau_alpha2"]
    meta = read_meta(tmp_path / "table_B.csv")
    assert "tuning" in meta and meta["config"]["master_seed"] == 0
