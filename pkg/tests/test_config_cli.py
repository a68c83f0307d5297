import csv
import json

import pytest
import yaml

from supstop import ConfigError
from supstop.cli import main, render_records
from supstop.config import ProblemConfig, dump_config, parse_config

CAPPED_CALL = {
    "payoff": {"kind": "capped_call", "parameters": {"strike": 3.0, "cap": 2.0}},
    "solver": {"mode": "one_sided"},
}
LOGISTIC = {
    "diffusion": {"kind": "logistic", "parameters": {"mu": 0.07, "gamma": 0.5, "sigma": 0.1}, "r": 0.035},
    "payoff": {"kind": "max_with_floor", "parameters": {"floor": 1.0}},
}


def write_config(tmp_path, data, name="problem.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if name.endswith(".yaml") else json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_default_config_round_trip(tmp_path, capsys):
    assert main(["emit-default-config"]) == 0
    text = capsys.readouterr().out
    assert parse_config(text) == ProblemConfig()
    out = tmp_path / "default.json"
    assert main(["--emit-default-config", "--out", str(out)]) == 0
    assert parse_config(out.read_text(), "json") == ProblemConfig()
    assert parse_config(dump_config(ProblemConfig(), "json"), "json") == ProblemConfig()


def test_strict_parsing():
    with pytest.raises(ConfigError):
        parse_config("solver: {tolerance: 1.0e-8}")
    with pytest.raises(ConfigError):
        parse_config("payoff: {kind: butterfly}")
    with pytest.raises(ConfigError):
        parse_config("payoff: {kind: capped_call, parameters: {strike: 3.0}}")
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


@pytest.mark.parametrize("bad", [{"payoff": {"kind": "butterfly"}}, {"solver": {"tolerance": 1e-8}}])
def test_config_errors_exit_2_without_output(tmp_path, capsys, bad):
    out = tmp_path / "out"
    rc = main(["solve", "--config", write_config(tmp_path, bad), "--out", str(out)])
    assert rc == 2
    assert not out.exists()
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["error"] == "ConfigError" and record["kind"] == "config"


def test_missing_config_file(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_solve_capped_call(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--config", write_config(tmp_path, CAPPED_CALL), "--out", str(out)]) == 0
    summary = read_csv(out / "summary.csv")[0]
    assert summary["smooth_fit"] == "false"
    assert float(summary["y_star"]) == 5.0
    table = read_csv(out / "table.csv")
    assert list(table[0])[:4] == ["x", "V", "f", "region"]
    # full precision: 17 significant digits round-trip the floats exactly
    row = next(r for r in table if r["region"] == "continue")
    x = float(row["x"])
    assert float(row["V"]) == pytest.approx(2.0 * x**2 / 25.0, rel=1e-14)


def test_solve_logistic_json(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["solve", "--config", write_config(tmp_path, LOGISTIC, "problem.json"),
               "--out", str(out), "--format", "json"])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())[0]
    assert summary["z_star"] == pytest.approx(0.8889, abs=1e-3)
    assert summary["y_star"] == pytest.approx(1.2242, abs=1e-3)
    assert summary["zeta"] == pytest.approx(1.9444, abs=1e-3)
    table = json.loads((out / "table.json").read_text())
    assert {"x", "V", "f", "region", "f1", "f2", "beta", "alpha"} <= set(table[0])


def test_laws_command(tmp_path, capsys):
    data = {"laws": {"probes": [[1.0, None, 2.0], [2.0, 1.0, 4.0], [2.0, 3.0, 4.0], [1.0, 1.0, 2.0]]}}
    cfg = write_config(tmp_path, data)
    out = tmp_path / "csv"
    assert main(["laws", "--config", cfg, "--out", str(out)]) == 0
    rows = read_csv(out / "laws.csv")
    assert float(rows[0]["sup_cdf"]) == pytest.approx(0.75, rel=1e-15)
    assert float(rows[1]["joint_cdf"]) == pytest.approx(0.057692307692, rel=1e-10)
    assert rows[2]["status"].startswith("skipped")
    assert float(rows[3]["joint_cdf"]) == pytest.approx(0.75, rel=1e-15)
    out_j = tmp_path / "json"
    assert main(["laws", "--config", cfg, "--out", str(out_j), "--format", "json"]) == 0
    rows_j = json.loads((out_j / "laws.json").read_text())
    for a, b in zip(rows, rows_j):
        for key in ("sup_cdf", "inf_cdf", "joint_cdf"):
            if a.get(key):
                assert float(a[key]) == b[key]
    assert "joint_cdf" not in rows_j[0]


def test_render_records_precision():
    text = render_records([{"x": 0.1, "flag": True, "v": 1 / 3}], "csv")
    head, row = text.strip().splitlines()
    assert head == "x,flag,v"
    assert row == "0.10000000000000001,true,0.33333333333333331"


def quick_verify(**verify):
    return {
        "simulation": {"n_paths": 20_000, "seed": 4},
        "verify": {"jv_points": 12, "signal_points": 4, **verify},
    }


def test_verify_floor_all_pass(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["verify", "--config", write_config(tmp_path, quick_verify()), "--out", str(out)])
    rows = read_csv(out / "verify.csv")
    assert rc == 0, rows
    assert all(r["status"] == "pass" for r in rows), rows
    names = [r["name"] for r in rows]
    assert any(n.startswith("MC expected sup") for n in names)
    assert any(n.startswith("law probe") for n in names)


def test_verify_power_guard(tmp_path, capsys):
    data = quick_verify()
    data["simulation"]["n_paths"] = 100
    out = tmp_path / "out"
    rc = main(["verify", "--config", write_config(tmp_path, data), "--out", str(out)])
    rows = read_csv(out / "verify.csv")
    mc = [r for r in rows if r["name"].startswith(("MC", "law"))]
    assert mc and all(r["status"].startswith("inconclusive") for r in mc)
    assert rc == 0


def test_verify_detects_wrong_threshold(tmp_path, capsys):
    data = quick_verify(inject_y_star=1.5, law_probes=[])
    data["simulation"]["n_paths"] = 2000
    out = tmp_path / "out"
    rc = main(["verify", "--config", write_config(tmp_path, data), "--out", str(out)])
    rows = read_csv(out / "verify.csv")
    assert rc == 1
    assert next(r for r in rows if r["name"] == "J=V quadrature")["status"] == "fail"


def test_seed_override_validated(tmp_path, capsys):
    cfg = write_config(tmp_path, {})
    assert main(["solve", "--config", cfg, "--seed", "-3", "--out", str(tmp_path / "o")]) == 2
