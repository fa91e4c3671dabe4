import csv
import json

import pytest

from ottoforge import cli
from ottoforge.config import (
    ConfigError,
    apply_override,
    bundled_configs,
    load_config,
    parse_config_text,
    validate_config,
)


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = cli.main([*argv, "--out", str(out)])
    return code, out


@pytest.mark.parametrize("name", bundled_configs())
def test_bundled_configs_validate_and_round_trip(name):
    cfg = load_config(name)
    validate_config(cfg)
    assert parse_config_text(json.dumps(cfg)) == cfg
    assert "units" in cfg


def test_expected_configs_are_bundled():
    assert {"fermionic_qutrit.json", "bosonic_qutrit.json", "peaked_three_bath.json",
            "many_qubit_engine.json", "many_qubit_fridge.json"} <= set(bundled_configs())


def test_unknown_keys_are_rejected():
    cfg = load_config("fixed_rate_qubit.json")
    cfg["optimizer"]["stars"] = 3
    with pytest.raises(ConfigError, match="stars"):
        validate_config(cfg)


def test_parse_errors_name_the_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text('{"units": {},\n  oops}')


def test_dotted_overrides():
    cfg = load_config("fermionic_qutrit.json")
    new = apply_override(cfg, "model.baths.0.beta=0.4")
    assert new["model"]["baths"][0]["beta"] == 0.4 and cfg["model"]["baths"][0]["beta"] == 0.5
    assert apply_override(cfg, "optimizer.seed=5")["optimizer"]["seed"] == 5
    assert apply_override(cfg, "description=hello")["description"] == "hello"
    with pytest.raises(ConfigError):
        apply_override(cfg, "model.baths.9.beta=1")
    with pytest.raises(ConfigError):
        apply_override(cfg, "no_equals_sign")


def test_n_list_expansion():
    assert cli.parse_n_list("1,2,4,...,64") == [1, 2, 4, 8, 16, 32, 64]
    assert cli.parse_n_list("3,5,...,11") == [3, 5, 7, 9, 11]
    assert cli.parse_n_list("1,10,100") == [1, 10, 100]


def test_optimize_outputs_and_determinism(tmp_path):
    code, out = run(tmp_path, "optimize", "--config", "fixed_rate_qubit.json", "--seed", "3")
    assert code == 0
    result = json.loads((out / "result.json").read_text())
    assert result["units"]["energy"] == "1/beta_2"
    assert set(result) >= {"gap", "legs", "effective_L", "trace"}
    assert result["effective_L"] == len(result["legs"]) == 2
    assert {"mu", "bath", "eps2"} <= set(result["legs"][0])
    first = (out / "result.json").read_bytes(), (out / "protocol.csv").read_bytes()
    code, out2 = run(tmp_path / "again", "optimize", "--config", "fixed_rate_qubit.json", "--seed", "3")
    assert code == 0
    assert ((out2 / "result.json").read_bytes(), (out2 / "protocol.csv").read_bytes()) == first
    meta = json.loads((out / "metadata.json").read_text())
    assert "started" in meta and meta["exit_code"] == 0
    assert not list(out.glob(".*.tmp"))


def test_csv_uses_full_precision(tmp_path):
    code, out = run(tmp_path, "many-qubit", "--config", "many_qubit_fridge.json", "--n", "1,2,4")
    assert code == 0
    rows = list(csv.reader((out / "many_qubit.csv").open()))
    assert rows[0] == ["n", "gap_I", "gap_NI", "ratio", "asymptote"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "4"]
    assert float(rows[1][3]) == 1.0
    assert len(rows[2][1].replace(".", "").lstrip("0")) >= 15


def test_validate_reports_unreachable_levels(tmp_path, capsys):
    cfg = {
        "units": {"energy": "1/beta_2", "time": "1/gamma"},
        "task": {"kind": "validate"},
        "model": {
            "dimension": 3,
            "baths": [{"beta": 1.0, "family": "peaked", "targets": [1.0, 2.0],
                       "rates": [{"from": 0, "to": 1, "rate": 1.0}]}],
            "bounds": [[0, 5], [0, 5]],
        },
    }
    path = tmp_path / "disconnected.json"
    path.write_text(json.dumps(cfg))
    code, out = run(tmp_path, "validate", "--config", str(path))
    assert code == 2
    assert "[2]" in capsys.readouterr().err
    assert json.loads((out / "result.json").read_text())["unreachable"] == [[2]]


def test_validate_accepts_a_connected_model(tmp_path):
    code, out = run(tmp_path, "validate", "--config", "bosonic_qutrit.json")
    assert code == 0 and json.loads((out / "result.json").read_text())["ok"]


def test_schema_violation_exits_2_and_writes_nothing(tmp_path, capsys):
    code, out = run(tmp_path, "optimize", "--config", "fixed_rate_qubit.json", "--set", "optimizer.bogus=1")
    assert code == 2
    assert "bogus" in capsys.readouterr().err
    assert not out.exists()


def test_contour_task_needs_peaked_baths(tmp_path):
    code, _ = run(tmp_path, "contour", "--config", "fermionic_qutrit.json")
    assert code == 2


def test_sweep_with_explicit_cycle(tmp_path):
    cycle = json.dumps([{"mu": 0.5, "bath": 0, "control": [4.3, 4.3]}, {"mu": 0.5, "bath": 1, "control": [3.0, 3.0]}])
    code, out = run(
        tmp_path, "sweep-period", "--config", "fermionic_qutrit.json",
        "--set", f"task.cycle={cycle}", "--set", 'task.periods={"min": 0.01, "max": 1.0, "count": 5}',
    )
    assert code == 0
    rows = list(csv.reader((out / "sweep.csv").open()))
    assert rows[0] == ["period", "gap", "normalized_gap", "eta_period", "fast_regime"]
    assert len(rows) == 7 and float(rows[1][0]) == 0.0
    assert json.loads((out / "result.json").read_text())["cycle_source"] == "config"
    assert (out / "protocol.csv").read_text().splitlines()[0] == "t_start,t_end,bath,eps2,eps3"


def test_optimization_failure_exits_3(tmp_path, monkeypatch):
    from ottoforge.errors import OptimizationFailedError

    def boom(*_):
        raise OptimizationFailedError("no convergence")

    monkeypatch.setitem(cli.RUNNERS, "optimize", boom)
    code, _ = run(tmp_path, "optimize", "--config", "fixed_rate_qubit.json")
    assert code == 3
