import json

import numpy as np
import pytest

from helpers import WORKED_TABLE
from onoffpir.cli import main
from onoffpir.model import MarkovModel


@pytest.fixture
def model3_path(tmp_path):
    m = MarkovModel(3, WORKED_TABLE, np.full(3, 1 / 3))
    path = tmp_path / "m3.json"
    path.write_text(m.to_json())
    return str(path)


@pytest.fixture
def model2_path(tmp_path):
    path = tmp_path / "m2.json"
    path.write_text(MarkovModel.two_state(0.2, 0.2).to_json())
    return str(path)


def test_bounds_csv(model2_path, capsys):
    assert main(["bounds", "--model", model2_path, "--pattern", "100"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "t,F,outer2,outer1,inner,exact_n2"
    assert lines[1].startswith("0,1,2,2,2,2")
    cells = lines[2].split(",")
    assert float(cells[2]) == pytest.approx(1.6, abs=1e-9)


def test_bounds_json_format(model2_path, capsys):
    assert main(["bounds", "--model", model2_path, "--pattern", "10",
                 "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload[1]["inner"] == pytest.approx(1.6, abs=1e-9)


def test_bounds_deterministic_output(model2_path, capsys):
    main(["bounds", "--model", model2_path, "--pattern", "1000"])
    first = capsys.readouterr().out
    main(["bounds", "--model", model2_path, "--pattern", "1000"])
    assert capsys.readouterr().out == first


def test_bounds_capacity_exit_code(model3_path, capsys):
    code = main(["bounds", "--model", model3_path, "--pattern", "10000",
                 "--max-branches", "2"])
    assert code == 3


def test_build_verify_round_trip(model3_path, tmp_path, capsys):
    dist_path = str(tmp_path / "dist.json")
    assert main(["build", "--model", model3_path, "--out", dist_path]) == 0
    payload = json.loads(open(dist_path).read())
    assert payload["expected_set_cardinality"] <= 1.6 + 1e-9
    assert payload["expected_multiset_cardinality"] == pytest.approx(1.6, abs=1e-9)

    assert main(["verify", "--dist", dist_path, "--model", model3_path]) == 0
    report1 = json.loads(capsys.readouterr().out)
    assert report1["passed"] is True

    # verifying the same artifact twice reproduces the audit exactly
    assert main(["verify", "--dist", dist_path, "--model", model3_path]) == 0
    report2 = json.loads(capsys.readouterr().out)
    assert report1 == report2


def test_verify_rejects_tampered_distribution(model3_path, tmp_path, capsys):
    dist_path = str(tmp_path / "dist.json")
    main(["build", "--model", model3_path, "--out", dist_path])
    payload = json.loads(open(dist_path).read())
    payload["entries"][0]["p"] += 0.05
    (tmp_path / "bad.json").write_text(json.dumps(payload))
    code = main(["verify", "--dist", str(tmp_path / "bad.json"),
                 "--model", model3_path])
    assert code == 1


def test_lp_expected_value(model3_path, capsys):
    assert main(["lp", "--model", model3_path, "--expect", "1.6"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(1.6, abs=1e-6)
    assert main(["lp", "--model", model3_path, "--cap", "1",
                 "--expect", "2.0"]) == 0
    capsys.readouterr()
    assert main(["lp", "--model", model3_path, "--expect", "1.0"]) == 1


def test_lp_dump(model2_path, capsys):
    assert main(["lp", "--model", model2_path, "--dump"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("min c.x") and "-> col" in out


def test_sweep_fig5_spot_values(capsys):
    assert main(["sweep", "--kind", "fig5", "--sums", "0.2,0.7",
                 "--max-gap", "1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "sum_alpha_beta,gap,rate"
    table = {(row.split(",")[0], row.split(",")[1]): float(row.split(",")[2])
             for row in lines[1:]}
    assert table[("0.2", "1")] == pytest.approx(0.555555555555556, abs=1e-9)
    assert table[("0.7", "1")] == pytest.approx(0.769230769230769, abs=1e-9)


def test_sweep_fig3b_grid(capsys):
    assert main(["sweep", "--kind", "fig3b", "--points", "5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "alpha,inner_rate,outer_rate"
    assert len(lines) == 6
    first = lines[1].split(",")
    assert float(first[1]) == pytest.approx(0.5, abs=1e-9)


def test_simulate_summary_and_trace(model2_path, tmp_path, capsys):
    trace_path = str(tmp_path / "trace.csv")
    assert main(["simulate", "--model", model2_path, "--pattern", "10",
                 "--episodes", "400", "--seed", "3", "--out", trace_path]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["decode_failures"] == 0
    assert summary["mean_query_size"][0] == 2.0
    assert "1" in summary["privacy_audit"]
    lines = open(trace_path).read().strip().splitlines()
    assert lines[0] == "episode,t,F,x,q,len_bits,decode_ok"
    assert len(lines) == 1 + 400 * 2


def test_simulate_config_file(model2_path, tmp_path, capsys):
    cfg = {"model": model2_path, "pattern": "10", "episodes": 50,
           "seed": 9, "L": 16, "policy": "n2_closed_form"}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(cfg_path)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["msg_bits"] == 16 and summary["policy"] == "n2_closed_form"


def test_simulate_requires_model_and_pattern():
    assert main(["simulate", "--episodes", "5"]) == 2


def test_missing_model_file_is_config_error(tmp_path):
    assert main(["bounds", "--model", str(tmp_path / "nope.json"),
                 "--pattern", "10"]) == 2


def test_bad_pattern_is_config_error(model2_path):
    assert main(["bounds", "--model", model2_path, "--pattern", "0101"]) == 2


def test_bernoulli_pattern_spec(model2_path, capsys):
    assert main(["bounds", "--model", model2_path,
                 "--pattern", "bernoulli:0.4:6", "--seed", "5"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 8  # header + 7 steps
    assert lines[1].split(",")[1] == "1"  # step 0 forced ON
