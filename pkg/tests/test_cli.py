import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdilation.cli import (
    Scenario,
    ScenarioError,
    decode_matrix,
    encode_matrix,
    list_fixtures,
    load_fixture,
    main,
    run_scenario,
)


def test_fixture_registry():
    names = list_fixtures()
    assert len(names) == 6
    assert "example-2.4" in names and "commuting-classic" in names
    with pytest.raises(ScenarioError):
        load_fixture("nope")


def test_list_fixtures_flag(capsys):
    assert main(["--list-fixtures"]) == 0
    assert capsys.readouterr().out.split() == list_fixtures()


@pytest.mark.parametrize("name", ["commuting-classic", "example-2.3", "lemma-2.5-shift"])
def test_passing_fixtures_exit_zero(name, capsys):
    assert main(["--fixture", name, "--quiet"]) == 0
    assert capsys.readouterr().out.strip() == "PASS"


def test_find_q_example_22():
    rep = run_scenario(load_fixture("example-2.2"))
    info = rep["info"]
    assert info["right-feasible"] and info["middle-feasible"]
    assert not info["left-feasible"]
    res = {c["name"]: c["max-residual"] for c in rep["checks"]}
    assert res["witness-left"] == pytest.approx(np.sqrt(2), abs=1e-12)
    assert res["witness-right"] <= 1e-10 and res["witness-middle"] <= 1e-10


def test_find_q_example_24():
    rep = run_scenario(load_fixture("example-2.4"))
    assert not any(rep["info"][f"{s}-feasible"] for s in ("left", "middle", "right"))


def test_lemma_fixture():
    rep = run_scenario(load_fixture("lemma-2.5-shift"))
    res = {c["name"]: c for c in rep["checks"]}
    assert res["S0-on-basis"]["max-residual"] == 0
    assert res["TS=STQ*"]["max-residual"] <= 1e-12


def test_failing_check_exits_one(tmp_path, capsys):
    # N and diag(1, 2) do not commute, so the QT1T2 relation with Q = I fails
    s = Scenario(mode="verify-only", relation="QT1T2", T1=np.array([[0, 1], [0, 0]], dtype=complex),
                 T2=np.diag([1, 2]).astype(complex), Q=np.eye(2, dtype=complex))
    path = tmp_path / "s.json"
    path.write_text(json.dumps(s.to_json()))
    assert main(["--scenario", str(path), "--quiet"]) == 1
    assert capsys.readouterr().out.strip() == "FAIL"


@pytest.mark.parametrize(
    "content",
    [
        "{not json",
        json.dumps({"T1": [[0.5]]}),
        json.dumps({"mode": "warp"}),
        json.dumps({"mode": "dilate", "T1": [[1, 2, 3]]}),
        json.dumps({"mode": "dilate", "T1": [[0.5]], "colour": 1}),
        json.dumps({"mode": "ando-unitary", "relation": "QT1T2", "T1": [[2.0]], "T2": [[0.5]], "Q": [[1]]}),
    ],
)
def test_bad_input_exits_two(content, tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert main(["--scenario", str(path)]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_file_and_fixture(capsys):
    assert main(["--scenario", "/nonexistent/x.json"]) == 2
    assert main(["--fixture", "no-such"]) == 2
    assert main([]) == 2


def test_json_report_roundtrip(tmp_path):
    s = load_fixture("q-pair")
    path = tmp_path / "q.json"
    path.write_text(json.dumps(s.to_json()))
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert main(["--fixture", "q-pair", "--json", str(out1), "--quiet"]) == 0
    assert main(["--scenario", str(path), "--json", str(out2), "--quiet"]) == 0
    r1, r2 = json.loads(out1.read_text()), json.loads(out2.read_text())
    assert r1 == r2
    assert r1["pass"] is True and r1["stagelog"]


def test_json_stdout(capsys):
    # infeasibility is reported, not a failure
    assert main(["--fixture", "example-2.4", "--json", "-"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["scenario"]["mode"] == "find-q"


def test_env_tolerance(monkeypatch):
    monkeypatch.setenv("DILATION_TOL", "1e-3")
    assert run_scenario(load_fixture("commuting-classic"))["tol"] == 1e-3
    monkeypatch.setenv("DILATION_TOL", "tight")
    with pytest.raises(ScenarioError):
        run_scenario(load_fixture("commuting-classic"))


def test_mode_override_scales_example_22():
    s = load_fixture("example-2.2", "dilate")
    assert np.linalg.norm(s.T1, 2) == pytest.approx(1.0)
    assert np.linalg.norm(s.T2, 2) == pytest.approx(1.0)
    assert run_scenario(s)["pass"]


@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False), min_size=4, max_size=4))
@settings(max_examples=50)
def test_matrix_encoding_roundtrip(vals):
    M = np.array(vals).reshape(2, 2)
    assert np.array_equal(decode_matrix(json.loads(json.dumps(encode_matrix(M))), "M"), M)


def test_scenario_roundtrip():
    s = load_fixture("q-pair")
    t = Scenario.from_json(json.loads(json.dumps(s.to_json())))
    assert t.to_json() == s.to_json()
