import json

import numpy as np
import pytest

from fblab.cli import main
from fblab.scenario import (
    Scenario,
    ScenarioError,
    compare_reports,
    parse_datum,
    run_scenario,
)


def base_scenario(**over):
    d = {
        "name": "halfspace-small",
        "operator": {"kind": "linear-trace", "lambda0": 1.0, "lambda1": 2.0},
        "grid": {"h": 1 / 64},
        "mode": "dirichlet",
        "datum": "0.5*x2^2",
        "analyses": {"blowup": True},
    }
    d.update(over)
    return d


def test_datum_grammar_values():
    cases = [
        ("0.5*x2^2", (0.3, 0.4), 0.08),
        ("x1*x2 + 0.5*x2^2", (0.5, 0.2), 0.12),
        ("0.5*pp(x2 - 0.25)^2", (0.0, 0.75), 0.125),
        ("0.5*pp(x2 - 0.25)^2", (0.0, 0.1), 0.0),
        ("abs(x1)^3", (-0.5, 0.0), 0.125),
        ("-x1 + 2", (0.25, 0.0), 1.75),
        ("2*(x1 + x2)^2", (0.1, 0.2), 0.18),
        ("pp(0.5*x2^2 + 0.2*x1*x2^2)", (-1.0, 0.5), 0.075),
        ("pp(0.2*x1*x2^2 - 0.5*x2^2)", (1.0, 0.5), 0.0),
    ]
    for text, (x, y), expect in cases:
        fn = parse_datum(text)
        assert fn(np.array([x]), np.array([y]))[0] == pytest.approx(expect), text


def test_datum_grammar_rejects_malformed_input():
    for bad in ("", "x1 +", "x3", "x1^-1", "x2^1.5", "((x1)", "x1)", "foo(x1)"):
        with pytest.raises(ValueError):
            parse_datum(bad)


def test_scenario_validation_reports_field():
    d = base_scenario()
    del d["name"]
    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(d)
    assert exc.value.field == "name"

    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(base_scenario(mode="periodic"))
    assert exc.value.field == "mode"

    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(base_scenario(grid={"h": 1 / 16, "box": [0, 1, 0, 1]}))
    assert exc.value.field == "grid.box"

    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(base_scenario(datum="x1 +"))
    assert exc.value.field == "datum"

    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(base_scenario(analyses={"boundary": True}))
    assert exc.value.field == "analyses.boundary"

    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(base_scenario(analyses={"spectra": True}))
    assert exc.value.field == "analyses.spectra"

    with pytest.raises(ScenarioError) as exc:
        Scenario.from_dict(base_scenario(grid={"h": 0.3}))
    assert exc.value.field == "grid.h"


def test_run_scenario_writes_report_and_artifacts(tmp_path):
    sc = Scenario.from_dict(base_scenario())
    rep = run_scenario(sc, tmp_path / "out", seed=0)
    assert rep["exit_code"] == 0
    assert rep["solver"]["converged"]
    assert rep["analyses"]["blowup"]["classification"] == "case-i"
    for name in rep["artifacts"]:
        assert (tmp_path / "out" / name).exists()
    on_disk = json.loads((tmp_path / "out" / "report.json").read_text())
    assert on_disk["exit_code"] == 0


def test_run_scenario_rejects_unknown_solver_option(tmp_path):
    sc = Scenario.from_dict(base_scenario(solver={"preconditioner": "ilu"}))
    with pytest.raises(ScenarioError) as exc:
        run_scenario(sc, tmp_path / "out")
    assert exc.value.field == "solver.preconditioner"


def test_run_scenario_flags_missing_contact(tmp_path):
    d = base_scenario(
        name="detached-small",
        mode="obstacle",
        datum="0.5*pp(x2 - 0.25)^2",
        grid={"h": 1 / 32},
        analyses={"boundary": {"radii": [0.4, 0.2], "require_contact": 0.1}},
    )
    rep = run_scenario(Scenario.from_dict(d), tmp_path / "out")
    assert rep["exit_code"] == 2
    assert any("contact" in f for f in rep["flags"])
    assert rep["analyses"]["boundary"]["contact_distance"] > 0.2


def test_cli_run_and_determinism(tmp_path):
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(base_scenario()))
    code_a = main(["run", "--scenario", str(p), "--out", str(tmp_path / "a"),
                   "--seed", "3", "--normalize-report"])
    code_b = main(["run", "--scenario", str(p), "--out", str(tmp_path / "b"),
                   "--seed", "3", "--normalize-report"])
    assert code_a == code_b == 0
    ra = (tmp_path / "a" / "report.json").read_bytes()
    rb = (tmp_path / "b" / "report.json").read_bytes()
    assert ra == rb
    ua = (tmp_path / "a" / "u.field").read_bytes()
    ub = (tmp_path / "b" / "u.field").read_bytes()
    assert ua == ub


def test_cli_run_malformed_scenario(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{ not json")
    assert main(["run", "--scenario", str(p)]) == 1
    assert "line" in capsys.readouterr().err


def test_cli_validate_operator(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"kind": "pucci-minus", "lambda0": 1.0, "lambda1": 2.0}))
    assert main(["validate-operator", str(good)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["passed"]

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "custom-table", "lambda0": 1.0,
                               "lambda1": 2.0, "table": [[1.0, 0.0], [0.0, -1.0]]}))
    assert main(["validate-operator", str(bad)]) == 2
    out = json.loads(capsys.readouterr().out)
    assert not out["checks"]["pucci_sandwich"]["passed"]

    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert main(["validate-operator", str(empty)]) == 1


def test_cli_compare(tmp_path, capsys):
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(base_scenario()))
    main(["run", "--scenario", str(p), "--out", str(tmp_path / "a"),
          "--normalize-report"])
    main(["run", "--scenario", str(p), "--out", str(tmp_path / "b"),
          "--normalize-report"])
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a" / "report.json"),
                 str(tmp_path / "b" / "report.json")]) == 0
    diff = json.loads(capsys.readouterr().out)
    assert diff["deltas"] == {}

    q = tmp_path / "sc32.json"
    q.write_text(json.dumps(base_scenario(grid={"h": 1 / 32})))
    main(["run", "--scenario", str(q), "--out", str(tmp_path / "c"),
          "--normalize-report"])
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a" / "report.json"),
                 str(tmp_path / "c" / "report.json")]) == 0
    diff = json.loads(capsys.readouterr().out)
    assert any(k.startswith("scenario.grid.h") for k in diff["deltas"])


def test_compare_rejects_name_mismatch():
    a = {"scenario": {"name": "a"}}
    b = {"scenario": {"name": "b"}}
    with pytest.raises(ValueError, match="names differ"):
        compare_reports(a, b)


def test_cli_dump_info(tmp_path, capsys):
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(base_scenario()))
    main(["run", "--scenario", str(p), "--out", str(tmp_path / "a")])
    capsys.readouterr()
    assert main(["dump-info", str(tmp_path / "a" / "u.field")]) == 0
    header = json.loads(capsys.readouterr().out)
    assert header["h"] == pytest.approx(1 / 64)
    assert main(["dump-info", str(tmp_path / "missing.field")]) == 1


def test_shipped_scenarios_parse():
    import pathlib
    root = pathlib.Path(__file__).resolve().parents[1] / "scenarios"
    names = set()
    for path in sorted(root.glob("*.json")):
        sc = Scenario.from_file(path)
        names.add(sc.name)
    assert {"halfspace", "tilted", "detached", "contact"} <= names
