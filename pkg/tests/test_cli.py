import copy
import csv
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
import yaml

from degenlab import cli
from degenlab.errors import ParseError, ValidationError

SCENARIOS = sorted(Path(__file__).resolve().parents[1].joinpath("scenarios").glob("*.yaml"))
FAST = ["quadratic_lambda1", "torus_curvature", "smp_quadratic", "lshape_ck"]


def scenario_path(name):
    return next(p for p in SCENARIOS if p.stem == name)


def raw(name):
    return yaml.safe_load(scenario_path(name).read_text())


@pytest.fixture(scope="module")
def schema():
    return json.loads(cli.schema_path().read_text())


def test_committed_suite_is_present():
    assert len(SCENARIOS) >= 10


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_every_scenario_validates(path):
    scn = cli.load_scenario(path)
    resolved = scn.resolved()
    assert resolved["seed"] == scn.seed
    assert set(resolved["tolerances"]) - {"seed"} == set(cli.TUNABLE)
    assert cli.main(["validate", str(path)]) == 0


def test_scenario_from_text_with_example1_expressions():
    text = """
seed: 5
dim: 3
operator: {kind: lambda_k, k: 2}
field: {expression: "(1 - x1^2 - x2^2 - x3^2)^3", half_width: 1.2}
forcing: {expression: "-6*(1 - x1^2 - x2^2 - x3^2)^2", half_width: 1.2}
grid: {half_width: 0.5, resolution: 7}
checks: [viscosity]
"""
    scn = cli.load_scenario(text)
    report = cli.run(scn)
    assert report.exit_code == 0
    assert report.reports[0].residuals["max_abs_residual"] <= 1e-3


def test_missing_region_names_key_and_check():
    r = raw("lshape_ck")
    del r["region"]
    with pytest.raises(ValidationError) as e:
        cli.build_scenario(r)
    assert e.value.key == "region" and e.value.check == "c_k"


def test_missing_seed_is_an_error():
    r = raw("quadratic_lambda1")
    del r["seed"]
    with pytest.raises(ValidationError) as e:
        cli.build_scenario(r)
    assert e.value.key == "seed"


@pytest.mark.parametrize("where", ["", "operator", "grid", "tolerances", "options", "output", "field"])
def test_unknown_keys_are_hard_errors(where):
    r = raw("quadratic_lambda1")
    target = r if not where else r.setdefault(where, {})
    target["bogus_key"] = 1
    with pytest.raises(ValidationError):
        cli.build_scenario(r)


def test_bad_yaml_reports_location():
    with pytest.raises(ParseError) as e:
        cli.load_scenario("seed: 1\ndim: [3\n")
    assert "line" in str(e.value)


def _key_paths(tree, prefix=()):
    if isinstance(tree, dict):
        for k, v in tree.items():
            yield prefix + (k,)
            yield from _key_paths(v, prefix + (k,))
    elif isinstance(tree, list):
        for i, v in enumerate(tree):
            yield from _key_paths(v, prefix + (i,))


def _delete(tree, path):
    out = copy.deepcopy(tree)
    node = out
    for p in path[:-1]:
        node = node[p]
    del node[path[-1]]
    return out


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_deleted_key_fuzzing_never_crashes(path):
    r = yaml.safe_load(path.read_text())
    required = {"seed", "dim", "checks"} | {k for c in r["checks"] for k in cli.REQUIRED[c]}
    for kp in _key_paths(r):
        mutated = _delete(r, kp)
        if len(kp) == 1 and kp[0] in required:
            with pytest.raises(ValidationError):
                cli.build_scenario(mutated)
            continue
        try:
            cli.build_scenario(mutated)
        except ValidationError:
            pass


@pytest.mark.parametrize("junk", [None, 3, "text", [1, 2], {"seed": "x", "dim": 3, "checks": ["viscosity"]}])
def test_malformed_values_raise_validation_error(junk):
    with pytest.raises(ValidationError):
        cli.build_scenario(junk)


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["run", str(scenario_path("torus_curvature")), "--out", str(tmp_path / "a.json")]) == 0
    assert cli.main(["run", str(scenario_path("quadratic_lambda1")), "--out", str(tmp_path / "b.json")]) == 2
    witness = json.loads((tmp_path / "b.json").read_text())["checks"][0]["witness"]
    assert len(witness["point"]) == 3
    assert cli.main(["run", str(tmp_path / "missing.yaml")]) == 1
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\ndim: 3\nchecks: [c_k]\n")
    assert cli.main(["run", str(bad)]) == 1
    assert "region" in capsys.readouterr().err


def test_execution_error_gives_exit_1(tmp_path, capsys):
    p = tmp_path / "s.yaml"
    p.write_text("""
seed: 1
dim: 2
operator: {kind: lambda_k, k: 1}
field: {expression: "x1", half_width: 1.0}
grid: {half_width: 1.0, resolution: 9}
checks: [roundtrip]
""")
    assert cli.main(["validate", str(p)]) == 0
    assert cli.main(["run", str(p), "--out", str(tmp_path / "r.json")]) == 1
    assert "NotNonnegative" in capsys.readouterr().err
    assert not (tmp_path / "r.json").exists()


@pytest.mark.parametrize("name", FAST)
def test_reports_validate_against_schema(name, schema, tmp_path):
    out = tmp_path / "r.json"
    code = cli.main(["run", str(scenario_path(name)), "--out", str(out)])
    assert code in (0, 2)
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, schema)
    assert doc["exit_code"] == code


def test_parallel_mode_matches_sequential():
    r = raw("lshape_ck")
    seq = cli.run(cli.build_scenario(r)).to_json()
    r["options"] = {"parallel": True}
    par = cli.run(cli.build_scenario(r))
    doc_seq, doc_par = json.loads(seq), json.loads(par.to_json())
    assert doc_seq["checks"] == doc_par["checks"]


def test_short_circuit_stops_after_violation():
    r = raw("lshape_ck")
    r["options"] = {"short_circuit": True}
    report = cli.run(cli.build_scenario(r))
    assert [c.check for c in report.reports] == ["c_k"]
    assert report.exit_code == 2


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_viscosity_csv_has_one_row_per_grid_point(tmp_path):
    scn = cli.load_scenario(scenario_path("quadratic_lambda1"))
    rep = cli.run(scn)
    paths = cli.emit_csv(rep, tmp_path)
    header, rows = read_csv(paths[0])
    assert header[:3] == ["x1", "x2", "x3"]
    assert len(rows) == 9 ** 3


def test_curvature_csv_for_unit_ball(tmp_path):
    text = """
seed: 1
dim: 3
operator: {kind: lambda_k, k: 1}
region: {builtin: ball, params: {radius: 1.0}}
grid: {half_width: 1.2, resolution: 12}
checks: [curvature]
"""
    rep = cli.run(cli.load_scenario(text))
    header, rows = read_csv(cli.emit_csv(rep, tmp_path)[0])
    kcols = [i for i, h in enumerate(header) if h.startswith("kappa")]
    assert len(kcols) == 2 and rows
    vals = np.array([[float(r[i]) for i in kcols] for r in rows])
    assert np.max(np.abs(vals - 1)) <= 1e-6


def test_ck_csv_empty_when_consistent_and_filled_on_witness(tmp_path):
    text = """
seed: 1
dim: 3
region: {builtin: ball}
k: 1
checks: [c_k]
"""
    rep = cli.run(cli.load_scenario(text))
    header, rows = read_csv(cli.emit_csv(rep, tmp_path / "a")[0])
    assert header[0] == "c1" and rows == []
    rep = cli.run(cli.load_scenario(scenario_path("lshape_ck")))
    header, rows = read_csv(cli.emit_csv(rep, tmp_path / "b")[0])
    assert len(rows) == 1 and len(rows[0]) == len(header) == 3 + 9 + 3


def test_list_builtins(capsys):
    assert cli.main(["list-builtins"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert "union_balls" in doc["regions"]
    assert set(cli.CHECKS) <= set(doc["checks"])
