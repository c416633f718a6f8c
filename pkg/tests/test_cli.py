import json

import numpy as np
import pytest

from shapegrad import cli

TORSION = {"mesh": {"generator": "disk", "r": 1.0, "n": 64},
           "f": {"kind": "Quadratic", "dim": 2}, "g": {"kind": "Linear", "params": [1.0]},
           "case": "D", "velocity": "dilation"}


def _write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip().startswith("{") else out)


@pytest.fixture
def torsion_cfg(tmp_path):
    return _write(tmp_path, TORSION)


def test_integrand_spec_matches_catalog_json():
    from shapegrad import integrands as I
    assert I.integrand_from_json(TORSION["f"]).to_json() == I.Quadratic(2).to_json()


def test_solve_torsion(torsion_cfg, capsys):
    code, rep = _run(["solve", "--config", torsion_cfg], capsys)
    assert code == 0
    assert rep["J"]["value"] == pytest.approx(np.pi / 16, rel=2e-2)
    assert rep["J"]["formula"] == "minus_min_primal_energy"
    assert "meta" in rep


def test_solve_is_deterministic_without_meta(torsion_cfg, tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        assert cli.main(["solve", "--config", torsion_cfg, "--no-meta", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert "meta" not in json.loads(outs[0])


def test_invalid_case_is_usage_error(tmp_path, capsys):
    path = _write(tmp_path, {**TORSION, "case": "X"})
    assert cli.main(["solve", "--config", path]) == 1
    assert "case" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["solve"], ["solve", "--config", "/nonexistent.json"], ["frobnicate"]])
def test_usage_errors(argv, capsys):
    assert cli.main(argv) == 1


def test_unknown_key_rejected(tmp_path):
    assert cli.main(["solve", "--config", _write(tmp_path, {**TORSION, "colour": 1})]) == 1


def test_config_roundtrip():
    cfg = cli.ProblemConfig.from_json(TORSION)
    assert cli.ProblemConfig.from_json(json.dumps(cfg.to_json())) == cfg


def test_noncoercive_is_numerical_failure(tmp_path, capsys):
    path = _write(tmp_path, {**TORSION, "mesh": {"generator": "square", "n": 4}, "case": "N"})
    assert cli.main(["solve", "--config", path]) == 2


def test_solve_relaxed_one_dimensional(tmp_path, capsys):
    path = _write(tmp_path, {"mesh": {"generator": "interval", "a": 0, "b": 1, "n": 200},
                             "f": {"kind": "AbsNorm", "dim": 1}, "g": {"kind": "HingeOneMinus"},
                             "relaxed": True})
    code, rep = _run(["solve", "--config", path], capsys)
    assert code == 0 and rep["m"]["value"] == pytest.approx(-1.0, abs=1e-9)


def test_derive_torsion_all_forms(tmp_path, capsys):
    path = _write(tmp_path, {**TORSION, "mesh": {"generator": "disk", "n": 128}})
    code, rep = _run(["derive", "--config", path, "--fd", "2e-2,1e-2,5e-3"], capsys)
    assert code == 0 and rep["cross_check"]["passed"]
    for key in ("volume_form_value", "boundary_form_value", "minmax_value", "fd_extrapolated"):
        assert rep[key]["value"] == pytest.approx(np.pi / 4, rel=2e-2)
    assert rep["boundary_form_value"]["formula"] == "boundary_form_D"


def test_derive_bump(tmp_path, capsys):
    path = _write(tmp_path, {**TORSION, "velocity": {"bump": 0, "direction": [0.0, 1.0]}})
    code, rep = _run(["derive", "--config", path, "--volume", "--fd", "4e-3,2e-3,1e-3"], capsys)
    assert code == 0
    assert abs(rep["volume_form_value"]["value"]) < 1e-3


def test_derive_one_dimensional(tmp_path, capsys):
    path = _write(tmp_path, {"mesh": {"generator": "interval", "a": 0, "b": 2, "n": 400},
                             "f": {"kind": "AbsNorm", "dim": 1}, "g": {"kind": "HingeOneMinus"},
                             "relaxed": True, "velocity": {"endpoints": [1.0, 0.0]}})
    code, rep = _run(["derive", "--config", path, "--minmax", "--fd", "4e-3,2e-3,1e-3"], capsys)
    assert code == 0
    assert rep["minmax_value"]["value"] == pytest.approx(1.0, abs=1e-12)
    assert rep["extra"]["jprime_exact"] == 1.0


def test_validate_suites(torsion_cfg, capsys):
    code, rep = _run(["validate", "--config", torsion_cfg], capsys)
    assert code == 0
    assert all(item["match"] for item in rep["transport"])
    assert rep["duality"]["gap"] == pytest.approx(0.0, abs=1e-10)
    assert rep["conservation"]["max"] < 0.1


def test_validate_rejects_unknown_suite(torsion_cfg):
    assert cli.main(["validate", "--config", torsion_cfg, "--suite", "nope"]) == 1


def test_example1d(capsys):
    code, rep = _run(["example1d", "--no-meta"], capsys)
    assert code == 0
    assert rep["m_exact"]["value"] == -2.0
    assert rep["minmax"]["value"] == pytest.approx(1.0, abs=1e-12)
    assert rep["fd_quotient"]["value"] == pytest.approx(1.0, abs=5e-2)
    code, rep = _run(["example1d", "--a", "3", "--n", "600"], capsys)
    assert rep["m_discrete"]["value"] == pytest.approx(-2.0, abs=2 / 200)


def test_sweep_csv(torsion_cfg, tmp_path):
    out = tmp_path / "tab.csv"
    assert cli.main(["sweep", "--config", torsion_cfg, "--fd", "4e-2,2e-2,1e-2", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "epsilon,q,abs_error_vs_extrapolated" and len(rows) == 4


@pytest.mark.parametrize("spec", ["translation", "bump(3)", {"affine": [[1, 0], [0, 1]]}])
def test_velocity_specs(spec):
    from shapegrad import geometry as G
    m = G.disk(1.0, 32)
    assert cli.parse_velocity(spec, m).nodal_values.shape == (m.nv, 2)


@pytest.mark.parametrize("spec", ["spin", "bump(100000)", {"weird": 1}])
def test_bad_velocity_specs(spec):
    from shapegrad import geometry as G
    with pytest.raises(cli.ConfigError):
        cli.parse_velocity(spec, G.disk(1.0, 32))
