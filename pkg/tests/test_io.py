import csv
import json

import numpy as np
import pytest

from mmctop.cli import main
from mmctop.fem import build_mesh
from mmctop.io import (HISTORY_COLUMNS, parse_config, read_components, read_history,
                       write_components, export_vtk)


def test_parse_defaults():
    cfg = parse_config('{"problem": "cantilever2d", "meshScale": 10}')
    assert cfg.max_iter == 500 and cfg.tol == 1e-4 and cfg.fd_delta == 1e-8
    assert cfg.solver == "auto" and cfg.void_mode == "strict" and cfg.mma == {}
    assert cfg.problem.mesh_shape == (20, 10)


@pytest.mark.parametrize("text,match", [
    ('{"problem": "cantilever2d", "nope": 1}', "nope"),
    ('{"problem": "cantilever2d", "overrides": {"zeta": 1}}', "zeta"),
    ('{"problem": "cantilever2d", "mma": {"gamma": 1}}', "gamma"),
    ('{"problem": "nope"}', "nope"),
    ('{"maxIter": 3}', "problem"),
    ('{"problem": "cantilever2d", "maxIter": 0}', "maxIter"),
    ('{"problem": "cantilever2d", "formatVersion": 2}', "formatVersion"),
    ('{"problem": "cantilever2d", "solver": "magic"}', "magic"),
    ("[1, 2", "malformed"),
])
def test_parse_errors(text, match):
    with pytest.raises(ValueError, match=match):
        parse_config(text)


def test_parse_overrides_and_inline_problem():
    cfg = parse_config('{"problem": "cantilever2d", "meshScale": 10, '
                       '"overrides": {"epsilon": 0.3, "bounds": {"theta": [-1, 1]}}}')
    assert cfg.problem.epsilon == 0.3 and cfg.problem.bounds["theta"] == (-1, 1)
    inline = json.dumps({"problem": cfg.problem.to_dict(), "maxIter": 2})
    assert parse_config(inline).problem.to_dict() == cfg.problem.to_dict()


GOLDEN_1 = """# vtk DataFile Version 3.0
mmctop formatVersion 1
ASCII
DATASET STRUCTURED_POINTS
DIMENSIONS 2 2 2
ORIGIN 0 0 0
SPACING 2 1 0.5
CELL_DATA 1
SCALARS density double 1
LOOKUP_TABLE default
0.123456789
"""


def test_vtk_single_element(tmp_path):
    mesh = build_mesh(1, 1, 1, 2.0, 1.0, 0.5)
    path = export_vtk([0.1234567891], mesh, tmp_path / "a.vtk")
    assert path.read_text() == GOLDEN_1


def test_vtk_golden_2x2x2(tmp_path):
    mesh = build_mesh(2, 2, 2, 1.0, 1.0, 1.0)
    vals = np.arange(8) / 8
    text = export_vtk(vals, mesh, tmp_path / "b.vtk").read_text().splitlines()
    assert text[4:8] == ["DIMENSIONS 3 3 3", "ORIGIN 0 0 0", "SPACING 0.5 0.5 0.5", "CELL_DATA 8"]
    assert text[10:] == ["0", "0.125", "0.25", "0.375", "0.5", "0.625", "0.75", "0.875"]
    nodal = export_vtk(np.ones(27), mesh, tmp_path / "c.vtk").read_text()
    assert "POINT_DATA 27" in nodal
    with pytest.raises(ValueError):
        export_vtk(np.ones(5), mesh, tmp_path / "d.vtk")


def test_components_round_trip(tmp_path):
    from mmctop.problems import builtin

    prob = builtin("mbb3d", mesh_scale=5)
    params = np.array([c.params for c in prob.components])
    active = np.arange(len(params)) % 3 != 0
    write_components(tmp_path / "c.json", "cuboid3d", params, active, {"status": "x"})
    comps, act = read_components(tmp_path / "c.json")
    assert np.allclose([c.params for c in comps], params) and act == active.tolist()


def _cfg(tmp_path, **extra):
    d = {"problem": "cantilever2d", "mesh": [20, 10], "outdir": str(tmp_path / "out"), **extra}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return str(path)


def test_cli_run_one_iteration(tmp_path, capsys):
    assert main(["run", _cfg(tmp_path, maxIter=1, vtkEvery=1)]) == 0
    out = tmp_path / "out"
    hist = read_history(out / "history.csv")
    assert len(hist) == 1 and set(hist[0]) == set(HISTORY_COLUMNS)
    assert (out / "final.vtk").exists() and (out / "iter_0001.vtk").exists()
    comp = json.loads((out / "components.json").read_text())
    assert comp["formatVersion"] == 1 and comp["status"] == "maxIter"
    assert len(comp["components"]) == 16
    assert "stopped after 1 iterations" in capsys.readouterr().out


def test_cli_validate_gradients(tmp_path, capsys):
    assert main(["validate-gradients", _cfg(tmp_path, fdVariables=[0, 3, 5])]) == 0
    with open(tmp_path / "out" / "gradient_check.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert max(float(r["rel_err_obj"]) for r in rows) < 1e-4
    assert "max relative error" in capsys.readouterr().out


def test_cli_dump_problem(capsys):
    assert main(["dump-problem", "mbb3d", "--mesh-scale", "5"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["formatVersion"] == 1 and d["problem"]["mesh"] == [12, 2, 4]
    cfg = parse_config(json.dumps(d))
    assert len(cfg.problem.components) == 24


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"problem": "cantilever2d", "maxIterations": 3}')
    assert main(["run", str(bad)]) == 2
    assert "maxIterations" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == 2
