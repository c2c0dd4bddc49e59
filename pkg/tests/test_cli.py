import json
import subprocess
import sys

import numpy as np
import pytest

from fiberfo import io as fio
from fiberfo.cli import default_config, main

SLERP = {"schema": "fiberfo-config/1",
         "problem": {"dirichlet": {"left": [1, 0, 0], "right": [0, 1, 0]}, "initial": [1, 1, 0]}}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def interval_mesh(tmp_path):
    p = tmp_path / "iv.msh"
    assert main(["mesh", "interval", "--n", "16", "--out", str(p)]) == 0
    return str(p)


def test_print_defaults(capsys):
    assert main(["--print-defaults"]) == 0
    cfg = json.loads(capsys.readouterr().out)
    s = cfg["solver"]
    assert (s["epsilon"], s["nitsche_C"], s["rtol"], s["maxit"]) == (1e-8, 10.0, 1e-8, 500)
    assert cfg["schema"] == "fiberfo-config/1"
    assert cfg == json.loads(json.dumps(default_config()))


def test_mesh_square(tmp_path, capsys):
    out = tmp_path / "sq.msh"
    assert main(["mesh", "square", "--n", "20", "--out", str(out)]) == 0
    assert "800 cells" in capsys.readouterr().out
    assert out.exists() and out.with_suffix(".vtu").exists()


def test_mesh_lv_preview_has_tags(tmp_path):
    out = tmp_path / "lv.msh"
    assert main(["mesh", "lv", "--target-h", "5", "--out", str(out)]) == 0
    tags = fio.read_vtu_cell_data(out.with_suffix(".vtu"))["tag"]
    assert set(tags.astype(int).tolist()) == {1, 2, 3}


def test_bad_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["mesh", "square", "--bogus", "--out", "x.msh"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1


def test_solve_interval_slerp(tmp_path, interval_mesh):
    cfg = write_json(tmp_path / "c.json", SLERP)
    out = tmp_path / "s.vtu"
    assert main(["solve", "frank-oseen", "--mesh", interval_mesh, "--config", cfg, "--out", str(out)]) == 0
    verts, _, pdata = fio.read_vtu(out)
    np.testing.assert_allclose(np.linalg.norm(pdata["director"], axis=1), 1.0, atol=1e-7)
    header, rows = fio.read_csv(out.with_suffix(".csv"))
    assert header == ["iteration", "residual", "energy", "max_norm_dev"] and len(rows) > 1


def test_solve_maxit_signals_non_convergence(tmp_path, interval_mesh):
    cfg = write_json(tmp_path / "c.json", SLERP)
    out = tmp_path / "s.vtu"
    code = main(["solve", "frank-oseen", "--mesh", interval_mesh, "--config", cfg, "--out", str(out), "--maxit", "1"])
    assert code == 2
    assert out.exists() and out.with_suffix(".csv").exists()


def test_solve_missing_tag_named(tmp_path, interval_mesh, capsys):
    cfg = write_json(tmp_path / "c.json", {"problem": {"dirichlet": {"endo": [1, 0, 0]}}})
    assert main(["solve", "frank-oseen", "--mesh", interval_mesh, "--config", cfg, "--out", str(tmp_path / "x.vtu")]) == 1
    assert "'endo'" in capsys.readouterr().err


@pytest.mark.parametrize("bad,match", [({"solver": {"maxiter": 3}}, "maxiter"), ({"extra": 1}, "extra"),
                                       ({"schema": "fiberfo-config/2"}, "schema"),
                                       ({"mesh": {"lv": {"radius": 1}}}, "radius")])
def test_config_rejects_unknown(tmp_path, interval_mesh, capsys, bad, match):
    cfg = write_json(tmp_path / "c.json", bad)
    assert main(["solve", "frank-oseen", "--mesh", interval_mesh, "--config", cfg, "--out", str(tmp_path / "x.vtu")]) == 1
    assert match in capsys.readouterr().err


def test_io_error_exit_code(tmp_path):
    cfg = write_json(tmp_path / "c.json", SLERP)
    assert main(["solve", "frank-oseen", "--mesh", str(tmp_path / "nope.msh"), "--config", cfg,
                 "--out", str(tmp_path / "x.vtu")]) == 3


def test_solve_potential_with_legacy(tmp_path):
    mesh = tmp_path / "sq.msh"
    main(["mesh", "square", "--n", "4", "--out", str(mesh)])
    cfg = write_json(tmp_path / "p.json", {"problem": {"dirichlet": {"left": 0.0, "right": 1.0}}})
    out = tmp_path / "p.vtu"
    assert main(["solve", "potential", "--mesh", str(mesh), "--config", cfg, "--out", str(out), "--legacy-vtk"]) == 0
    verts, _, pdata = fio.read_vtu(out)
    np.testing.assert_allclose(pdata["potential"], verts[:, 0], atol=1e-10)
    assert out.with_suffix(".vtk").read_text().startswith("# vtk DataFile")


def test_fibers_compare_workflow(tmp_path, capsys):
    mesh = tmp_path / "lv.msh"
    main(["mesh", "lv", "--target-h", "4", "--out", str(mesh)])
    rbm, fo = tmp_path / "rbm.vtu", tmp_path / "fo.vtu"
    assert main(["fibers", "rbm", "--mesh", str(mesh), "--out", str(rbm)]) == 0
    assert main(["fibers", "fo", "--mesh", str(mesh), "--alpha-endo", "60", "--alpha-epi", "-60",
                 "--compare", str(rbm), "--out", str(fo)]) == 0
    text = capsys.readouterr().out
    assert "orthonormality defect" in text and "p99" in text
    _, _, pdata = fio.read_vtu(fo)
    assert {"fiber", "sheet", "normal", "angle_error"} <= set(pdata)
    other = tmp_path / "lv2.msh"
    main(["mesh", "lv", "--target-h", "6", "--out", str(other)])
    assert main(["fibers", "fo", "--mesh", str(other), "--compare", str(rbm), "--out", str(tmp_path / "x.vtu")]) == 1


def test_study_commands(tmp_path, capsys):
    assert main(["study", "nope"]) == 1
    assert "available" in capsys.readouterr().err
    code = main(["study", "convergence", "--set", "levels=[4,8,16]", "--out-dir", str(tmp_path)])
    assert code == 0
    assert "[PASS]" in capsys.readouterr().out
    assert (tmp_path / "convergence.csv").exists() and (tmp_path / "convergence_summary.txt").exists()
    assert main(["study", "convergence", "--set", "bogus=1"]) == 1


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "fiberfo.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "fiberfo" in out.stdout
