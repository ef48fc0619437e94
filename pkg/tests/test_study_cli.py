import json

import numpy as np
import pytest

from adiapt.models import ConfigError, MorseModel, parse_config
from adiapt.study_cli import (
    JT_HEADER,
    MORSE_HEADER,
    StudyConfig,
    config_from_mapping,
    fit_scaling,
    main,
    run_jt_study,
    run_morse_scaling,
    surface_table,
    write_table,
)


def write_cfg(tmp_path, text, name="study.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_config_validation():
    with pytest.raises(ConfigError):
        StudyConfig(epsilons=(1e-3, 2e-3))
    with pytest.raises(ConfigError):
        StudyConfig(epsilons=(1e-3, -1e-4))
    with pytest.raises(ConfigError):
        StudyConfig(orders=(3,))
    with pytest.raises(ConfigError):
        StudyConfig(fit_points=3)
    with pytest.raises(ConfigError):
        StudyConfig(model="hydrogen")
    with pytest.raises(ValueError):
        StudyConfig(j_values=(1.0,))
    with pytest.raises(ConfigError):
        config_from_mapping({"mass": -1.0})


def test_config_from_text():
    cfg = config_from_mapping(parse_config(
        "model = morse\nmasses = [1e4, 2e4]\norders = 1\ncoords = cartesian\nc = 0.003\n"))
    assert cfg.masses == (1e4, 2e4) and cfg.orders == (1,)
    assert cfg.morse == MorseModel(c=0.003, coords="cartesian_x")
    assert [m.mass for m in cfg.morse_models()] == [1e4, 2e4]
    jt = config_from_mapping(parse_config("model = jt\nepsilon = 1e-3, 5e-4\nj = 0.5, 1.5\nnu = 0, 1"))
    assert jt.model == "jahn_teller" and jt.j_values == (0.5, 1.5) and jt.nu_values == (0, 1)


def test_fit_scaling_needs_four_points():
    eps = np.array([1e-2, 5e-3, 2.5e-3, 1.25e-3])
    err = 3.0 * eps**1.5
    fit = fit_scaling(eps, err)
    assert fit.slope == pytest.approx(1.5, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-12)
    assert fit_scaling(eps, err, converged=[True, True, True, False]) is None
    assert fit_scaling(eps, [1.0, 0.0, 1.0, 1.0]) is None


def test_fit_uses_smallest_epsilon_window():
    eps = 2.0 ** -np.arange(8)
    err = eps**2
    err[:2] = 1.0  # pre-asymptotic rows are ignored
    fit = fit_scaling(eps, err, points=6)
    assert fit.window == tuple(range(2, 8))
    assert fit.slope == pytest.approx(2.0, abs=1e-12)


def test_single_epsilon_first_order_only(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "mass = 1e4\norders = 1\n")
    code = main(["morse-scaling", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "morse_scaling.csv").read_text().splitlines()
    assert lines[0] == "epsilon,lambda_exact,lambda_o1,lambda_o2,abs_err1,abs_err2,converged"
    assert lines[0] == ",".join(MORSE_HEADER)
    fields = lines[1].split(",")
    assert fields[3] == "" and fields[5] == "" and fields[6] == "true"
    assert float(fields[4]) < 1e-4
    assert "not enough converged points" in capsys.readouterr().out


def test_orders_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, "mass = 1e4\n")
    assert main(["morse-scaling", "--config", str(cfg), "--orders", "2", "--out",
                 str(tmp_path)]) == 0
    fields = (tmp_path / "morse_scaling.csv").read_text().splitlines()[1].split(",")
    assert fields[2] == "" and fields[3] != ""


def test_output_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, "masses = 1e4, 2e4\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["morse-scaling", "--config", str(cfg), "--out", str(out)]) == 0
        outs.append((out / "morse_scaling.csv").read_bytes())
    assert outs[0] == outs[1]


def test_json_output(tmp_path):
    cfg = write_cfg(tmp_path, "masses = 1e3, 2e3, 4e3, 8e3\norders = 1\nbasis_size = 60\n")
    assert main(["morse-scaling", "--config", str(cfg), "--out", str(tmp_path),
                 "--format", "json"]) == 0
    payload = json.loads((tmp_path / "morse_scaling.json").read_text())
    assert payload["columns"] == list(MORSE_HEADER)
    assert len(payload["rows"]) == 4
    fit = payload["fits"]["order1"]
    assert set(fit) == {"slope", "intercept", "rms_residual", "window"}
    assert 1.0 < fit["slope"] < 2.0


@pytest.mark.parametrize("text", [
    "mass = -5\n",
    "orders = 3\n",
    "this line has no equals sign\n",
    "masses = 1e4\nmasses = 2e4\n",
])
def test_bad_config_exit_code(tmp_path, text, capsys):
    cfg = write_cfg(tmp_path, text)
    assert main(["morse-scaling", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["morse-scaling", "--config", str(tmp_path / "nope.cfg")]) == 1


def test_unconverged_rows_are_flagged(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "mass = 1e4\norders = 1\ntolerance = 1e-30\nmax_basis_size = 120\n")
    assert main(["morse-scaling", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    row = (tmp_path / "morse_scaling.csv").read_text().splitlines()[1]
    assert row.endswith(",false")
    assert "not converged" in capsys.readouterr().err


def test_surfaces_command(tmp_path):
    assert main(["surfaces", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "surfaces.csv").read_text().splitlines()
    assert lines[0] == "x,q,v11,v22,v12,e0,e1"
    assert len(lines) == 202
    table = surface_table(MorseModel())
    for r in table.rows:
        assert r["e0"] <= min(r["v11"], r["v22"]) + 1e-15
        assert r["e1"] >= max(r["v11"], r["v22"]) - 1e-15
        assert r["e0"] + r["e1"] == pytest.approx(r["v11"] + r["v22"], abs=1e-15)


def test_jt_tables_identical_for_opposite_j(tmp_path):
    base = dict(model="jahn_teller", epsilons=(1e-3, 5e-4), nu_values=(0, 1), jt_basis_size=120)
    a = run_jt_study(StudyConfig(j_values=(0.5,), **base))
    b = run_jt_study(StudyConfig(j_values=(-0.5,), **base))
    keys = [k for k in JT_HEADER if k != "j"]
    for ra, rb in zip(a.rows, b.rows):
        for k in keys:
            if isinstance(ra[k], float):
                assert ra[k] == pytest.approx(rb[k], abs=1e-10)
            else:
                assert ra[k] == rb[k]
    assert [r["j"] for r in b.rows] == [-0.5] * 4


def test_jt_study_columns(tmp_path):
    res = run_jt_study(StudyConfig(model="jahn_teller", epsilons=(1e-3,), j_values=(1.5,),
                                   nu_values=(1,), jt_basis_size=120))
    (row,) = res.rows
    assert set(row) == set(JT_HEADER)
    assert row["abs_err2"] < row["abs_err1"]
    path = write_table(res, tmp_path)
    assert path.read_text().splitlines()[0] == ",".join(JT_HEADER)


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "adiapt", "--help"], capture_output=True,
                         text=True, check=True)
    for cmd in ("morse-scaling", "jt-study", "observables", "surfaces"):
        assert cmd in out.stdout


def test_morse_rows_ordered_by_epsilon():
    res = run_morse_scaling(StudyConfig(masses=(4e4, 1e4, 2e4), orders=(1,)))
    eps = res.column("epsilon")
    assert eps == sorted(eps, reverse=True)
