import json

import numpy as np
import pytest

from nctorus import algebra as alg, calculus as calc, cli, io as nio, metrics as met
from nctorus.algebra import LatticeBox, TorusGeometry
from nctorus.errors import NCTorusError, PositivityViolation
from nctorus.forms import OneForm
from nctorus.sampling import random_element

from conftest import coeff_diff


def test_geometry_literal_roundtrip(geom):
    lit = nio.geometry_to_literal(geom)
    back = nio.geometry_from_literal(lit)
    assert back == geom
    upper = nio.geometry_from_literal({"n": 3, "theta_upper": [0.3, 0.2, 0.1]})
    assert upper.theta[0, 1] == 0.3 and upper.theta[2, 0] == -0.2


def test_element_literal_roundtrip(geom, rng):
    u = random_element(geom, 2, rng)
    lit = nio.element_to_literal(u)
    back = nio.element_from_literal(geom, lit)
    assert coeff_diff(back, u) < 1e-15
    sparse = nio.element_from_literal(geom, [{"k": [1, 0], "re": 0.5, "im": -0.25}])
    assert sparse.coefficient((1, 0)) == 0.5 - 0.25j
    assert sparse.box.radius == 1


def test_matrix_and_form_literals(geom, rng):
    m = calc.TorusMatrix(
        geom, 2, [[random_element(geom, 1, rng) for _ in range(2)] for _ in range(2)]
    )
    back = nio.matrix_from_literal(geom, nio.matrix_to_literal(m))
    for i in range(2):
        for j in range(2):
            assert coeff_diff(back.entries[i][j], m.entries[i][j]) < 1e-15
    omega = OneForm(geom, tuple(random_element(geom, 1, rng) for _ in range(2)))
    back_form = nio.form_from_literal(geom, nio.form_to_literal(omega), OneForm)
    for i in range(2):
        assert coeff_diff(back_form.components[i], omega.components[i]) < 1e-15


def test_positive_element_specs(geom):
    box = LatticeBox(2, 6)
    exp_spec = {"exp_of": [{"k": [1, 0], "re": 0.1, "im": 0.0},
                           {"k": [-1, 0], "re": 0.1, "im": 0.0}]}
    k = nio.positive_element_from_spec(geom, exp_spec, box)
    lo, _ = calc.spectral_bounds(k, box)
    assert lo > 0.5
    wit_spec = {"witness": [{"k": [0, 1], "re": 0.3, "im": 0.0}], "constant": 1.0}
    k2 = nio.positive_element_from_spec(geom, wit_spec, box)
    lo2, _ = calc.spectral_bounds(k2, box)
    assert lo2 >= 1.0 - 1e-10
    with pytest.raises(PositivityViolation):
        nio.positive_element_from_spec(
            geom, [{"k": [1, 0], "re": 1.0, "im": 0.0},
                   {"k": [-1, 0], "re": 1.0, "im": 0.0}], box
        )


def test_metric_specs(geom):
    box = LatticeBox(2, 6)
    flat = nio.metric_from_spec(geom, {"type": "flat"}, box)
    assert flat.provenance == "flat"
    const = nio.metric_from_spec(
        geom, {"type": "constant", "matrix": [[2.0, 0.3], [0.3, 1.0]]}, box
    )
    assert const.matrix.entries[0][1].coefficient((0, 0)) == 0.3
    conf = nio.metric_from_spec(
        geom,
        {"type": "conformal", "k": {"exp_of": [{"k": [1, 0], "re": 0.1, "im": 0},
                                               {"k": [-1, 0], "re": 0.1, "im": 0}]}},
        box,
    )
    assert conf.provenance == "conformal"
    func = nio.metric_from_spec(
        geom,
        {
            "type": "functional",
            "h": [{"k": [1, 0], "re": 0.5, "im": 0}, {"k": [-1, 0], "re": 0.5, "im": 0}],
            "poly": [[[1.2, 0.1], [0.0, 0.05]], [[0.0, 0.05], [0.9, 0.0]]],
        },
        box,
    )
    assert func.is_self_compatible(tol=1e-9)
    prod = nio.metric_from_spec(
        geom,
        {"type": "product", "blocks": [
            {"type": "explicit", "entries": [[[{"k": [0, 0], "re": 2.0, "im": 0}]]]},
            {"type": "explicit", "entries": [[[{"k": [0, 0], "re": 3.0, "im": 0}]]]},
        ]},
        box,
    )
    assert prod.matrix.entries[1][1].coefficient((0, 0)) == 3.0


def test_config_parsing(tmp_path):
    cfg = {
        "geometry": {"n": 2, "theta_upper": [0.5]},
        "box_radius": 6,
        "multiplier_radius": 1,
        "window": "10:40",
        "tolerances": {"kernel": 1e-7},
        "seed": 3,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    run = nio.load_config(path)
    assert run.geometry.theta[0, 1] == 0.5
    assert run.box.radius == 6 and run.calc_box.radius == 6
    assert run.multiplier_radius == 1
    assert run.window == (10, 40)
    assert run.tolerances.kernel == 1e-7
    assert run.tolerances.adjointness == 1e-10  # defaults survive partial override
    with pytest.raises(ValueError):
        nio.Tolerances.from_dict({"not_a_knob": 1.0})


def test_spectrum_csv_roundtrip(tmp_path, geom):
    from nctorus import laplacian as lap

    op = lap.assemble_riemannian(met.metric_flat(geom), LatticeBox(2, 3))
    res = lap.spectrum(op)
    path = tmp_path / "spec.csv"
    nio.write_spectrum_csv(path, res)
    rows = nio.read_spectrum_csv(path)
    assert len(rows) == res.eigenvalues.size
    assert rows[0][1] == pytest.approx(0.0, abs=1e-14)
    assert rows[1][2] in (True, False)


def test_operator_cache_roundtrip(tmp_path, geom, rng):
    box = LatticeBox(2, 3)
    op = calc.compress(random_element(geom, 2, rng), box)
    path = tmp_path / "op.nco"
    nio.save_operator(path, op)
    back = nio.load_operator(path, geom)
    assert np.array_equal(back.matrix, op.matrix)
    assert back.box == box and back.m == 1
    other = TorusGeometry.two_torus(0.25)
    with pytest.raises(NCTorusError):
        nio.load_operator(path, other)


def _write_cfg(tmp_path, **overrides):
    cfg = {
        "geometry": {"n": 2, "theta_upper": [0.7071067811865476]},
        "box_radius": 8,
        "metric": {
            "type": "conformal",
            "base": {"type": "flat"},
            "k": {"exp_of": [
                {"k": [1, 0], "re": 0.1, "im": 0}, {"k": [-1, 0], "re": 0.1, "im": 0},
                {"k": [0, 1], "re": 0.07, "im": 0}, {"k": [0, -1], "re": 0.07, "im": 0},
            ]},
        },
        "count": 20,
    }
    cfg.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_cli_spectrum_and_weyl(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "spec.csv"
    assert cli.main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    rows = nio.read_spectrum_csv(out)
    assert rows[0][1] == pytest.approx(0.0, abs=1e-8)
    assert cli.main(["weyl", "--config", cfg, "--window", "10:60",
                     "--out", str(tmp_path / "weyl.json")]) == 0
    report = json.loads((tmp_path / "weyl.json").read_text())
    assert abs(report["exponent"] - 1.0) < 0.05


def test_cli_checks(tmp_path):
    cfg = _write_cfg(tmp_path, box_radius=10)
    assert cli.main(["volume", "--config", cfg]) == 0
    assert cli.main(["det-check", "--config", cfg]) == 0
    assert cli.main(["adjoint-check", "--config", cfg, "--count", "3"]) == 0
    assert cli.main(["conformal-check", "--config", cfg,
                     "--out", str(tmp_path / "conf.json")]) == 0
    report = json.loads((tmp_path / "conf.json").read_text())
    assert report["two_dim_residual"] < 1e-8


def test_cli_oracle_compare(tmp_path):
    cfg = _write_cfg(tmp_path, geometry={"n": 2, "theta_upper": [0.0]})
    assert cli.main(["oracle-compare", "--config", cfg,
                     "--out", str(tmp_path / "oracle.json")]) == 0
    report = json.loads((tmp_path / "oracle.json").read_text())
    assert report["algebraic"]["multiply"] < 1e-12


def test_cli_density_override(tmp_path):
    cfg = _write_cfg(
        tmp_path,
        metric={"type": "flat"},
        nu={"exp_of": [{"k": [1, 0], "re": 0.1, "im": 0},
                       {"k": [-1, 0], "re": 0.1, "im": 0}]},
        count=10,
    )
    assert cli.main(["spectrum", "--config", cfg]) == 0


def test_cli_failure_paths(tmp_path):
    # nonzero theta is an error for the oracle
    cfg = _write_cfg(tmp_path)
    assert cli.main(["oracle-compare", "--config", cfg]) == 2
    # an impossible tolerance flips the exit code, not the report
    cfg_strict = _write_cfg(tmp_path, tolerances={"adjointness": 1e-18})
    assert cli.main(["adjoint-check", "--config", cfg_strict, "--count", "2"]) == 1
