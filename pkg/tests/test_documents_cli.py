import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fermat_rays import ConfigurationError, convert_document, load_document
from fermat_rays.cli import main
from fermat_rays.suite import as_stationary, sample_tangent

from conftest import ALPHA

DEMOS = os.path.join(os.path.dirname(__file__), "..", "demos", "configs")

KATOK_DOC = {"kind": "zermelo", "geometry": "sphere:2", "params": {"a": float(ALPHA)},
             "g": "round", "W": ["-a*X2", "a*X1", "0"]}
TORUS_DOC = {"kind": "stationary", "geometry": "torus:2", "g0": "euclidean",
             "beta": "1 + 0.3*cos(2*pi*x1)", "delta": ["0.4*sin(2*pi*x2)", "0.2"]}
RANDERS_DOC = {"kind": "randers", "geometry": "euclidean:2", "h": [["2 + x1^2", "0"], ["0", "1"]],
               "B": ["0.2*cos(x2)", "0.1"]}


# --- documents ------------------------------------------------------------------------


@pytest.mark.parametrize("doc", [KATOK_DOC, TORUS_DOC, RANDERS_DOC], ids=["zermelo", "stationary", "randers"])
@pytest.mark.parametrize("to", ["stationary", "randers", "zermelo"])
def test_symbolic_conversion_agrees_numerically(doc, to):
    src = load_document(doc)
    dst = load_document(convert_document(doc, to))
    back = load_document(convert_document(convert_document(doc, to), doc["kind"]))
    rng = np.random.default_rng(40)
    bounds = [[-1, 1], [-1, 1]] if doc["geometry"].startswith("euclidean") else None
    x, v, c = sample_tangent(src.manifold, rng, 300, bounds)
    f = src.metric()(x, v, c)
    assert np.max(np.abs(dst.metric()(x, v, c) / f - 1)) < 1e-10
    assert np.max(np.abs(back.metric()(x, v, c) / f - 1)) < 1e-12


def test_conversion_with_gauge():
    a = load_document(convert_document(KATOK_DOC, "stationary"))
    b = load_document(convert_document(KATOK_DOC, "stationary", gauge="2 + X3"))
    x, v, c = sample_tangent(a.manifold, np.random.default_rng(41), 200)
    assert not np.allclose(a.beta(x, c), b.beta(x, c))
    assert np.max(np.abs(a.metric()(x, v, c) / b.metric()(x, v, c) - 1)) < 1e-12


def test_document_errors():
    with pytest.raises(ConfigurationError):
        load_document({**KATOK_DOC, "colour": "red"})
    with pytest.raises(ConfigurationError):
        load_document({**KATOK_DOC, "kind": "kerr"})
    with pytest.raises(ConfigurationError, match="tangent"):
        load_document({**KATOK_DOC, "W": ["X1", "0", "0"]})
    with pytest.raises(ConfigurationError):
        load_document({**KATOK_DOC, "geometry": "klein:2"})
    with pytest.raises(ConfigurationError):
        load_document({**KATOK_DOC, "params": {"a": "big"}})
    with pytest.raises(ConfigurationError):
        load_document({"kind": "zermelo", "geometry": "sphere:2", "g": "round"})
    with pytest.raises(ConfigurationError):
        convert_document(KATOK_DOC, "lorentz")


def test_as_stationary_accepts_all_kinds():
    for doc in (KATOK_DOC, TORUS_DOC):
        st = as_stationary(load_document(doc))
        assert st.metric()(np.zeros((1, 2)), np.ones((1, 2))).shape == (1,)


# --- CLI ---------------------------------------------------------------------------------


def run_cli(capsys, argv, config=None, tmp_path=None):
    if config is not None:
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(config))
        argv = argv + ["--config", str(p)]
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_bounds_examples(capsys):
    code, out, _ = run_cli(capsys, ["bounds", "--config", os.path.join(DEMOS, "static_bounds.json")])
    assert code == 0
    rep = json.loads(out)
    assert rep["phi"] == 0 and rep["lambda"] == 1
    assert rep["bound"] == pytest.approx(6.283185307, abs=1e-9)
    code, out, _ = run_cli(capsys, ["bounds", "--config", os.path.join(DEMOS, "torus_bounds.json")])
    rep = json.loads(out)
    assert rep["lambda"] == pytest.approx(4.0, rel=1e-14) and rep["numeric_lambda"] == pytest.approx(4.0, rel=1e-6)
    assert rep["bound"] == pytest.approx(5 * np.pi / 4, rel=1e-14)


def test_katok_command_and_determinism(capsys, tmp_path):
    cfg = {"alpha": 0.40711, "n_starts": 500, "seed": 0}
    code, out1, _ = run_cli(capsys, ["katok", "--out", str(tmp_path / "a"), "--format", "both"], cfg, tmp_path)
    assert code == 0
    rep = json.loads(out1)
    assert rep["count"] == 2
    assert np.allclose(rep["lengths"], [2 * np.pi / 1.40711, 2 * np.pi / 0.59289], rtol=1e-4)
    assert sorted(os.listdir(tmp_path / "a")) == ["closed_0.csv", "closed_1.csv", "katok.json"]
    code, out2, _ = run_cli(capsys, ["katok"], cfg, tmp_path)
    assert out1 == out2


def test_convert_command(capsys):
    code, out, _ = run_cli(capsys, ["convert", "--config", os.path.join(DEMOS, "katok_zermelo.json")])
    assert code == 0
    rep = json.loads(out)
    assert rep["round_trip_discrepancy"] < 1e-12
    assert rep["max_relative_discrepancy"] < 1e-10
    assert rep["document"]["kind"] == "stationary"
    # the emitted document loads and evaluates
    load_document(rep["document"])


def test_trace_command(capsys, tmp_path):
    cfg = {"metric": KATOK_DOC, "x0": [1.0, 0.0], "v0": [0.0, 0.5], "s_max": 20.0}
    code, out, _ = run_cli(capsys, ["trace", "--out", str(tmp_path), "--format", "csv"], cfg, tmp_path)
    assert code == 0 and json.loads(out)["relative_F_drift"] < 1e-8
    assert (tmp_path / "geodesic.csv").exists()
    code, out, _ = run_cli(capsys, ["trace"], {**cfg, "ray": True}, tmp_path)
    rep = json.loads(out)
    assert code == 0 and rep["null_drift"] < 1e-8 and rep["future_pointing"]


def test_verify_command(capsys, tmp_path):
    cfg = {"metric": RANDERS_DOC, "seed": 3, "bounds": [[-1, 1], [-1, 1]], "samples": 300, "rays": 2,
           "s_max": 1.0}
    code, out, _ = run_cli(capsys, ["verify"], cfg, tmp_path)
    rep = json.loads(out)
    assert code == 0 and rep["passed"], {k: v for k, v in rep["checks"].items() if not v["passed"]}


def test_closed_command(capsys, tmp_path):
    cfg = {"metric": {"kind": "stationary", "geometry": "sphere:2", "g0": "round", "beta": "1",
                      "delta": ["0", "0", "0"]}, "n_starts": 48, "seed": 1}
    code, out, _ = run_cli(capsys, ["closed"], cfg, tmp_path)
    rep = json.loads(out)
    assert code == 0 and rep["continuum_suspected"]
    assert np.allclose(rep["lengths"], 2 * np.pi, rtol=1e-8)


def test_exit_codes(capsys, tmp_path):
    code, _, err = run_cli(capsys, ["katok"], {"alpha": 0.4}, tmp_path)
    assert code == 2 and json.loads(err)["error"] == "configuration_error"
    code, _, err = run_cli(capsys, ["katok", "--seed", "1"], {"alpha": 0.4, "bogus": 1}, tmp_path)
    assert code == 2
    code, _, err = run_cli(capsys, ["katok", "--seed", "1", "--tol", "-1"], {}, tmp_path)
    assert code == 2
    code, _, err = run_cli(capsys, ["katok", "--seed", "1"], {"alpha": 1.2}, tmp_path)
    assert code == 1 and json.loads(err)["error"] == "invariant_violation"
    code, _, _ = run_cli(capsys, ["nonsense"])
    assert code == 2
    code, _, _ = run_cli(capsys, ["bounds", "--config", str(tmp_path / "missing.json")])
    assert code == 2
    code, _, _ = run_cli(capsys, ["bounds"], {"metric": {**KATOK_DOC, "W": ["X1", "0", "0"]}}, tmp_path)
    assert code == 2
    code, _, _ = run_cli(capsys, ["trace"], {"metric": KATOK_DOC, "x0": [0, 0]}, tmp_path)
    assert code == 2


def test_module_entry_point():
    cfg = os.path.join(DEMOS, "static_bounds.json")
    out = subprocess.run([sys.executable, "-m", "fermat_rays", "bounds", "--config", cfg],
                         capture_output=True, text=True, check=True)
    assert json.loads(out.stdout)["lambda"] == 1
