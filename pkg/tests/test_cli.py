import gzip
import hashlib
import json

import numpy as np
import pytest

from abmediation.cli import main
from abmediation.data import ObservationTable, write_csv
from abmediation.effects import EFFECT_KEYS, EFFECT_LABELS
from abmediation.lsem import LsemSpec, NoiseSpec, simulate

ANALYZE = ["analyze", "--treatment-col", "T", "--mediator-col", "M1", "--outcome-col", "Y"]


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory, layered_spec):
    path = tmp_path_factory.mktemp("cli") / "data.csv"
    write_csv(simulate(layered_spec, 5000, 2), path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_json(capsys, data_csv):
    code, out, _ = run(capsys, *ANALYZE, "--input", data_csv, "--format", "json")
    assert code == 0
    d = json.loads(out)
    eff = d["effects"]
    assert abs(eff["ate"]["value"] - (eff["gade0"]["value"] + eff["gacme1"]["value"])) <= 1e-10
    assert abs(eff["ate"]["value"] - (eff["gade1"]["value"] + eff["gacme0"]["value"])) <= 1e-10
    assert len(d["theta"]) == 6
    assert np.array(d["theta_covariance"]).shape == (6, 6)
    assert d["fit"]["converged"]


def test_text_and_json_agree(capsys, data_csv):
    _, out_json, _ = run(capsys, *ANALYZE, "--input", data_csv, "--format", "json")
    _, text, _ = run(capsys, *ANALYZE, "--input", data_csv)
    eff = json.loads(out_json)["effects"]
    assert "% Change = Effect/Mean of Control" in text
    for key in EFFECT_KEYS:
        line = next(l for l in text.splitlines() if l.startswith(EFFECT_LABELS[key] + " "))
        cells = line.split()
        e = eff[key]
        assert cells[1].rstrip("*.") == f"{100 * e['pct_change']:.4f}%"
        assert cells[3] == f"{e['std_error']:.6g}"
        assert cells[1][len(cells[1].rstrip("*.")):] == e["stars"]


def test_analyze_csv(capsys, data_csv):
    code, out, _ = run(capsys, *ANALYZE, "--input", data_csv, "--format", "csv", "--kernel", "bartlett")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("effect,value,std_error")
    assert len(lines) == 6


def test_analyze_gzip(capsys, tmp_path, data_csv):
    gz = tmp_path / "data.csv.gz"
    with open(data_csv, "rb") as src, gzip.open(gz, "wb") as dst:
        dst.write(src.read())
    _, a, _ = run(capsys, *ANALYZE, "--input", data_csv, "--format", "json")
    _, b, _ = run(capsys, *ANALYZE, "--input", gz, "--format", "json")
    assert a == b


def test_misspelled_column(capsys, data_csv):
    code, _, err = run(capsys, "analyze", "--input", data_csv, "--treatment-col", "T",
                       "--mediator-col", "M_1", "--outcome-col", "Y")
    assert code == 2
    assert json.loads(err)["error"] == "MissingColumn"


def test_missing_file(capsys, tmp_path):
    code, _, _ = run(capsys, *ANALYZE, "--input", tmp_path / "nope.csv")
    assert code == 2


def _write(tmp_path, t, m, y):
    path = tmp_path / "x.csv"
    write_csv(ObservationTable.from_arrays(t, m, y), path)
    return path


def test_singular_design_exit_3(capsys, tmp_path):
    path = _write(tmp_path, [0, 0, 1, 1, 0, 1], [2, 2, 5, 5, 2, 5], [0.1, 1, 0, 1, 2, 3])
    code, _, err = run(capsys, *ANALYZE, "--input", path)
    assert code == 3
    assert json.loads(err)["error"] == "SingularDesign"


def test_singular_omega_exit_3(capsys, tmp_path):
    rng = np.random.default_rng(0)
    path = _write(tmp_path, np.repeat([0, 1], 50), rng.normal(size=100), np.full(100, 3.0))
    code, _, err = run(capsys, *ANALYZE, "--input", path)
    assert code == 3
    assert json.loads(err)["error"] == "SingularOmega"


def test_bandwidth_too_large_exit_3(capsys, tmp_path):
    rng = np.random.default_rng(1)
    path = _write(tmp_path, [0, 1, 0, 1, 0, 1], rng.normal(size=6), rng.normal(size=6))
    code, _, err = run(capsys, *ANALYZE, "--input", path, "--kernel", "bartlett", "--bandwidth", "6")
    assert code == 3
    assert json.loads(err)["error"] == "BandwidthTooLarge"


# simulate

def test_simulate_row_count_and_determinism(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    LsemSpec(alpha1=1.0, beta1=2.0, gamma1=1.0, noise={"mediator": NoiseSpec("normal", 1.0)}).to_json(spec)
    for prefix in ("a", "b"):
        assert run(capsys, "simulate", "--spec", spec, "--n", 100, "--seed", 5, "--out", tmp_path / prefix)[0] == 0
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    assert len(a.decode().splitlines()) == 101
    assert a.decode().splitlines()[0] == "T,M1,Y"
    assert hashlib.sha256(a).hexdigest() == hashlib.sha256(b).hexdigest()
    truth = json.loads((tmp_path / "a.truth.json").read_text())
    assert truth["gacme1"] == 2.0 and truth["theta_true"]["theta_m11"] == 2.0


def test_simulate_null_truth_is_zero(capsys, tmp_path):
    spec = tmp_path / "null.json"
    LsemSpec(k_upstream=1, j_downstream=1, alpha0=[1.0], psi1=[0.5], alpha1=1.0, psi3=[0.4],
             gamma1=0.7, gamma2=[-0.3], Psi2=[[0.2]]).to_json(spec)
    assert run(capsys, "simulate", "--spec", spec, "--n", 50, "--seed", 1, "--out", tmp_path / "z")[0] == 0
    text = (tmp_path / "z.truth.json").read_text()
    truth = json.loads(text)
    for key in EFFECT_KEYS:
        assert truth[key] == 0
        assert f'"{key}": 0.0' in text


def test_simulate_bad_spec(capsys, tmp_path):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"k_upstream": 2, "alpha0": [1.0]}))
    code, _, err = run(capsys, "simulate", "--spec", spec, "--n", 10, "--seed", 0, "--out", tmp_path / "o")
    assert code == 2
    assert json.loads(err)["error"] == "DimensionMismatch"


def test_simulate_then_analyze_large(capsys, tmp_path, layered_spec):
    spec = tmp_path / "s.json"
    layered_spec.to_json(spec)
    run(capsys, "simulate", "--spec", spec, "--n", 1_000_000, "--seed", 3, "--out", tmp_path / "big")
    truth = json.loads((tmp_path / "big.truth.json").read_text())
    code, out, _ = run(capsys, *ANALYZE, "--input", tmp_path / "big.csv", "--format", "json")
    assert code == 0
    eff = json.loads(out)["effects"]
    for key in EFFECT_KEYS:
        assert abs(eff[key]["value"] - truth[key]) < 4 * eff[key]["std_error"]


# validate

def test_validate_pass(capsys):
    code, out, _ = run(capsys, "validate", "--suite", "identity", "--reps", 5, "--seed", 1)
    assert code == 0
    assert out.strip().splitlines()[-1].startswith("identity: PASS")


def test_validate_additivity(capsys):
    code, out, _ = run(capsys, "validate", "--suite", "additivity")
    assert code == 0
    assert all(l.startswith("PASS") for l in out.strip().splitlines()[:-1])


def test_threads_env_validated(capsys, monkeypatch):
    monkeypatch.setenv("ABMEDIATION_THREADS", "zero")
    code, _, _ = run(capsys, "validate", "--suite", "additivity")
    assert code == 2
