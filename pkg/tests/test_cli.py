import json
import re

import numpy as np
import pytest

from penreg.cli import main, to_json

ERROR_LINE = re.compile(r"^penreg: error\[(CONFIG|DATA|NUMERIC)\]: \S.*$")


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--kind", "grouped", "--n-obs", "120", "--group-size", "4", "--num-groups", "3",
                 "--non-zero-groups", "2", "--non-zero-coef", "2", "--noise", "0", "--seed", "3",
                 "--out", str(out)]) == 0
    return out


def _run(args, capsys):
    code = main(args)
    err = capsys.readouterr().err.strip()
    return code, err


def test_generate_writes_truth(generated):
    names = sorted(p.name for p in generated.iterdir())
    assert names == ["beta_true.csv", "data.csv", "generate.json", "groups.csv"]
    doc = json.loads((generated / "generate.json").read_text())
    assert doc["seed"] == 3 and len(doc["beta_true"]) == 12


def test_noiseless_fit_recovers_truth(generated, tmp_path):
    assert main(["fit", "--data", str(generated / "data.csv"), "--groups", str(generated / "groups.csv"),
                 "--penalization", "sgl", "--lambda1", "0", "--alpha", "0.5", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "coefficients.json").read_text())
    truth = np.loadtxt(generated / "beta_true.csv", skiprows=1)
    fit = doc["fits"][0]
    assert set(fit) >= {"intercept", "beta", "parameters", "objective", "converged"}
    assert np.max(np.abs(np.array(fit["beta"]) - truth)) <= 1e-6
    assert doc["config"]["penalization"] == "sgl" and "seed" in doc


def test_cv_matrix_shape(generated, tmp_path):
    assert main(["cv", "--data", str(generated / "data.csv"), "--groups", str(generated / "groups.csv"),
                 "--penalization", "sgl", "--lambda1", "0.001,0.01,0.1,1", "--alpha", "0.2,0.5,0.7",
                 "--nfolds", "10", "--seed", "1", "--out", str(tmp_path)]) == 0
    errors = np.loadtxt(tmp_path / "cv_errors.csv", delimiter=",", skiprows=1)
    assert errors.shape == (12, 10)
    summary = json.loads((tmp_path / "cv_summary.json").read_text())
    assert summary["shape"] == [12, 10]
    assert summary["best_index"] == int(np.argmin(errors.mean(axis=1)))


def test_group_penalty_without_groups_fails(generated, capsys):
    code, err = _run(["fit", "--data", str(generated / "data.csv"), "--penalization", "sgl"], capsys)
    assert code == 2
    assert ERROR_LINE.match(err) and "group index" in err


def test_unknown_penalization_lists_vocabulary(generated, capsys):
    code, err = _run(["fit", "--data", str(generated / "data.csv"), "--penalization", "ridge"], capsys)
    assert code == 2 and "lasso" in err and "asgl_gl" in err
    assert ERROR_LINE.match(err)


def test_unknown_name_in_config_file(generated, tmp_path, capsys):
    cfg = tmp_path / "run.toml"
    cfg.write_text('penalization = "elastic"\n')
    code, err = _run(["fit", "--config", str(cfg), "--data", str(generated / "data.csv")], capsys)
    assert code == 2 and "valid: none, lasso" in err
    cfg.write_text('model = "glm"\n')
    code, err = _run(["fit", "--config", str(cfg), "--data", str(generated / "data.csv")], capsys)
    assert code == 2 and "lm, qr" in err


def test_data_errors_exit_3(tmp_path, capsys):
    code, err = _run(["fit", "--data", str(tmp_path / "missing.csv")], capsys)
    assert code == 3 and ERROR_LINE.match(err)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,y\n1,2\nx,3\n")
    code, err = _run(["fit", "--data", str(bad)], capsys)
    assert code == 3 and "row 3" in err


def test_config_file_with_flag_override(generated, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'data = "{generated / "data.csv"}"\n'
        'penalization = "lasso"\n'
        "[grid]\n"
        "lambda1 = [0.5, 0.1]\n"
    )
    out = tmp_path / "o"
    assert main(["fit", "--config", str(cfg), "--lambda1", "0.2", "--out", str(out)]) == 0
    doc = json.loads((out / "coefficients.json").read_text())
    assert doc["config"]["lambda1"] == [0.2]
    assert len(doc["fits"]) == 1


def test_tvt_output_round_trips_through_predict(generated, tmp_path):
    out = tmp_path / "tvt"
    assert main(["tvt", "--data", str(generated / "data.csv"), "--penalization", "alasso",
                 "--weight-technique", "unpenalized", "--lambda1", "0.1,0.01", "--train-size", "60",
                 "--validate-size", "30", "--seed", "4", "--out", str(out)]) == 0
    doc = json.loads((out / "tvt.json").read_text())
    assert set(doc) >= {"optimal_betas", "optimal_parameters", "test_error"}
    pred = tmp_path / "pred"
    assert main(["predict", "--coefficients", str(out / "tvt.json"), "--data", str(generated / "data.csv"),
                 "--out", str(pred)]) == 0
    p = np.loadtxt(pred / "predictions.csv", delimiter=",", skiprows=1)
    data = np.loadtxt(generated / "data.csv", delimiter=",", skiprows=1)
    b = np.array(doc["optimal_betas"])
    np.testing.assert_allclose(p, b[0] + data[:, :-1] @ b[1:], rtol=1e-12)


def test_standardized_fit_predicts_on_raw_scale(generated, tmp_path):
    out = tmp_path / "fit"
    assert main(["fit", "--data", str(generated / "data.csv"), "--penalization", "none", "--standardize",
                 "--out", str(out)]) == 0
    assert main(["predict", "--coefficients", str(out / "coefficients.json"),
                 "--data", str(generated / "data.csv"), "--out", str(out)]) == 0
    p = np.loadtxt(out / "predictions.csv", delimiter=",", skiprows=1)
    y = np.loadtxt(generated / "data.csv", delimiter=",", skiprows=1)[:, -1]
    np.testing.assert_allclose(p, y, atol=1e-8)


def _strip_execution(path):
    doc = json.loads(path.read_text())
    doc.pop("execution")
    return doc


def test_repeat_and_parallel_runs_are_byte_identical(generated, tmp_path):
    base = ["cv", "--data", str(generated / "data.csv"), "--groups", str(generated / "groups.csv"),
            "--model", "qr", "--penalization", "sgl", "--lambda1", "0.1,0.01", "--alpha", "0.3,0.8",
            "--error-type", "QRE", "--nfolds", "3", "--seed", "7"]
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--out", str(b)]) == 0
    assert main(base + ["--out", str(c), "--parallel", "--num-cores", "2"]) == 0
    assert (a / "cv_errors.csv").read_bytes() == (b / "cv_errors.csv").read_bytes()
    assert (a / "cv_errors.csv").read_bytes() == (c / "cv_errors.csv").read_bytes()
    assert _strip_execution(a / "cv_summary.json") == _strip_execution(c / "cv_summary.json")


def test_json_floats_have_17_significant_digits():
    text = to_json({"a": 0.1, "b": [1.0, float("nan")], "c": True})
    assert '"a": 0.10000000000000001' in text
    assert json.loads(text) == {"a": 0.1, "b": [1.0, None], "c": True}
