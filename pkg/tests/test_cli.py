import json

import numpy as np
import pytest

from conftest import FIXTURE_BETA, make_p4
from srlte.cli import dumps, main
from srlte.simulation import first_difference


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    data = make_p4()
    cols = ["x1", "x2", "x3", "x4", "y"]
    rows = [",".join(cols)]
    for x, y in zip(data.X[:, 1:], data.y):
        rows.append(",".join(repr(float(v)) for v in x) + f",{int(y)}")
    csv = d / "data.csv"
    csv.write_text("\n".join(rows) + "\n")
    H = first_difference(4)
    r = {"H": H.tolist(), "h": (H @ FIXTURE_BETA).tolist(), "Psi": np.eye(3).tolist()}
    restriction = d / "r.json"
    restriction.write_text(json.dumps(r))
    sep = d / "sep.csv"
    x = np.linspace(-2, 2, 30)
    sep.write_text("x,y\n" + "".join(f"{float(v)!r},{int(v > 0)}\n" for v in x))
    return {"dir": d, "data": str(csv), "r": str(restriction), "sep": str(sep)}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestFit:
    def test_json(self, files, capsys):
        code, out, _ = run(capsys, "fit", "--data", files["data"])
        assert code == 0
        rep = json.loads(out)
        assert len(rep["coefficients"]) == 5
        assert rep["converged"] and rep["condition_number"] > 1
        assert len(rep["eigenvalues"]) == 5

    def test_text(self, files, capsys):
        code, out, _ = run(capsys, "fit", "--data", files["data"], "--format", "text")
        assert code == 0 and "condition number" in out

    def test_separation(self, files, capsys):
        code, out, _ = run(capsys, "fit", "--data", files["sep"])
        assert code == 2
        assert json.loads(out)["error"] == "complete-separation"

    def test_non_convergence(self, files, capsys):
        code, out, _ = run(capsys, "fit", "--data", files["data"], "--max-iter", "1")
        rec = json.loads(out)
        assert code == 2 and rec["error"] == "non-convergence" and "partial_fit" in rec

    def test_byte_identical(self, files, capsys):
        a = run(capsys, "fit", "--data", files["data"])[1]
        b = run(capsys, "fit", "--data", files["data"])[1]
        assert a == b

    def test_missing_file(self, files, capsys):
        code, _, err = run(capsys, "fit", "--data", files["dir"] / "nope.csv")
        assert code == 1 and "nope.csv" in err

    def test_bad_row(self, files, capsys):
        path = files["dir"] / "bad.csv"
        path.write_text("x,y\n1,0\n2,maybe\n")
        code, _, err = run(capsys, "fit", "--data", path)
        assert code == 1 and ":3:" in err

    def test_usage_error_is_input_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["fit"])
        assert exc.value.code == 1


class TestEstimate:
    def test_srlte_tuned(self, files, capsys):
        code, out, _ = run(capsys, "estimate", "--data", files["data"], "--restriction", files["r"])
        rep = json.loads(out)
        assert code == 0
        est = rep["estimates"][0]
        assert est["kind"] == "SRLTE" and est["k"] > 0 and "d" in est
        assert len(rep["tuning"]["SRLTE"]["k_values"]) == 5

    def test_identity_filter_equals_sre(self, files, capsys):
        base = ["estimate", "--data", files["data"], "--restriction", files["r"]]
        a = json.loads(run(capsys, *base, "--estimator", "srlte", "--k", "1", "--d", "-1")[1])
        b = json.loads(run(capsys, *base, "--estimator", "sre")[1])
        ca = np.array(a["estimates"][0]["coefficients"])
        cb = np.array(b["estimates"][0]["coefficients"])
        assert np.max(np.abs(ca - cb)) < 1e-10

    def test_all(self, files, capsys):
        out = run(capsys, "estimate", "--data", files["data"], "--restriction", files["r"],
                  "--estimator", "all")[1]
        rep = json.loads(out)
        assert [e["kind"] for e in rep["estimates"]] == ["MLE", "LE", "LTE", "SRE", "SRLE", "SRLTE"]

    def test_missing_restriction(self, files, capsys):
        code, _, err = run(capsys, "estimate", "--data", files["data"], "--estimator", "sre")
        assert code == 1 and "--restriction" in err

    def test_parameter_domain(self, files, capsys):
        code, _, err = run(capsys, "estimate", "--data", files["data"], "--estimator", "le",
                           "--d", "1.5")
        assert code == 1 and "d" in err

    def test_malformed_restriction(self, files, capsys):
        bad = files["dir"] / "bad.json"
        bad.write_text(json.dumps({"H": [[0, 1, -1, 0, 0]], "h": [0]}))
        code, _, err = run(capsys, "compare", "--data", files["data"], "--restriction", bad)
        assert code == 1 and "Psi" in err


class TestCompare:
    def test_plug_in(self, files, capsys):
        code, out, _ = run(capsys, "compare", "--data", files["data"], "--restriction", files["r"])
        rep = json.loads(out)
        assert code == 0 and rep["plug_in_beta"] is True
        by = {v["theorem"]: v for v in rep["verdicts"]}
        assert set(by) == {"T1", "T2", "T3", "T4"}
        assert by["T3"]["delta_psd"] is True

    def test_beta_true(self, files, capsys):
        beta = ",".join(repr(float(b)) for b in FIXTURE_BETA)
        code, out, _ = run(capsys, "compare", "--data", files["data"], "--restriction",
                           files["r"], "--beta-true", beta)
        rep = json.loads(out)
        assert code == 0 and rep["plug_in_beta"] is False
        assert np.allclose(rep["beta_true"], FIXTURE_BETA)

    def test_beta_true_length(self, files, capsys):
        code = run(capsys, "compare", "--data", files["data"], "--restriction", files["r"],
                   "--beta-true", "1,2")[0]
        assert code == 1


class TestTune:
    def test_json(self, files, capsys):
        code, out, _ = run(capsys, "tune", "--data", files["data"], "--restriction", files["r"])
        rep = json.loads(out)
        assert code == 0 and rep["k"] > 0
        assert 0 <= rep["spectral"]["offdiag_ratio"] < 1
        assert len(rep["sweep"]) == 9

    def test_text(self, files, capsys):
        code, out, _ = run(capsys, "tune", "--data", files["data"], "--format", "text")
        assert code == 0 and out.startswith("k = ")


@pytest.mark.parametrize(
    "argv",
    [
        ["fit"],
        ["estimate", "--estimator", "all"],
        ["compare"],
        ["tune"],
    ],
)
def test_json_round_trip(files, capsys, argv):
    extra = ["--restriction", files["r"]] if argv[0] != "fit" else []
    out = run(capsys, *argv, "--data", files["data"], *extra)[1]
    assert dumps(json.loads(out)) == out


class TestSimulate:
    ARGS = ["simulate", "--reps", "4", "--seed", "42", "--n", "40", "--n", "60",
            "--rho", "0.9", "--rho", "0.99"]

    def test_outputs_and_determinism(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        code, _, err = run(capsys, *self.ARGS, "--out", a)
        assert code == 0 and err.count("cell n=") == 4
        assert run(capsys, *self.ARGS, "--out", b, "--threads", "3")[0] == 0
        for name in ("mse.csv", "pmse.csv", "report.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        lines = (a / "mse.csv").read_bytes().split(b"\r\n")
        assert lines[0] == b"rho,n,MLE,LE,LTE,SRE,SRLE,SRLTE"
        assert len([ln for ln in lines if ln]) == 5
        rep = json.loads((a / "report.json").read_text())
        assert rep["metadata"]["seed"] == 42
        assert not (a / "progress.json").exists()

    def test_resume(self, tmp_path, capsys):
        full = tmp_path / "full"
        run(capsys, *self.ARGS, "--out", full)
        part = tmp_path / "part"
        part.mkdir()
        # keep only the first two cells as if the run had been interrupted
        report = json.loads((full / "report.json").read_text())
        progress = {"config": report["metadata"]["config"], "cells": report["cells"][:2]}
        (part / "progress.json").write_text(json.dumps(progress))
        code, _, err = run(capsys, *self.ARGS, "--out", part, "--resume")
        assert code == 0 and "resuming with 2" in err and err.count("cell n=") == 2
        assert (part / "mse.csv").read_bytes() == (full / "mse.csv").read_bytes()

    def test_resume_config_mismatch(self, tmp_path, capsys):
        out = tmp_path / "m"
        out.mkdir()
        (out / "progress.json").write_text(json.dumps({"config": {"reps": 1}, "cells": []}))
        assert run(capsys, *self.ARGS, "--out", out, "--resume")[0] == 1

    def test_toml_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text('n_values = [40]\nrho_values = [0.9]\nreps = 2\nestimators = ["MLE", "SRE"]\n')
        code = run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "o")[0]
        assert code == 0
        head = (tmp_path / "o" / "mse.csv").read_text().splitlines()[0]
        assert head == "rho,n,MLE,SRE"

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"reps": 2, "bogus": true}')
        code, _, err = run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "o")
        assert code == 1 and "bogus" in err

    def test_partial_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"n_values": [8], "rho_values": [0.0], "reps": 3,
                                   "beta_scheme": "user", "beta": [0, 400, 0, 0, 0],
                                   "estimators": ["MLE"], "seed": 1}))
        code = run(capsys, "simulate", "--config", cfg, "--out", tmp_path / "o")[0]
        assert code == 3
