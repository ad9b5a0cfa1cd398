import json
import sys
import textwrap

import numpy as np
import pytest

from datacopy.cli import main
from datacopy.fileio import ReportDocument, read_points, write_points

FAST = ["--m", "20000", "--b", "50", "--k", "2", "--gamma", "0.002", "--u-size", "1000"]


@pytest.fixture
def train(tmp_path):
    path = tmp_path / "train.csv"
    assert main(["sample", "--n", "500", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_sample_writes_csv(train):
    X = read_points(train)
    assert X.shape == (500, 2)
    assert train.read_text().startswith("#")


def test_detect_report_schema(tmp_path, train, capsys):
    out = tmp_path / "r.json"
    assert main(["detect", "--train", str(train), "--sampler", "copier", "-o", str(out), *FAST]) == 0
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    assert summary.startswith("cr_hat=")
    doc = ReportDocument.from_json(out.read_text())
    res = doc.results
    assert 0 <= res["cr_hat"] <= 1
    assert len(res["regions"]) == 500
    assert len(doc.inputs["train"]["sha256"]) == 64
    assert doc.config["m"] == 20000


def test_detect_rerun_is_identical(tmp_path, train):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["detect", "--train", str(train), "--sampler", "copier", "-o", str(a), *FAST]) == 0
    assert main(["detect", "--train", str(train), "--sampler", "copier", "-o", str(b), "--threads", "2", *FAST]) == 0
    da, db = (ReportDocument.from_json(p.read_text()) for p in (a, b))
    assert da.body() == db.body()


def test_missing_training_file(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["detect", "--train", str(tmp_path / "nope.csv"), "--sampler", "halfmoons", "-o", str(out)])
    assert code == 2
    assert not out.exists()
    assert "nope.csv" in capsys.readouterr().err


def test_malformed_training_file(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,4\nfive,6\n")
    assert main(["detect", "--train", str(bad), "--sampler", "halfmoons"]) == 2
    assert "bad.csv:3" in capsys.readouterr().err


def test_parameter_errors(tmp_path, train):
    assert main(["detect", "--train", str(train), "--sampler", "halfmoons", "--lam", "0.5"]) == 4
    assert main(["detect", "--train", str(train)]) == 4
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lam": 5.0, "colour": "red"}))
    assert main(["detect", "--config", str(cfg), "--train", str(train), "--sampler", "halfmoons"]) == 4


def test_config_precedence(tmp_path, train):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lam": 5.0, "gamma": 0.004, "m": 20000, "b": 50, "k": 2, "u_size": 500}))
    out = tmp_path / "r.json"
    assert main(["detect", "--config", str(cfg), "--train", str(train), "--sampler", "halfmoons",
                 "--lam", "7", "-o", str(out)]) == 0
    conf = ReportDocument.from_json(out.read_text()).config
    assert conf["lam"] == 7.0
    assert conf["gamma"] == 0.004
    assert conf["epsilon"] == 0.1


def test_threads_env(monkeypatch, train):
    monkeypatch.setenv("DATACOPY_THREADS", "zero")
    assert main(["detect", "--train", str(train), "--sampler", "halfmoons", *FAST]) == 4


def test_sampler_protocol_failure_exit_3(tmp_path, train):
    script = tmp_path / "child.py"
    script.write_text(textwrap.dedent("""
        import sys
        sys.stdin.readline()
        print("0.5 0.5", flush=True)
    """))
    cmd = f"{sys.executable} {script}"
    assert main(["detect", "--train", str(train), "--sampler-cmd", cmd, *FAST]) == 3


def test_external_sampler_detect(tmp_path, train):
    script = tmp_path / "child.py"
    script.write_text(textwrap.dedent("""
        import sys
        import numpy as np
        from datacopy.distributions import Halfmoons
        rng = np.random.default_rng(0)
        for line in sys.stdin:
            _, n, d = line.split()
            for row in Halfmoons(0.1).sample(int(n), rng):
                sys.stdout.write(" ".join(repr(float(v)) for v in row) + "\\n")
            sys.stdout.flush()
    """))
    out = tmp_path / "r.json"
    assert main(["detect", "--train", str(train), "--sampler-cmd", f"{sys.executable} {script}",
                 "-o", str(out), *FAST]) == 0
    assert ReportDocument.from_json(out.read_text()).results["u_used"] == 1000


def test_samples_file_sampler(tmp_path, train):
    gen = tmp_path / "gen.csv"
    write_points(gen, np.random.default_rng(0).random((21000, 2)))
    assert main(["detect", "--train", str(train), "--samples", str(gen), *FAST]) == 0
    assert main(["detect", "--train", str(train), "--samples", str(gen), "--m", "30000",
                 "--b", "50", "--k", "2"]) == 3


def test_baseline_command(tmp_path, train, capsys):
    test = tmp_path / "test.csv"
    gen = tmp_path / "gen.csv"
    main(["sample", "--n", "500", "--seed", "4", "--out", str(test)])
    main(["sample", "--n", "500", "--seed", "5", "--out", str(gen)])
    out = tmp_path / "b.json"
    assert main(["baseline", "--train", str(train), "--test", str(test), "--generated", str(gen),
                 "--clusters", "5", "-o", str(out)]) == 0
    res = ReportDocument.from_json(out.read_text()).results
    assert len(res["per_cluster"]) == 5
    assert "min_z=" in capsys.readouterr().out


def test_estimate_k_command(tmp_path, capsys):
    sq = tmp_path / "sq.csv"
    assert main(["sample", "--distribution", "square", "--n", "5000", "--out", str(sq)]) == 0
    assert main(["estimate-k", "--train", str(sq), "--b", "300"]) == 0
    assert capsys.readouterr().out.strip().endswith("k=2")


def test_calibrate_command(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert main(["calibrate", "--n", "300", "--runs", "3", "--observed", "0.5", "--m", "5000",
                 "--b", "30", "--gamma", "0.003", "--u-size", "300", "--cache-dir", str(tmp_path / "cache"),
                 "-o", str(out)]) == 0
    res = ReportDocument.from_json(out.read_text()).results
    assert res["run_count"] == 3 and res["p_value"] == 0.0
    assert len(list((tmp_path / "cache").iterdir())) == 1


def test_experiment_halfmoons_quick(tmp_path, capsys):
    csv_path, table = tmp_path / "t.csv", tmp_path / "t.txt"
    out = tmp_path / "e.json"
    assert main(["experiment-halfmoons", "--quick", "--csv", str(csv_path), "--table", str(table),
                 "-o", str(out)]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "method,column,median_p,significant,reduced_precision"
    assert len(lines) == 1 + 5 * 5
    assert all(line.endswith(",1") for line in lines[1:])
    assert "reduced-precision" in table.read_text()
    assert ReportDocument.from_json(out.read_text()).results["reduced_precision"] is True


def test_experiment_lowerbound_command(capsys):
    assert main(["experiment-lowerbound", "--seeds", "3"]) == 0
    assert "covering=" in capsys.readouterr().out


def test_experiment_kde_command(capsys):
    assert main(["experiment-kde", "--seeds", "1", "--m", "20000"]) == 0
    assert "side=" in capsys.readouterr().out
