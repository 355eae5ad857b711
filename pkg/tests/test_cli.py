import json

import numpy as np
import pytest

from dpal.cli import main
from dpal.data import random_attribute_table
from dpal.mechanisms import bounded_noise_adversary, noiseless
from dpal.queries import MarginalQuery, marginal_query_evaluate
from dpal.report import canonical_json


@pytest.mark.property
def test_lp_decode_attack_command(tmp_path, capsys):
    argv = ["attack", "lp-decode", "--d", "32", "--k", "128", "--alpha", "1", "--gamma", "0.01",
            "--seed", "7"]
    assert main(argv + ["--output-dir", str(tmp_path / "a")]) == 0
    assert main(argv + ["--output-dir", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "attack-lp-decode.json").read_bytes()
    assert a == (tmp_path / "b" / "attack-lp-decode.json").read_bytes()
    doc = json.loads(a)
    assert doc["result"]["success"] is True
    assert doc["seed"] == 7 and len(doc["config_hash"]) == 64 and "numpy" in doc["versions"]
    assert "elapsed" in (tmp_path / "a" / "attack-lp-decode.csv").read_text()


def test_missing_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as e:
        main(["attack", "lp-decode", "--k", "10"])
    assert e.value.code == 2


def test_experiment_command_and_env_output_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("DPAL_OUTPUT_DIR", str(tmp_path))
    monkeypatch.setenv("DPAL_THREADS", "2")
    assert main(["chi-square-tail", "--trials", "200", "--k", "50", "--seed", "3"]) == 0
    doc = json.loads((tmp_path / "chi-square-tail.json").read_text())
    assert doc["config"]["trials"] == 200 and doc["seed"] == 3
    assert len((tmp_path / "chi-square-tail.csv").read_text().splitlines()) == 201


def test_failed_assertion_exit_code(tmp_path, capsys):
    assert main(["rademacher-tail", "--trials", "2000", "--output-dir", str(tmp_path)]) == 1
    assert "FAIL rademacher-tail" in capsys.readouterr().out


def test_run_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "hadamard-sigma", "trials": 3,
                               "d_primes": [8, 16], "seed": 1}))
    assert main(["run", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "hadamard-sigma.json").read_text())["seed"] == 1


@pytest.mark.parametrize("body", [{"experiment": "nope"}, {"experiment": "chi-square-tail",
                                                           "unknown_knob": 1}, {"k": 3}])
def test_bad_config(tmp_path, capsys, body):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(body))
    assert main(["run", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 3
    assert "error" in capsys.readouterr().err


def test_resource_guard(tmp_path, capsys):
    code = main(["attack", "exhaustive-majority", "--d", "10", "--n", "40", "--k", "5",
                 "--tol", "1", "--eta", "0.25", "--output-dir", str(tmp_path)])
    assert code == 3
    assert "estimate" in capsys.readouterr().err


def test_exhaustive_and_attribute_commands(tmp_path, capsys):
    assert main(["attack", "exhaustive-allcoords", "--d", "3", "--n", "6", "--k", "23",
                 "--theta", "1.5", "--output-dir", str(tmp_path)]) == 0
    assert main(["attack", "attribute", "--n", "8", "--d-prime", "12",
                 "--output-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "attack-attribute.json").read_text())
    assert doc["result"]["success"] is True


def test_validate_noiseless_and_heavy(tmp_path, capsys):
    d = tmp_path / "clean"
    assert main(["make-release", "--d", "8", "--k", "40", "--output-dir", str(d)]) == 0
    assert main(["validate", "--query", str(d / "query.json"), "--release",
                 str(d / "release.json"), "--output-dir", str(d)]) == 0
    assert json.loads((d / "audit.json").read_text())["verdict"] == "blatantly non-private"
    h = tmp_path / "heavy"
    main(["make-release", "--d", "8", "--k", "40", "--mechanism", "laplace", "--epsilon", "0.05",
          "--output-dir", str(h)])
    main(["validate", "--query", str(h / "query.json"), "--release", str(h / "release.json"),
          "--output-dir", str(h)])
    verdict = json.loads((h / "audit.json").read_text())["verdict"]
    assert verdict == "no reconstruction at configured thresholds"


def test_validate_truncated_release(tmp_path, capsys):
    main(["make-release", "--d", "4", "--k", "12", "--output-dir", str(tmp_path)])
    data = (tmp_path / "release.json").read_bytes()
    (tmp_path / "cut.json").write_bytes(data[:40])
    code = main(["validate", "--query", str(tmp_path / "query.json"), "--release",
                 str(tmp_path / "cut.json")])
    assert code == 3
    assert "byte_offset" in capsys.readouterr().err


def test_validate_schema_violation(tmp_path, capsys):
    main(["make-release", "--d", "4", "--k", "12", "--output-dir", str(tmp_path)])
    (tmp_path / "bad.json").write_text(json.dumps({"answers": "no"}))
    code = main(["validate", "--query", str(tmp_path / "query.json"), "--release",
                 str(tmp_path / "bad.json")])
    err = capsys.readouterr().err
    assert code == 3 and "mechanism" in err and "answers" in err


def test_validate_marginal_release(tmp_path, capsys):
    t = random_attribute_table(6, 5, 0).with_hidden(4)
    q = MarginalQuery(5, 2)
    (tmp_path / "q.json").write_text(canonical_json(q.to_json()))
    (tmp_path / "t.json").write_text(canonical_json(t.to_json()))
    (tmp_path / "r.json").write_text(canonical_json(
        noiseless(marginal_query_evaluate(t, q)).to_json()))
    assert main(["validate", "--query", str(tmp_path / "q.json"), "--release",
                 str(tmp_path / "r.json"), "--table", str(tmp_path / "t.json"),
                 "--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "marginals.csv").read_text().splitlines()
    assert len(lines) == q.k and lines[0].startswith("--000,")
