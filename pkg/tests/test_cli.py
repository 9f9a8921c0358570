"""Tests for the command-line interface."""

import json

import pytest

from src import cli, config


@pytest.fixture(autouse=True)
def temp_config(tmp_path, monkeypatch):
    """Keep the user's config file out of the tests."""
    config_file = tmp_path / "config.json"
    monkeypatch.setattr(config, "get_config_file", lambda: config_file)
    return config_file


@pytest.fixture
def walk_file(tmp_path):
    path = tmp_path / "walk.json"
    assert cli.run(["example", "walk", "--p", "0.3", "--emit", str(path)]) == cli.EXIT_VERIFIED
    return path


@pytest.fixture
def chain_file(tmp_path):
    path = tmp_path / "chain.json"
    assert cli.run(["example", "chain", "--kind", "two-state", "--emit", str(path)]) == 0
    return path


def test_no_command_prints_help(capsys):
    assert cli.run([]) == 0
    assert "usage: qcert" in capsys.readouterr().out


def test_unknown_option_is_input_error():
    assert cli.run(["analyze", "--bogus"]) == cli.EXIT_INPUT


def test_walk_example(capsys, walk_file):
    out = capsys.readouterr().out
    assert "bound 2√(pq)" in out
    assert "0.916515" in out
    assert walk_file.exists()


def test_walk_example_rejects_upward_drift(capsys):
    assert cli.run(["example", "walk", "--p", "0.6"]) == cli.EXIT_INPUT
    assert "0 < p < 1/2" in capsys.readouterr().err


def test_certify_walk(capsys, tmp_path, walk_file):
    report_file = tmp_path / "report.json"
    code = cli.run(["certify", "--kernel", str(walk_file), "--out", str(report_file)])
    out = capsys.readouterr().out

    assert code == cli.EXIT_VERIFIED
    assert "✓ drift" in out
    assert "✓ minorization" in out
    report = json.loads(report_file.read_text())
    assert report["re_upper"]["hi"] == pytest.approx(0.9165151, abs=1e-6)
    assert report["verification"] == {"drift": True, "minorization": True}


def test_certify_perturbed_drift(capsys, tmp_path, walk_file):
    data = json.loads(walk_file.read_text())
    drift = data["certificates"]["drift"]
    drift["eta"] = drift["eta"] * 0.99
    drift_file = tmp_path / "drift.json"
    drift_file.write_text(json.dumps(drift))

    code = cli.run(["certify", "--kernel", str(walk_file), "--drift", str(drift_file)])
    out = capsys.readouterr().out

    assert code == cli.EXIT_FAILED
    assert "✗ drift" in out
    assert '"x": 0' in out


def test_certify_without_certificates(capsys, chain_file):
    assert cli.run(["certify", "--kernel", str(chain_file)]) == cli.EXIT_INPUT
    assert "drift and minorization" in capsys.readouterr().err


def test_certify_synthesizes_for_finite_chain(capsys, chain_file):
    code = cli.run(["certify", "--kernel", str(chain_file), "--synthesize"])
    out = capsys.readouterr().out
    assert code == cli.EXIT_VERIFIED
    assert "✓ renewal_identity" in out
    assert "verdict          quasi-compact" in out


def test_certify_respects_enumeration_limit(capsys, chain_file):
    assert cli.run(["config", "set", "enumeration_limit", "10"]) == 0
    capsys.readouterr()
    assert cli.run(["certify", "--kernel", str(chain_file), "--synthesize"]) == cli.EXIT_VERIFIED
    assert "renewal_identity" not in capsys.readouterr().out


def test_malformed_spec(capsys, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "space": {"type": "finite", "size": 2},\n  "rows": [\n')
    assert cli.run(["analyze", "--kernel", str(path)]) == cli.EXIT_INPUT
    assert "line" in capsys.readouterr().err


def test_missing_spec(capsys, tmp_path):
    assert cli.run(["analyze", "--kernel", str(tmp_path / "nope.json")]) == cli.EXIT_INPUT
    assert "cannot read" in capsys.readouterr().err


def test_analyze_chain(capsys, chain_file):
    assert cli.run(["analyze", "--kernel", str(chain_file)]) == cli.EXIT_VERIFIED
    out = capsys.readouterr().out
    assert "verdict          quasi-compact" in out
    assert "oracle |λ|" in out


def test_analyze_walk_with_weight(capsys, walk_file):
    code = cli.run(["analyze", "--kernel", str(walk_file), "--weight", "geometric:1.5", "--window", "100"])
    assert code in (cli.EXIT_VERIFIED, cli.EXIT_FAILED)
    assert "r_e upper bound" in capsys.readouterr().out


def test_analyze_bad_weight(capsys, chain_file):
    assert cli.run(["analyze", "--kernel", str(chain_file), "--weight", "geometric:x"]) == cli.EXIT_INPUT
    assert "geometric:Z" in capsys.readouterr().err


def test_spectrum(capsys, chain_file, walk_file):
    assert cli.run(["spectrum", "--kernel", str(chain_file)]) == cli.EXIT_VERIFIED
    out = capsys.readouterr().out
    assert "2 eigenvalues" in out
    assert "|λ| = 1.000000000000" in out
    assert "|λ| = 0.700000000000" in out

    assert cli.run(["spectrum", "--kernel", str(walk_file)]) == cli.EXIT_INPUT
    assert "--allow-truncation" in capsys.readouterr().err

    code = cli.run(["spectrum", "--kernel", str(walk_file), "--allow-truncation", "--window", "30", "--top", "3"])
    assert code == cli.EXIT_VERIFIED
    assert "31 eigenvalues" in capsys.readouterr().out


def test_ergodic(capsys, tmp_path, chain_file):
    report_file = tmp_path / "ergodic.json"
    code = cli.run(["ergodic", "--kernel", str(chain_file), "--n-max", "100", "--out", str(report_file)])
    out = capsys.readouterr().out

    assert code == cli.EXIT_VERIFIED
    assert "(0.666667, 0.333333)" in out
    assert "period d         1" in out
    assert report_file.exists()


def test_ergodic_periodic_chain(capsys, tmp_path):
    path = tmp_path / "swap.json"
    assert cli.run(["example", "chain", "--kind", "swap", "--emit", str(path)]) == 0
    assert cli.run(["ergodic", "--kernel", str(path), "--n-max", "20"]) == cli.EXIT_VERIFIED
    assert "period d         2" in capsys.readouterr().out


def test_chain_prints_spec(capsys):
    assert cli.run(["example", "chain", "--kind", "swap"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["space"] == {"type": "finite", "size": 2}
    assert data["markov"] is True


def test_conze_raugi(capsys):
    assert cli.run(["example", "conze-raugi", "--lam", "0.4"]) == cli.EXIT_VERIFIED
    assert "holds" in capsys.readouterr().out

    assert cli.run(["example", "conze-raugi", "--u", "sine"]) == cli.EXIT_FAILED
    assert "fails" in capsys.readouterr().out

    assert cli.run(["example", "conze-raugi", "--lam", "1.0"]) == cli.EXIT_INPUT


def test_config_commands(capsys, temp_config):
    assert cli.run(["config", "set", "n_power", "16"]) == 0
    assert "✓ Set n_power = 16" in capsys.readouterr().out
    assert json.loads(temp_config.read_text())["n_power"] == 16

    assert cli.run(["config", "get", "n_power"]) == 0
    assert capsys.readouterr().out.strip() == "16"

    assert cli.run(["config", "show"]) == 0
    assert "n_power: 16" in capsys.readouterr().out

    assert cli.run(["config", "set", "n_power", "lots"]) == cli.EXIT_INPUT
    assert cli.run(["config", "get", "db_path"]) == cli.EXIT_INPUT

    assert cli.run(["config", "reset"]) == 0
    assert config.load_config().n_power == 32
