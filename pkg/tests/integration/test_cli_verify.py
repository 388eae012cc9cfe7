# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import csv

import pytest

SMALL = {
    "mode": "verify",
    "seed": 7,
    "verify": {
        "samples": 4096,
        "pairs": 5,
        "random_fields": 5,
        "grid_cells": 16,
        "probes": 20,
    },
}


def _config(output_dir, **overrides):
    config = {**SMALL, "output": str(output_dir)}
    config.update(overrides)
    return config


def test_small_suite_passes(run_cli, write_config, output_dir):
    code, result = run_cli("verify", "--config", write_config(_config(output_dir)))
    assert code == 0, result["msg"]
    assert result["failures"] == []
    with open(output_dir / "checks.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == result["checks"]
    names = {row["name"] for row in rows}
    for expected in (
        "sphere_moment[d=2,22]",
        "kernel[indicator].monotone",
        "kernel[indicator].localized",
        "kernel[conic].tail_decay",
        "kernel.planted_violator_rejected",
        "symmetry.K",
        "poincare_korn",
        "bilinear_bound",
        "patch_test",
        "scalar_flow.energy",
    ):
        assert expected in names
    assert all(row["passed"] == "true" for row in rows)
    assert (output_dir / "run.log").exists()
    assert not (output_dir / "FAILED").exists()


def test_planted_violator_fails_the_gate(run_cli, write_config, output_dir):
    config = _config(output_dir, kernel={"profile": "power"})
    code, result = run_cli("verify", "--config", write_config(config))
    assert code == 1
    assert "kernel[power].monotone" in result["failures"]
    assert "kernel.planted_violator_rejected" not in result["failures"]
    assert (output_dir / "FAILED").exists()


def test_unknown_key_is_a_configuration_error(run_cli, write_config, output_dir):
    text = f"output: {output_dir}\nkernel:\n  horizn: 0.1\n"
    code, result = run_cli("verify", "--config", write_config(text))
    assert code == 2
    assert "config.yml:3: kernel.horizn: unknown key" in result["msg"]
    marker = (output_dir / "FAILED").read_text(encoding="utf-8")
    assert "kernel.horizn" in marker


def test_mode_must_match_the_command(run_cli, write_config, output_dir):
    config = {"mode": "simulate", "output": str(output_dir)}
    code, result = run_cli("verify", "--config", write_config(config))
    assert code == 2
    assert "config.yml:1: mode" in result["msg"]
    assert result["error"]["Exit Code"] == 2


@pytest.mark.parametrize(
    "block, key",
    [
        ({"verify": {"probes": 5}}, "verify.probes"),
        ({"material": {"alpha": -1.0}}, "material.alpha"),
        ({"domain": {"lower": [0.0, 0.0, 0.0]}}, "domain.lower"),
    ],
)
def test_bad_values_name_the_key(run_cli, write_config, output_dir, block, key):
    code, result = run_cli("verify", "--config", write_config(_config(output_dir, **block)))
    assert code == 2
    assert key in result["msg"]


def test_missing_config_file(run_cli, tmp_path):
    code, result = run_cli("verify", "--config", str(tmp_path / "absent.yml"))
    assert code == 2
    assert "cannot read config" in result["msg"]


def test_flag_beats_environment(run_cli, write_config, tmp_path, monkeypatch):
    monkeypatch.setenv("PERIKV_OUTPUT", str(tmp_path / "from-env"))
    flagged = tmp_path / "from-flag"
    path = write_config("kernel:\n  horizn: 0.1\n")
    code, _ = run_cli("verify", "--config", path, "--output", str(flagged))
    assert code == 2
    assert (flagged / "FAILED").exists()
    assert not (tmp_path / "from-env").exists()


def test_environment_beats_file(run_cli, write_config, tmp_path, monkeypatch):
    monkeypatch.setenv("PERIKV_OUTPUT", str(tmp_path / "from-env"))
    path = write_config(f"output: {tmp_path / 'from-file'}\nkernel:\n  horizn: 0.1\n")
    code, _ = run_cli("verify", "--config", path)
    assert code == 2
    assert (tmp_path / "from-env" / "FAILED").exists()
    assert not (tmp_path / "from-file").exists()
