# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import csv
import math

import numpy as np
import pytest
import scipy.sparse.linalg

from peridynamic_kv.module_utils.nonlocal_model import OperatorPair


def _config(output_dir, field="bubble", time=None, **extra):
    config = {
        "mode": "simulate",
        "output": str(output_dir),
        "kernel": {"horizon": 0.1, "ratio": 2},
        "time": {"t_final": 0.05, "dt": 0.01, **(time or {})},
        "initial_field": {"name": field},
    }
    config.update(extra)
    return config


def _rows(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _scalar_flow(params):
    return OperatorPair.from_matrices([[1.0]], [[1.0]]), np.ones(1)


def test_zero_field_stays_at_rest(run_cli, write_config, output_dir):
    code, result = run_cli("simulate", "--config", write_config(_config(output_dir, "zero")))
    assert code == 0, result["msg"]
    assert result["steps"] == 5
    assert result["energy"] == [0.0, 0.0]
    assert result["files"] == ["trajectory.csv", "field_0.csv", "field_5.csv"]
    assert result["quadrature"] == "moment"
    assert 0.0 < result["discrete_mass"] < 2.0
    assert result["mass_defect"] == pytest.approx(2.0 - result["discrete_mass"])
    assert result["decay_rate"] > 0.0
    rows = _rows(output_dir / "trajectory.csv")
    assert len(rows) == 6
    assert all(float(row["energy"]) == 0.0 for row in rows)
    snapshot = _rows(output_dir / "field_5.csv")
    assert list(snapshot[0]) == ["node", "x0", "x1", "u0", "u1"]
    assert all(float(row["u0"]) == 0.0 for row in snapshot)


def test_scalar_flow_matches_the_closed_form(run_cli, write_config, output_dir):
    config = _config(output_dir, time={"t_final": 1.0, "dt": 0.001, "solver": "direct"})
    code, result = run_cli(
        "simulate", "--config", write_config(config), pair_factory=_scalar_flow
    )
    assert code == 0, result["msg"]
    assert result["energy"][0] == 0.5
    assert result["energy"][1] == pytest.approx(0.5 * math.exp(-2.0), rel=1e-2)
    assert result["ede_residual"] < 0.5e-2
    assert result["solver_iterations"] == 0
    assert result["decay_rate"] == pytest.approx(1.0)
    assert result["quadrature"] is None
    rows = _rows(output_dir / "trajectory.csv")
    assert len(rows) == 1001
    quarter = 0.25 * (1.0 - math.exp(-2.0))
    assert float(rows[-1]["dissipation_integral"]) == pytest.approx(quarter, rel=1e-2)
    assert list(_rows(output_dir / "field_1000.csv")[0]) == ["node", "u"]


def test_ede_gate(run_cli, write_config, output_dir):
    config = _config(
        output_dir, time={"t_final": 1.0, "dt": 0.01, "ede_tolerance": 1e-4}
    )
    code, result = run_cli(
        "simulate", "--config", write_config(config), pair_factory=_scalar_flow
    )
    assert code == 1
    assert "relative EDE residual" in result["msg"]
    assert result["ede_residual"] > 1e-4
    assert (output_dir / "FAILED").exists()
    # partial artifacts stay next to the marker
    assert (output_dir / "trajectory.csv").exists()


def test_solver_breakdown_exits_one(run_cli, write_config, output_dir, monkeypatch):
    def _broken(*args, **kwargs):
        raise np.linalg.LinAlgError("breakdown")

    monkeypatch.setattr(scipy.sparse.linalg, "cg", _broken)
    code, result = run_cli(
        "simulate", "--config", write_config(_config(output_dir)), pair_factory=_scalar_flow
    )
    assert code == 1
    assert result["error"]["Reason"] == "SolverError"
    assert result["error"]["Iterations"] == 0
    assert "breakdown" in result["msg"]
    assert (output_dir / "FAILED").exists()

def test_local_crank_nicolson(run_cli, write_config, output_dir):
    config = _config(
        output_dir,
        time={"scheme": "theta", "theta": 0.5, "solver": "direct", "snapshots": 1},
        model="local",
        reference={"mesh_spacing": 0.125},
    )
    code, result = run_cli("simulate", "--config", write_config(config))
    assert code == 0, result["msg"]
    assert result["ede_residual"] < 1e-6
    assert result["energy"][1] < result["energy"][0]
    assert result["files"] == ["trajectory.csv", "field_5.csv"]
    snapshot = _rows(output_dir / "field_5.csv")
    assert len(snapshot) == 81


def test_rigid_initial_field_is_rejected(run_cli, write_config, output_dir):
    code, result = run_cli("simulate", "--config", write_config(_config(output_dir, "rigid")))
    assert code == 2
    assert result["error"]["Reason"] == "InitialDataError"
    assert "does not vanish" in result["msg"]


def test_time_grid_must_divide(run_cli, write_config, output_dir):
    config = _config(output_dir, time={"t_final": 0.05, "dt": 0.03})
    code, result = run_cli("simulate", "--config", write_config(config))
    assert code == 2
    assert "not a positive integer" in result["msg"]


def test_runs_are_reproducible(run_cli, write_config, tmp_path):
    outputs = [tmp_path / "first", tmp_path / "second"]
    for index, output in enumerate(outputs):
        config = _config(output, time={"scheme": "theta", "theta": 0.5})
        code, _ = run_cli("simulate", "--config", write_config(config, f"run{index}.yml"))
        assert code == 0
    for name in ("trajectory.csv", "field_0.csv", "field_5.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


@pytest.mark.slow
def test_acceptance_flow_on_a_fine_grid(run_cli, write_config, output_dir):
    config = {
        "mode": "simulate",
        "output": str(output_dir),
        "kernel": {"horizon": 0.0625, "ratio": 4},
        "material": {"alpha": 2.0, "beta": 1.0},
        "time": {"t_final": 0.5, "dt": 0.001, "sample_every": 10},
        "initial_field": {"name": "product-of-sines"},
    }
    code, result = run_cli("simulate", "--config", write_config(config), "--threads", "2")
    assert code == 0, result["msg"]
    assert result["ede_residual"] < 1e-2
    energies = [float(row["energy"]) for row in _rows(output_dir / "trajectory.csv")]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert energies[-1] < energies[0]
