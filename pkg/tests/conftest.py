# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import json

import numpy as np
import pytest
import yaml

from peridynamic_kv import cli
from peridynamic_kv.module_utils.geometry import Domain, build_grid
from peridynamic_kv.module_utils.kernels import make_kernel
from peridynamic_kv.module_utils.nonlocal_model import MaterialParams


@pytest.fixture
def unit_square():
    return Domain.unit(2, 0.2)


@pytest.fixture
def small_grid(unit_square):
    """h = 0.2 at h / dx = 4: 29 x 29 nodes, 19 x 19 of them free."""
    return build_grid(unit_square, 0.05)


@pytest.fixture
def indicator_kernel():
    return make_kernel("indicator", 2, 0.2)


@pytest.fixture
def material():
    return MaterialParams(alpha=2.0, beta=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260417)


@pytest.fixture
def free_field(small_grid, rng):
    """Random displacement values, zero on the collar."""

    def _field():
        values = rng.standard_normal((small_grid.n_nodes, 2))
        values[~small_grid.interior_mask] = 0.0
        return values

    return _field


@pytest.fixture
def write_config(tmp_path):
    def _write(data, name="config.yml"):
        path = tmp_path / name
        text = data if isinstance(data, str) else yaml.safe_dump(data, sort_keys=False)
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def output_dir(tmp_path):
    return tmp_path / "output"


@pytest.fixture
def run_cli(capsys):
    """Run the CLI in-process; returns the exit code and the JSON summary."""

    def _run(*argv, **kwargs):
        code = cli.main(list(argv), **kwargs)
        lines = capsys.readouterr().out.strip().splitlines()
        return code, json.loads(lines[-1])

    return _run
