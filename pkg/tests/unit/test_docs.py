# -*- coding: utf-8 -*-
# Copyright: (c) 2026, peridynamic-kv contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import pytest
import yaml

from peridynamic_kv.doc_fragments.common import ModuleDocFragment
from peridynamic_kv.modules import simulate, sweep, verify

MODULES = [verify, simulate, sweep]


def _documented(module):
    options = dict(yaml.safe_load(ModuleDocFragment.DOCUMENTATION)["options"])
    doc = yaml.safe_load(module.DOCUMENTATION)
    assert doc["extends_documentation_fragment"] == ["peridynamic_kv.common"]
    options.update(doc["options"])
    return options


def _compare(documented, spec, path=""):
    assert set(documented) == set(spec), path
    for name, option in documented.items():
        where = f"{path}{name}"
        expected = spec[name]
        assert option["type"] == expected["type"], where
        assert option.get("default") == expected.get("default"), where
        if "choices" in option:
            assert option["choices"] == expected["choices"], where
        if "suboptions" in option:
            _compare(option["suboptions"], expected["options"], where + ".")


@pytest.mark.parametrize("module", MODULES, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_documentation_matches_the_argument_spec(module):
    _compare(_documented(module), module.argument_spec())


@pytest.mark.parametrize("module", MODULES, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_examples_and_return_values_parse(module):
    examples = yaml.safe_load(module.EXAMPLES)
    assert examples
    options = set(_documented(module))
    for example in examples:
        assert example["mode"] == module.__name__.rsplit(".", 1)[-1]
        assert set(example) - {"name"} <= options
    assert isinstance(yaml.safe_load(module.RETURN), dict)
