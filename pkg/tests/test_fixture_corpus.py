"""The shipped document corpus parses, verifies, solves, and gradchecks."""

import pathlib

import numpy as np
import pytest

from conftest import GRADCHECK
from diffcone.io import load_values, parse_problem
from diffcone.layer import Layer
from diffcone.problem import check_dpp

CORPUS = pathlib.Path(__file__).resolve().parents[1] / "fixtures"
NAMES = sorted(p.name[:-len(".problem.json")]
               for p in CORPUS.glob("*.problem.json"))


def test_corpus_is_present():
    assert len(NAMES) == 6


@pytest.mark.parametrize("name", NAMES)
def test_corpus_problem_verifies_and_solves(name):
    problem = parse_problem((CORPUS / f"{name}.problem.json").read_text())
    assert check_dpp(problem).valid
    values = load_values((CORPUS / f"{name}.values.json").read_text(), problem)
    layer = Layer.compile(problem, GRADCHECK)
    result = layer.forward(values)
    assert result.ok, f"{name}: {result.status}"
    cot = {name_: np.ones(slot.dims) for name_, slot in
           zip(layer.variable_order, layer.asa.variable_layout)}
    grads, _ = layer.backward(result, cot)
    for pname in layer.parameter_order:
        assert np.all(np.isfinite(np.atleast_1d(grads[pname])))
