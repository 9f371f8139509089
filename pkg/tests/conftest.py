import json

import numpy as np
import pytest

from hetchoice import reference as ref
from hetchoice.dataset import Dataset, VariableDef
from hetchoice.modelspec import bind_spec, parse_model_spec

TOY_SCHEMA = (
    VariableDef("x1", "continuous"),
    VariableDef("x2", "continuous"),
    VariableDef("d", "binary"),
    VariableDef("w", "continuous"),
)


def toy_dataset(rng, n_ind=5, T=3, y=True, sizes=None):
    """Small random panel; ``w`` is constant within an individual."""
    sizes = np.full(n_ind, T) if sizes is None else np.asarray(sizes)
    n = int(sizes.sum())
    ids = np.repeat(np.arange(1, len(sizes) + 1), sizes)
    covs = {
        "x1": rng.normal(size=n),
        "x2": rng.normal(size=n),
        "d": rng.integers(0, 2, n).astype(float),
        "w": np.repeat(rng.normal(size=len(sizes)), sizes),
    }
    choice = rng.integers(0, 2, n) if y else None
    return Dataset(TOY_SCHEMA, ids, rng.integers(1, 17, n), covs, choice_y=choice)


def u(coef, variable):
    return {"coef": coef, "variable": variable}


def spec_json(family, classes, membership=None, thresholds=None, draws=None):
    doc = {"family": family, "classes": classes}
    if membership is not None:
        doc["membership"] = membership
    if thresholds is not None:
        doc["thresholds"] = thresholds
    if draws is not None:
        doc["draws"] = draws
    return json.dumps(doc)


def toy_spec(family="BL", n_classes=1, random=(), membership_vars=("CONSTANT", "w")):
    """Every class uses ASC, x1, x2; ``random`` lists random-coefficient means (or variables)."""
    classes = []
    for z in range(n_classes):
        c = {"name": f"C{z + 1}", "utilities": [u("ASC", "CONSTANT"), u("B1", "x1"), u("B2", "x2")]}
        rc = []
        for item in random:
            if item in ("B1", "B2"):
                rc.append({"mean": item, "sd": f"{item}_S"})
            else:
                rc.append({"variable": item, "sd": f"{item}_S"})
        if rc:
            c["random_coefs"] = rc
        classes.append(c)
    membership = None
    if n_classes > 1:
        membership = {f"C{z + 1}": [u(f"A{j}", v) for j, v in enumerate(membership_vars)]
                      for z in range(n_classes - 1)}
    return parse_model_spec(spec_json(family, classes, membership))


@pytest.fixture(scope="session")
def survey_data():
    return ref.survey_dataset()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# lines printed by the acceptance suite, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
