"""Shared fixtures and the acceptance summary printed after the run."""

from __future__ import annotations

import re

import numpy as np
import pytest

from envcalvi import simgen
from envcalvi.predictor import PredictorEnvSpec, PredictorPriors
from envcalvi.response import ResponseEnvSpec, ResponsePriors

CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_outcomes: dict = {}


@pytest.fixture
def rng():
    return simgen.rng_for(12345)


@pytest.fixture(scope="session")
def response_small():
    spec = ResponseEnvSpec(3, 2, 1)
    ds, truth = simgen.gen_response(spec, 7, 120)
    return spec, ds, truth, ResponsePriors.vague(spec)


@pytest.fixture(scope="session")
def predictor_small():
    spec = PredictorEnvSpec(2, 3, 1)
    ds, truth = simgen.gen_predictor(spec, 7, 150)
    return spec, ds, truth, PredictorPriors.vague(spec)


def random_spd(rng, d, scale=1.0):
    M = rng.standard_normal((d, d))
    return scale * (M @ M.T / max(d, 1) + np.eye(d))


def pytest_runtest_logreport(report):
    match = CRITERION.search(report.nodeid)
    if not match:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("measured", "")
        num = int(match.group(1))
        name, outcome, prior = _outcomes.get(num, (match.group(2).replace("_", " "), "passed", ""))
        # parametrized criteria fail if any case fails
        outcome = report.outcome if outcome == "passed" else outcome
        _outcomes[num] = (name, outcome, "; ".join(d for d in (prior, detail) if d))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_outcomes):
        name, outcome, detail = _outcomes[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {num:2d} {status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
